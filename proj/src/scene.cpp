#include "pcray/scene.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace pcray {

namespace {

constexpr double kUnitTol = 1e-6;
constexpr double kEdgePerpTol = 1e-3;

void check_radios(const std::vector<Radio>& radios, const char* kind_name,
                  std::vector<Violation>& out) {
  std::unordered_set<std::uint32_t> ids;
  for (std::size_t i = 0; i < radios.size(); ++i) {
    const Radio& r = radios[i];
    if (!is_finite(r.position)) {
      out.push_back({std::string(kind_name) + "_position_finite", i, "non-finite position"});
    }
    if (!ids.insert(r.id).second) {
      out.push_back({std::string(kind_name) + "_id_unique", i,
                     "duplicate id " + std::to_string(r.id)});
    }
  }
}

}  // namespace

std::vector<Violation> validate_scene(const Scene& scene) {
  std::vector<Violation> out;

  std::unordered_set<Label> surface_labels;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const LabeledPoint& p = scene.points[i];
    if (!is_finite(p.position)) {
      out.push_back({"point_position_finite", i, "non-finite position"});
    }
    if (std::abs(p.normal.norm() - 1.0) > kUnitTol) {
      out.push_back({"point_normal_unit", i,
                     "normal length " + std::to_string(p.normal.norm())});
    }
    surface_labels.insert(p.label);
  }

  for (std::size_t i = 0; i < scene.edges.size(); ++i) {
    const DiffractionEdge& e = scene.edges[i];
    const double len = (e.end - e.start).norm();
    if (!(len > 0.0)) {
      out.push_back({"edge_nondegenerate", i, "zero-length edge"});
      continue;  // direction undefined, skip dependent checks
    }
    const Vec3 w = (e.end - e.start) / len;
    if (std::abs(e.normal_a.norm() - 1.0) > kUnitTol) {
      out.push_back({"edge_normal_a_unit", i, "normal_a not unit"});
    }
    if (std::abs(e.normal_b.norm() - 1.0) > kUnitTol) {
      out.push_back({"edge_normal_b_unit", i, "normal_b not unit"});
    }
    if (std::abs(w.dot(e.normal_a)) > kEdgePerpTol) {
      out.push_back({"edge_normal_a_perpendicular", i,
                     "w.n_a = " + std::to_string(w.dot(e.normal_a))});
    }
    if (std::abs(w.dot(e.normal_b)) > kEdgePerpTol) {
      out.push_back({"edge_normal_b_perpendicular", i,
                     "w.n_b = " + std::to_string(w.dot(e.normal_b))});
    }
    // Identical face normals leave the wedge classification undefined.
    if ((e.normal_a - e.normal_b).norm() < 1e-9) {
      out.push_back({"edge_wedge_defined", i, "adjacent normals coincide"});
    }
    if (surface_labels.count(e.label) > 0) {
      out.push_back({"edge_label_disjoint", i,
                     "edge label " + std::to_string(e.label) + " collides with a surface label"});
    }
  }

  check_radios(scene.transmitters, "tx", out);
  check_radios(scene.receivers, "rx", out);
  if (scene.transmitters.empty()) {
    out.push_back({"has_transmitter", 0, "no transmitters"});
  }
  if (scene.receivers.empty()) {
    out.push_back({"has_receiver", 0, "no receivers"});
  }
  if (!(scene.carrier_frequency_hz > 0.0)) {
    out.push_back({"carrier_frequency_positive", 0, "frequency must be > 0"});
  }
  return out;
}

Aabb scene_bounds(const Scene& scene, double padding) {
  Aabb box;
  for (const LabeledPoint& p : scene.points) box.expand(p.position);
  for (const DiffractionEdge& e : scene.edges) {
    box.expand(e.start);
    box.expand(e.end);
  }
  for (const Radio& r : scene.transmitters) box.expand(r.position);
  for (const Radio& r : scene.receivers) box.expand(r.position);
  if (!box.valid()) throw std::runtime_error("empty scene");
  box.min -= Vec3::Constant(padding);
  box.max += Vec3::Constant(padding);
  return box;
}

}  // namespace pcray
