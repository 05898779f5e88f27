#include "pcray/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pcray {

namespace {

Vec3 mirror_point(const Vec3& p, const Vec3& plane_point, const Vec3& n) {
  return p - 2.0 * (p - plane_point).dot(n) * n;
}

// Rectangle-interior test in edge-vector coordinates.
bool inside_rect(const PlanarRect& rect, const Vec3& q, double margin) {
  const Vec3 rel = q - rect.corner;
  const double a = rel.dot(rect.e1) / rect.e1.squaredNorm();
  const double b = rel.dot(rect.e2) / rect.e2.squaredNorm();
  return a >= -margin && a <= 1.0 + margin && b >= -margin && b <= 1.0 + margin;
}

bool segment_occluded(const PlanarScene& scene, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  for (const PlanarRect& rect : scene.rectangles) {
    const Vec3 n = rect.normal();
    const double denom = d.dot(n);
    if (std::abs(denom) < 1e-15) continue;
    const double t = (rect.corner - a).dot(n) / denom;
    if (t <= 1e-9 || t >= 1.0 - 1e-9) continue;
    if (inside_rect(rect, a + t * d, -1e-9)) return true;
  }
  return false;
}

ExactPath make_exact(const PlanarScene& scene, const std::vector<Interaction>& interactions) {
  ExactPath path;
  path.tx_position = scene.tx;
  path.rx_position = scene.rx;
  path.interactions = interactions;
  Vec3 prev = scene.tx;
  double len = 0.0;
  for (const Interaction& it : interactions) {
    len += (it.position - prev).norm();
    prev = it.position;
  }
  len += (scene.rx - prev).norm();
  path.total_length = len;
  path.delay = len / kSpeedOfLight;
  path.converged = true;
  return path;
}

void enumerate_sequences(const PlanarScene& scene, int order, std::vector<int>& seq,
                         std::vector<ExactPath>& out) {
  if (static_cast<int>(seq.size()) == order) {
    // Mirror RX back to front: img[k] aims the segment leaving interaction k.
    std::vector<Vec3> img(order);
    Vec3 cur = scene.rx;
    for (int k = order - 1; k >= 0; --k) {
      const PlanarRect& rect = scene.rectangles[seq[k]];
      cur = mirror_point(cur, rect.corner, rect.normal());
      img[k] = cur;
    }

    std::vector<Interaction> interactions;
    Vec3 from = scene.tx;
    for (int k = 0; k < order; ++k) {
      const PlanarRect& rect = scene.rectangles[seq[k]];
      const Vec3 n = rect.normal();
      const Vec3 d = img[k] - from;
      const double denom = d.dot(n);
      if (std::abs(denom) < 1e-15) return;
      const double t = (rect.corner - from).dot(n) / denom;
      if (t <= 1e-12 || t >= 1.0 - 1e-12) return;
      const Vec3 p = from + t * d;
      if (!inside_rect(rect, p, 0.0)) return;
      if ((p - from).normalized().dot(n) >= 0.0) return;  // back-face hit
      interactions.push_back(
          Interaction{InteractionKind::Reflection, p, rect.label, n, kNoIe, 0});
      from = p;
    }

    Vec3 prev = scene.tx;
    for (const Interaction& it : interactions) {
      if (segment_occluded(scene, prev, it.position)) return;
      prev = it.position;
    }
    if (segment_occluded(scene, prev, scene.rx)) return;

    out.push_back(make_exact(scene, interactions));
    return;
  }
  for (int r = 0; r < static_cast<int>(scene.rectangles.size()); ++r) {
    if (!seq.empty() && seq.back() == r) continue;  // consecutive mirror is identity
    seq.push_back(r);
    enumerate_sequences(scene, order, seq, out);
    seq.pop_back();
  }
}

}  // namespace

std::vector<ExactPath> image_method_paths(const PlanarScene& scene, int max_order) {
  std::vector<ExactPath> out;
  if (!segment_occluded(scene, scene.tx, scene.rx)) {
    out.push_back(make_exact(scene, {}));
  }
  for (int order = 1; order <= max_order; ++order) {
    std::vector<int> seq;
    enumerate_sequences(scene, order, seq, out);
  }
  std::sort(out.begin(), out.end(),
            [](const ExactPath& a, const ExactPath& b) { return a.delay < b.delay; });
  return out;
}

Vec3 fermat_diffraction_point(const DiffractionEdge& edge, const Vec3& a, const Vec3& b) {
  const Vec3 w = edge.direction();
  const double len = edge.length();
  // Path length along the edge is convex, so its derivative is nondecreasing;
  // bisecting the derivative's sign change stays sharp where the length itself
  // flattens below rounding noise.
  auto slope = [&](double t) {
    const Vec3 q = edge.start + t * w;
    const double da = (q - a).norm();
    const double db = (q - b).norm();
    double g = 0.0;
    if (da > 0.0) g += (q - a).dot(w) / da;
    if (db > 0.0) g += (q - b).dot(w) / db;
    return g;
  };
  double lo = 0.0, hi = len;
  if (slope(lo) >= 0.0) return edge.start;
  if (slope(hi) <= 0.0) return edge.end;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (lo + hi);
    if (m <= lo || m >= hi) break;
    if (slope(m) <= 0.0) {
      lo = m;
    } else {
      hi = m;
    }
  }
  return edge.start + 0.5 * (lo + hi) * w;
}

namespace {

std::vector<Vec3> segment_directions(const ExactPath& p) {
  std::vector<Vec3> dirs;
  Vec3 prev = p.tx_position;
  for (const Interaction& it : p.interactions) {
    dirs.push_back((it.position - prev).normalized());
    prev = it.position;
  }
  dirs.push_back((p.rx_position - prev).normalized());
  return dirs;
}

bool paths_match(const ExactPath& a, const ExactPath& b, double angle_tol) {
  if (a.interactions.size() != b.interactions.size()) return false;
  for (std::size_t k = 0; k < a.interactions.size(); ++k) {
    if (a.interactions[k].kind != b.interactions[k].kind) return false;
  }
  const auto da = segment_directions(a);
  const auto db = segment_directions(b);
  for (std::size_t k = 0; k < da.size(); ++k) {
    if (angle_between(da[k], db[k]) >= angle_tol) return false;
  }
  return true;
}

std::vector<std::size_t> delay_order(const std::vector<ExactPath>& paths) {
  std::vector<std::size_t> idx(paths.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t i, std::size_t j) { return paths[i].delay < paths[j].delay; });
  return idx;
}

}  // namespace

MatchReport match_paths(const std::vector<ExactPath>& found,
                        const std::vector<ExactPath>& reference, double angle_tol) {
  MatchReport report;
  report.reference_matched.assign(reference.size(), false);
  std::vector<bool> used(found.size(), false);

  const auto ref_order = delay_order(reference);
  const auto found_order = delay_order(found);
  for (std::size_t ri : ref_order) {
    for (std::size_t fi : found_order) {
      if (used[fi]) continue;
      if (!paths_match(found[fi], reference[ri], angle_tol)) continue;
      used[fi] = true;
      report.reference_matched[ri] = true;
      ++report.matched_count;
      break;
    }
  }
  report.percent_matched =
      reference.empty() ? 100.0 : 100.0 * report.matched_count / reference.size();
  return report;
}

std::vector<LabeledPoint> sample_planar_scene(const PlanarScene& scene, double density,
                                              std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  std::vector<LabeledPoint> points;
  for (const PlanarRect& rect : scene.rectangles) {
    const double sqrt_density = std::sqrt(density);
    const int nu = std::max(1, static_cast<int>(std::lround(rect.e1.norm() * sqrt_density)));
    const int nv = std::max(1, static_cast<int>(std::lround(rect.e2.norm() * sqrt_density)));
    const Vec3 n = rect.normal();
    for (int i = 0; i < nu; ++i) {
      for (int j = 0; j < nv; ++j) {
        const double u = (i + jitter(rng)) / nu;
        const double v = (j + jitter(rng)) / nv;
        points.push_back(LabeledPoint{rect.corner + u * rect.e1 + v * rect.e2, n, rect.label});
      }
    }
  }
  return points;
}

Scene scene_from_planar(const PlanarScene& planar, double density, std::uint32_t seed) {
  Scene scene;
  scene.points = sample_planar_scene(planar, density, seed);
  scene.edges = planar.edges;
  scene.transmitters.push_back(Radio{RadioKind::Tx, planar.tx, 0});
  scene.receivers.push_back(Radio{RadioKind::Rx, planar.rx, 0});
  return scene;
}

}  // namespace pcray
