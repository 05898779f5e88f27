#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcray/geometry.hpp"

namespace pcray {

struct LabeledPoint {
  Vec3 position;
  Vec3 normal;  // unit length
  Label label;
};

// A straight wedge edge with the normals of its two adjacent faces.
// Both normals are perpendicular to the edge direction.
struct DiffractionEdge {
  Vec3 start;
  Vec3 end;
  Vec3 normal_a;
  Vec3 normal_b;
  Label label;  // disjoint from all surface labels

  Vec3 direction() const { return (end - start).normalized(); }
  double length() const { return (end - start).norm(); }
};

enum class RadioKind : std::uint8_t { Tx, Rx };

struct Radio {
  RadioKind kind;
  Vec3 position;
  std::uint32_t id;
};

struct Scene {
  std::vector<LabeledPoint> points;
  std::vector<DiffractionEdge> edges;
  std::vector<Radio> transmitters;
  std::vector<Radio> receivers;
  double carrier_frequency_hz = 60e9;

  double wavelength() const { return kSpeedOfLight / carrier_frequency_hz; }
};

struct Violation {
  std::string rule;
  std::size_t index;  // offending element within its list
  std::string detail;
};

// Reports every invariant violation; never throws. Empty report == valid.
std::vector<Violation> validate_scene(const Scene& scene);

// Axis-aligned box over all points, edge endpoints, and radios, expanded by
// `padding` on each side. Throws std::runtime_error("empty scene") when there
// is nothing to bound.
Aabb scene_bounds(const Scene& scene, double padding);

}  // namespace pcray
