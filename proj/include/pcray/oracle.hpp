#pragma once

#include <cstdint>
#include <vector>

#include "pcray/refine.hpp"
#include "pcray/scene.hpp"

namespace pcray {

// Analytic reference world: finite rectangles plus straight diffraction edges.
struct PlanarRect {
  Vec3 corner = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();  // orthogonal edge vectors spanning the rectangle
  Vec3 e2 = Vec3::UnitY();
  Label label = 0;

  Vec3 normal() const { return e1.cross(e2).normalized(); }
  double area() const { return e1.norm() * e2.norm(); }
};

struct PlanarScene {
  std::vector<PlanarRect> rectangles;
  std::vector<DiffractionEdge> edges;
  Vec3 tx = Vec3::Zero();
  Vec3 rx = Vec3::Zero();
};

struct MatchReport {
  std::vector<bool> reference_matched;
  int matched_count = 0;
  double percent_matched = 0.0;  // of reference paths
};

// Image-method enumeration of reflection paths up to max_order (<= 3), plus
// the LOS path at order 0; exact and independently occlusion-checked.
std::vector<ExactPath> image_method_paths(const PlanarScene& scene, int max_order);

// Minimizer of |q-a| + |q-b| over the closed edge segment (ternary search).
Vec3 fermat_diffraction_point(const DiffractionEdge& edge, const Vec3& a, const Vec3& b);

// Greedy one-to-one matching in delay order: equal interaction count and kind
// sequence, every corresponding segment direction within angle_tol.
MatchReport match_paths(const std::vector<ExactPath>& found,
                        const std::vector<ExactPath>& reference, double angle_tol);

// Stratified jittered sampling of every rectangle at the given areal density.
std::vector<LabeledPoint> sample_planar_scene(const PlanarScene& scene, double density,
                                              std::uint32_t seed);

// Full scene assembly: sampled points, the planar edges, one TX and one RX.
Scene scene_from_planar(const PlanarScene& planar, double density, std::uint32_t seed);

}  // namespace pcray
