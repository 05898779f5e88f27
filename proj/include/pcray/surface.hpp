#pragma once

#include <limits>
#include <optional>
#include <utility>

#include "pcray/scene.hpp"
#include "pcray/voxel_grid.hpp"

namespace pcray {

// Weighted-average surface model over one SurfacePoints IE payload (Eq. 1 style SDF).
struct SurfaceEstimate {
  Vec3 query_x = Vec3::Zero();
  Vec3 p_bar = Vec3::Zero();
  Vec3 n_bar = Vec3::UnitZ();
  double sdf_value = 0.0;
  double weight_sum = 0.0;
};

struct RayMarchState {
  Vec3 s_current = Vec3::Zero();
  Vec3 s0 = Vec3::Zero();
  Vec3 segment_end = Vec3::Zero();
  int steps_taken = 0;
};

struct SurfaceHit {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Label label = 0;
  double distance_along_ray = 0.0;
};

// Gaussian weights with bandwidth h = subvoxel edge; underflow of the weight
// sum falls back to the nearest payload point.
SurfaceEstimate estimate_surface(const Vec3& x, const IntersectableEntity& ie,
                                 const VoxelGrid& grid, const Scene& scene);

// Sphere-trace style march across the IE segment: advance by |f_sdf|, stop on
// |f_sdf| <= hit_epsilon or a sign change (then bisect to tolerance). t_max
// truncates the marched span when the caller cannot accept farther hits.
std::optional<SurfaceHit> march_segment(const Vec3& origin, const Vec3& direction,
                                        const IntersectableEntity& ie, const VoxelGrid& grid,
                                        const Scene& scene,
                                        double t_max = std::numeric_limits<double>::infinity());

// Newton projection of x onto the IE surface; used where a marching ray stalls
// at grazing incidence. distance_along_ray is not meaningful here and is 0.
std::optional<SurfaceHit> project_to_surface(const Vec3& x, const IntersectableEntity& ie,
                                             const VoxelGrid& grid, const Scene& scene);

// Right-handed orthonormal {u, v, n}: u = normalize(a x n) with a the
// coordinate axis least aligned with n (ties resolved toward the higher index).
std::pair<Vec3, Vec3> local_frame(const Vec3& normal);

}  // namespace pcray
