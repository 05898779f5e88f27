#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <vector>

#include "pcray/geometry.hpp"
#include "pcray/scene.hpp"

namespace pcray {

struct VoxelizationParams {
  double voxel_size = 0.5;        // edge length of a low-resolution voxel, m
  int division_factor = 2;        // D_v: subvoxels per voxel edge
  std::size_t max_cells = std::size_t(1) << 27;
};

enum class IeKind : std::uint8_t { SurfacePoints, EdgeSegment, Receiver };

// Sentinel march distance for grids without any IEs.
inline constexpr std::int32_t kMarchNoIes = std::numeric_limits<std::int32_t>::max();

// Subvoxel-bounded piece of the scene a ray can be received by: a group of
// same-label surface points, a clipped edge segment, or a receiver.
struct IntersectableEntity {
  IeKind kind;
  Label label;
  Vec3 reception_point;
  Vec3 sphere_center;    // subvoxel center
  double sphere_radius;  // half the subvoxel diagonal

  std::uint32_t point_begin = 0;  // SurfacePoints: range into VoxelGrid::point_indices
  std::uint32_t point_end = 0;
  Vec3 seg_start = Vec3::Zero();  // EdgeSegment: clipped piece
  Vec3 seg_end = Vec3::Zero();
  std::uint32_t edge_index = 0;   // EdgeSegment: index into Scene::edges
  std::uint32_t rx_id = 0;        // Receiver

  // Exactly coplanar payload with one shared normal: the weighted SDF reduces
  // to the plane distance for any weights, so marches take the O(1) route.
  bool planar = false;
  Vec3 plane_point = Vec3::Zero();
  Vec3 plane_normal = Vec3::UnitZ();

  std::uint32_t voxel = 0;     // linear index of the owning voxel
  std::uint32_t subvoxel = 0;  // linear subvoxel index within the voxel
};

struct VoxelCell {
  std::uint32_t ie_begin = 0;
  std::uint32_t ie_end = 0;
  std::int32_t march = kMarchNoIes;  // Chebyshev voxels to nearest IE voxel; 0 if occupied

  bool has_ies() const { return ie_begin != ie_end; }
};

struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  Eigen::Vector3i dims = Eigen::Vector3i::Zero();
  double voxel_size = 0.5;
  int division_factor = 2;

  std::vector<VoxelCell> cells;              // dims.x*dims.y*dims.z, x-major
  std::vector<IntersectableEntity> ies;      // grouped per voxel, canonical order
  std::vector<std::uint32_t> point_indices;  // SurfacePoints payload storage

  double subvoxel_edge() const { return voxel_size / division_factor; }
  double subvoxel_radius() const { return 0.5 * std::sqrt(3.0) * subvoxel_edge(); }
  double voxel_radius() const { return 0.5 * std::sqrt(3.0) * voxel_size; }
  double hit_epsilon() const { return 1e-4 * voxel_size; }

  std::size_t cell_count() const { return cells.size(); }

  bool in_bounds(const Eigen::Vector3i& v) const {
    return (v.array() >= 0).all() && (v.array() < dims.array()).all();
  }
  std::uint32_t linear_index(const Eigen::Vector3i& v) const {
    return static_cast<std::uint32_t>(v.x() + dims.x() * (v.y() + dims.y() * v.z()));
  }
  Eigen::Vector3i voxel_of(const Vec3& p) const {
    Vec3 rel = (p - origin) / voxel_size;
    return Eigen::Vector3i(static_cast<int>(std::floor(rel.x())),
                           static_cast<int>(std::floor(rel.y())),
                           static_cast<int>(std::floor(rel.z())));
  }
  Eigen::Vector3i clamp_to_grid(Eigen::Vector3i v) const {
    return v.cwiseMax(Eigen::Vector3i::Zero()).cwiseMin(dims - Eigen::Vector3i::Ones());
  }
  Vec3 voxel_center(const Eigen::Vector3i& v) const {
    return origin + (v.cast<double>() + Vec3::Constant(0.5).eval()) * voxel_size;
  }
  const VoxelCell& cell(const Eigen::Vector3i& v) const { return cells[linear_index(v)]; }
};

// Discretizes the scene: bins points per (subvoxel, label), clips edges to
// subvoxels, assigns one Receiver IE per RX, and fills march distances.
// Throws std::runtime_error("grid too large") past params.max_cells.
VoxelGrid build_grid(const Scene& scene, const VoxelizationParams& params);

// Exact Chebyshev distance transform over IE-occupied voxels (BFS over the
// 26-neighborhood). Grids without IEs keep kMarchNoIes everywhere.
void compute_march_distances(VoxelGrid& grid);

// Placement rule: payload centroid for surface groups, segment midpoint for
// edge pieces, the RX position for receivers.
Vec3 reception_point_of(const IntersectableEntity& ie, const VoxelGrid& grid, const Scene& scene);

}  // namespace pcray
