#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "pcray/scene.hpp"
#include "pcray/surface.hpp"
#include "pcray/voxel_grid.hpp"

namespace pcray {

inline constexpr std::uint32_t kNoIe = 0xffffffffu;

struct TraceParams {
  int max_interactions = 5;
  int kappa = 100;  // coarse-path cap per ordered label sequence
  double cone_apex_angle = deg_to_rad(1.0);
  int diffraction_ray_count = 360;
  int max_diffractions = 1;
};

struct SeparationPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // accepted side: (q - point)·normal >= 0
};

enum class InteractionKind { Reflection, Diffraction };

struct Interaction {
  InteractionKind kind = InteractionKind::Reflection;
  Vec3 position = Vec3::Zero();
  Label label = 0;
  Vec3 normal = Vec3::UnitZ();  // reflection only: surface normal at the hit
  std::uint32_t ie_index = kNoIe;
  std::uint32_t edge_index = 0;  // diffraction only: scene edge
};

struct ConicalRay {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double apex_angle = 0.0;
  std::vector<SeparationPlane> separation_planes;  // 1 reflected, 2 diffracted
  std::vector<Interaction> provenance;
  int diffraction_count = 0;
};

struct PathCandidate {
  std::uint32_t tx_id = 0;
  std::uint32_t rx_id = 0;
  Vec3 tx_position = Vec3::Zero();
  Vec3 rx_position = Vec3::Zero();
  std::vector<Interaction> interactions;
  double coarse_length = 0.0;
};

struct InitialHit {
  std::uint32_t ie_index = kNoIe;
  IeKind kind = IeKind::SurfacePoints;
  Vec3 position = Vec3::Zero();  // surface hit or edge reception point
  Vec3 normal = Vec3::UnitZ();   // SurfacePoints only
  Vec3 incoming = Vec3::UnitZ();
};

struct TransmissionResult {
  std::vector<PathCandidate> los_paths;
  std::vector<InitialHit> initial_hits;
};

struct Reception {
  std::uint32_t ie_index = kNoIe;
  Vec3 reception_point = Vec3::Zero();
  SurfaceHit surface_hit;  // valid when hit_valid (SurfacePoints receptions)
  bool hit_valid = false;
};

struct TraceDebug {
  std::vector<std::uint32_t> visited;    // voxels stepped through by the center ray
  std::vector<std::uint32_t> evaluated;  // voxels whose IEs were tested
};

// Straight-line visibility between two points. SurfacePoints IEs along the
// walk are marched; a hit blocks unless it lies within one subvoxel radius of
// either endpoint (the endpoints sit on surfaces themselves). target_ie and
// IEs whose sphere center is within one subvoxel diameter of an endpoint are
// exempt regardless of label.
bool segment_visible(const Vec3& origin, const Vec3& target, std::uint32_t target_ie,
                     const VoxelGrid& grid, const Scene& scene);

// Conservative cone vs sphere overlap test; apex at o, axis d, half-angle alpha.
bool cone_intersects_sphere(const Vec3& o, const Vec3& d, double alpha, const Vec3& c, double r);

TransmissionResult transmission_phase(const Radio& tx, const VoxelGrid& grid, const Scene& scene,
                                      const TraceParams& params);

// Mirror reflection with the origin lifted hit_epsilon off the surface and one
// separation plane culling everything behind it. Back-facing incidence
// (incoming·normal >= 0) is rejected. The apex angle is widened when the
// incoming leg (hit.distance_along_ray) is short: anchors sit on the subvoxel
// lattice, and a child cone narrower than that quantization loses every
// specular chain after one hop.
std::optional<ConicalRay> reflect_ray(const SurfaceHit& hit, const Vec3& incoming,
                                      const VoxelGrid& grid, const TraceParams& params);

// Keller cone at a point on a diffraction edge: diffraction_ray_count rays
// preserving incoming·w, each carrying two separation planes through the edge
// halfway in azimuth to its neighbors. Rays into the wedge solid are dropped;
// incidence nearly parallel to the edge yields no rays. incoming_leg widens
// the per-ray apex the same way as reflect_ray; the azimuth planes keep each
// ray's acceptance inside its own wedge, so the widening only stretches the
// cone along the Keller beta direction where edge-pitch quantization lives.
std::vector<ConicalRay> diffract_rays(const IntersectableEntity& ie, const Vec3& point,
                                      const Vec3& incoming, const Scene& scene,
                                      const VoxelGrid& grid, const TraceParams& params,
                                      double incoming_leg = std::numeric_limits<double>::infinity());

std::vector<Reception> voxel_cone_trace(const ConicalRay& ray, const VoxelGrid& grid,
                                        const Scene& scene, const TraceParams& params,
                                        TraceDebug* debug = nullptr);

std::vector<PathCandidate> propagate(const Radio& tx, const std::vector<InitialHit>& initial_hits,
                                     const VoxelGrid& grid, const Scene& scene,
                                     const TraceParams& params, int thread_count = 1);

}  // namespace pcray
