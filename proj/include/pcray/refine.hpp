#pragma once

#include <optional>
#include <vector>

#include "pcray/tracer.hpp"

namespace pcray {

struct RefineParams {
  double delta = 1e-4;    // convergence threshold on the gradient norm
  int rho = 2000;         // max iterations
  double step_size = 0.5;
  bool fresnel_enabled = true;
};

enum class RejectReason { ray_missed, not_converged, occluded, degenerate };

struct ReflectionNode {
  Vec3 c = Vec3::Zero();
  Vec3 u = Vec3::UnitX(), v = Vec3::UnitY(), normal = Vec3::UnitZ();
  double r = 0.0, s = 0.0;
  Label label = 0;
};

struct DiffractionNode {
  Vec3 c = Vec3::Zero();
  Vec3 w = Vec3::UnitX();
  double t = 0.0;
  double t_min = 0.0, t_max = 0.0;  // physical edge extent relative to c
  Label label = 0;
  std::uint32_t edge_index = 0;
};

struct PathNode {
  InteractionKind kind = InteractionKind::Reflection;
  ReflectionNode refl;
  DiffractionNode diff;

  Vec3 point() const {
    return kind == InteractionKind::Reflection
               ? Vec3(refl.c + refl.r * refl.u + refl.s * refl.v)
               : Vec3(diff.c + diff.t * diff.w);
  }
};

struct PathState {
  Vec3 tx = Vec3::Zero(), rx = Vec3::Zero();
  std::vector<PathNode> nodes;
};

struct ExactPath {
  std::uint32_t tx_id = 0;
  std::uint32_t rx_id = 0;
  Vec3 tx_position = Vec3::Zero();
  Vec3 rx_position = Vec3::Zero();
  std::vector<Interaction> interactions;  // refined positions, normals, labels
  double total_length = 0.0;
  double delay = 0.0;  // total_length / c
  bool converged = false;
  double gradient_norm = 0.0;
};

struct RefineOutcome {
  std::optional<ExactPath> path;
  RejectReason reason = RejectReason::not_converged;
};

PathState make_path_state(const PathCandidate& candidate, const Scene& scene);

double path_length(const PathState& state);

// Analytic partials of Eq. 2 per unknown, flattened in node order (r,s per
// reflection, t per diffraction). nullopt when consecutive points coincide.
std::optional<std::vector<double>> local_gradients(const PathState& state);

RefineOutcome refine_path(const PathCandidate& candidate, const VoxelGrid& grid,
                          const Scene& scene, const RefineParams& params);

// Keep the shortest path per (tx, rx, kind sequence, label sequence);
// survivors sorted by delay.
std::vector<ExactPath> dedup_by_label(std::vector<ExactPath> paths);

// Drop any path whose every interaction point sits inside the first Fresnel
// ellipsoid of the corresponding leg of an already-kept shorter path with the
// same (tx, rx, kind sequence).
std::vector<ExactPath> dedup_by_fresnel(std::vector<ExactPath> paths,
                                        double carrier_frequency_hz);

// Mirror law at reflections, Keller cosine condition at diffractions.
bool verify_reflection_law(const ExactPath& path, const Scene& scene, double tolerance);

}  // namespace pcray
