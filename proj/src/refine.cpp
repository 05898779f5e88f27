#include "pcray/refine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pcray {

namespace {

constexpr double kTiny = 1e-12;
constexpr int kMaxHalvings = 8;

Vec3 node_point(const PathNode& n) { return n.point(); }

double chain_length(const Vec3& tx, const std::vector<Vec3>& pts, const Vec3& rx) {
  Vec3 prev = tx;
  double len = 0.0;
  for (const Vec3& p : pts) {
    len += (p - prev).norm();
    prev = p;
  }
  return len + (rx - prev).norm();
}

std::vector<Vec3> node_points(const PathState& state) {
  std::vector<Vec3> pts;
  pts.reserve(state.nodes.size());
  for (const PathNode& n : state.nodes) pts.push_back(node_point(n));
  return pts;
}

// SurfacePoints IEs whose sphere comes within `radius` of p.
std::vector<std::uint32_t> surface_ies_near(const VoxelGrid& grid, const Vec3& p,
                                            double radius) {
  std::vector<std::uint32_t> out;
  const Eigen::Vector3i lo = grid.clamp_to_grid(grid.voxel_of(p - Vec3::Constant(radius)));
  const Eigen::Vector3i hi = grid.clamp_to_grid(grid.voxel_of(p + Vec3::Constant(radius)));
  for (int z = lo.z(); z <= hi.z(); ++z) {
    for (int y = lo.y(); y <= hi.y(); ++y) {
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const VoxelCell& cell = grid.cell(Eigen::Vector3i(x, y, z));
        for (std::uint32_t i = cell.ie_begin; i < cell.ie_end; ++i) {
          const IntersectableEntity& ie = grid.ies[i];
          if (ie.kind != IeKind::SurfacePoints) continue;
          if ((ie.sphere_center - p).norm() <= radius + ie.sphere_radius) out.push_back(i);
        }
      }
    }
  }
  return out;
}

struct Reprojection {
  Vec3 position, normal;
  Label label;
};

// Marches and projections stop at |f| <= hit_epsilon, which would floor every
// refined length at that epsilon; a few extra Newton steps put the node on the
// surface to machine precision (one step exactly, for planar payloads).
void polish(Reprojection& re, const IntersectableEntity& ie, const VoxelGrid& grid,
            const Scene& scene) {
  if (ie.planar) {
    re.position -= (re.position - ie.plane_point).dot(ie.plane_normal) * ie.plane_normal;
    re.normal = ie.plane_normal;
    return;
  }
  for (int i = 0; i < 4; ++i) {
    const SurfaceEstimate est = estimate_surface(re.position, ie, grid, scene);
    re.position -= est.sdf_value * est.n_bar;
    re.normal = est.n_bar;
    if (std::abs(est.sdf_value) <= 1e-12) break;
  }
}

// Trace from the previous node toward the predicted point and rebase onto the
// nearest surface hit; same-label IEs take precedence, then any label. A
// marching stall falls back to Newton projection of the predicted point.
std::optional<Reprojection> reproject(const Vec3& prev, const Vec3& predicted, Label label,
                                      const VoxelGrid& grid, const Scene& scene) {
  const Vec3 diff = predicted - prev;
  const double dist = diff.norm();
  if (dist < kTiny) return std::nullopt;
  const Vec3 dir = diff / dist;

  const double radius = 2.0 * grid.subvoxel_edge();
  const auto candidates = surface_ies_near(grid, predicted, radius);

  for (const bool same_label_pass : {true, false}) {
    std::optional<Reprojection> best;
    std::uint32_t best_ie = 0;
    double best_t = std::numeric_limits<double>::max();
    for (std::uint32_t i : candidates) {
      const IntersectableEntity& ie = grid.ies[i];
      if (same_label_pass != (ie.label == label)) continue;
      const auto hit = march_segment(prev, dir, ie, grid, scene);
      if (!hit || hit->distance_along_ray >= best_t) continue;
      best_t = hit->distance_along_ray;
      best = Reprojection{hit->position, hit->normal, ie.label};
      best_ie = i;
    }
    if (best) {
      polish(*best, grid.ies[best_ie], grid, scene);
      return best;
    }
  }

  for (const bool same_label_pass : {true, false}) {
    std::optional<Reprojection> best;
    std::uint32_t best_ie = 0;
    double best_d = std::numeric_limits<double>::max();
    for (std::uint32_t i : candidates) {
      const IntersectableEntity& ie = grid.ies[i];
      if (same_label_pass != (ie.label == label)) continue;
      const double d = (ie.sphere_center - predicted).norm();
      if (d >= best_d) continue;
      const auto hit = project_to_surface(predicted, ie, grid, scene);
      if (!hit) continue;
      best_d = d;
      best = Reprojection{hit->position, hit->normal, ie.label};
      best_ie = i;
    }
    if (best) {
      polish(*best, grid.ies[best_ie], grid, scene);
      return best;
    }
  }
  return std::nullopt;
}

}  // namespace

PathState make_path_state(const PathCandidate& candidate, const Scene& scene) {
  PathState state;
  state.tx = candidate.tx_position;
  state.rx = candidate.rx_position;
  state.nodes.reserve(candidate.interactions.size());
  for (const Interaction& it : candidate.interactions) {
    PathNode node;
    node.kind = it.kind;
    if (it.kind == InteractionKind::Reflection) {
      node.refl.c = it.position;
      node.refl.normal = it.normal;
      auto [u, v] = local_frame(it.normal);
      node.refl.u = u;
      node.refl.v = v;
      node.refl.label = it.label;
    } else {
      const DiffractionEdge& edge = scene.edges[it.edge_index];
      node.diff.c = it.position;
      node.diff.w = edge.direction();
      node.diff.t_min = (edge.start - it.position).dot(node.diff.w);
      node.diff.t_max = (edge.end - it.position).dot(node.diff.w);
      node.diff.label = it.label;
      node.diff.edge_index = it.edge_index;
    }
    state.nodes.push_back(node);
  }
  return state;
}

double path_length(const PathState& state) {
  return chain_length(state.tx, node_points(state), state.rx);
}

std::optional<std::vector<double>> local_gradients(const PathState& state) {
  const auto pts = node_points(state);
  std::vector<double> grads;
  for (std::size_t k = 0; k < state.nodes.size(); ++k) {
    const Vec3 prev = k == 0 ? state.tx : pts[k - 1];
    const Vec3 next = k + 1 == state.nodes.size() ? state.rx : pts[k + 1];
    const Vec3 dp = pts[k] - prev;
    const Vec3 dn = pts[k] - next;
    const double lp = dp.norm(), ln = dn.norm();
    if (lp < kTiny || ln < kTiny) return std::nullopt;
    const Vec3 e_sum = dp / lp + dn / ln;
    const PathNode& node = state.nodes[k];
    if (node.kind == InteractionKind::Reflection) {
      grads.push_back(node.refl.u.dot(e_sum));
      grads.push_back(node.refl.v.dot(e_sum));
    } else {
      grads.push_back(node.diff.w.dot(e_sum));
    }
  }
  return grads;
}

RefineOutcome refine_path(const PathCandidate& candidate, const VoxelGrid& grid,
                          const Scene& scene, const RefineParams& params) {
  PathState state = make_path_state(candidate, scene);
  if (state.nodes.empty()) return {std::nullopt, RejectReason::degenerate};

  double f = path_length(state);
  double gnorm = 0.0;
  bool converged = false;

  for (int iter = 0; iter < params.rho; ++iter) {
    const auto grads = local_gradients(state);
    if (!grads) return {std::nullopt, RejectReason::degenerate};
    gnorm = 0.0;
    for (double g : *grads) gnorm += g * g;
    gnorm = std::sqrt(gnorm);
    if (gnorm < params.delta) {
      converged = true;
      break;
    }

    // Backtracking step on the pre-reprojection length.
    PathState trial = state;
    bool accepted = false;
    double step = params.step_size;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      trial = state;
      std::size_t gi = 0;
      for (PathNode& node : trial.nodes) {
        if (node.kind == InteractionKind::Reflection) {
          node.refl.r -= step * (*grads)[gi++];
          node.refl.s -= step * (*grads)[gi++];
        } else {
          node.diff.t = std::clamp(node.diff.t - step * (*grads)[gi++], node.diff.t_min,
                                   node.diff.t_max);
        }
      }
      if (path_length(trial) <= f + 1e-15) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) continue;  // no descent step found; retry from same state
    state = std::move(trial);

    // Reproject reflection nodes front to back onto the sampled surfaces.
    for (std::size_t k = 0; k < state.nodes.size(); ++k) {
      PathNode& node = state.nodes[k];
      if (node.kind != InteractionKind::Reflection) continue;
      const Vec3 prev = k == 0 ? state.tx : node_point(state.nodes[k - 1]);
      const Vec3 predicted = node_point(node);
      const auto re = reproject(prev, predicted, node.refl.label, grid, scene);
      if (!re) return {std::nullopt, RejectReason::ray_missed};
      node.refl.c = re->position;
      node.refl.normal = re->normal;
      auto [u, v] = local_frame(re->normal);
      node.refl.u = u;
      node.refl.v = v;
      node.refl.r = 0.0;
      node.refl.s = 0.0;
      node.refl.label = re->label;
    }
    f = path_length(state);
  }

  if (!converged) return {std::nullopt, RejectReason::not_converged};

  // Final per-segment visibility along the refined trajectory.
  const auto pts = node_points(state);
  Vec3 prev = state.tx;
  for (std::size_t k = 0; k <= pts.size(); ++k) {
    const Vec3 next = k < pts.size() ? pts[k] : state.rx;
    if (!segment_visible(prev, next, kNoIe, grid, scene)) {
      return {std::nullopt, RejectReason::occluded};
    }
    prev = next;
  }

  ExactPath path;
  path.tx_id = candidate.tx_id;
  path.rx_id = candidate.rx_id;
  path.tx_position = candidate.tx_position;
  path.rx_position = candidate.rx_position;
  path.interactions = candidate.interactions;
  for (std::size_t k = 0; k < state.nodes.size(); ++k) {
    Interaction& it = path.interactions[k];
    it.position = pts[k];
    if (state.nodes[k].kind == InteractionKind::Reflection) {
      it.normal = state.nodes[k].refl.normal;
      it.label = state.nodes[k].refl.label;
    }
  }
  path.total_length = chain_length(state.tx, pts, state.rx);
  path.delay = path.total_length / kSpeedOfLight;
  path.converged = true;
  path.gradient_norm = gnorm;
  return {path, RejectReason::not_converged};
}

namespace {

std::vector<Label> label_chain(const ExactPath& p) {
  std::vector<Label> labels;
  labels.reserve(p.interactions.size());
  for (const Interaction& it : p.interactions) labels.push_back(it.label);
  return labels;
}

std::vector<int> kind_chain(const ExactPath& p) {
  std::vector<int> kinds;
  kinds.reserve(p.interactions.size());
  for (const Interaction& it : p.interactions) kinds.push_back(static_cast<int>(it.kind));
  return kinds;
}

bool positions_lex_less(const ExactPath& a, const ExactPath& b) {
  for (std::size_t k = 0; k < std::min(a.interactions.size(), b.interactions.size()); ++k) {
    const Vec3& pa = a.interactions[k].position;
    const Vec3& pb = b.interactions[k].position;
    if (pa != pb) return lex_less(pa, pb);
  }
  return a.interactions.size() < b.interactions.size();
}

void sort_by_delay(std::vector<ExactPath>& paths) {
  std::sort(paths.begin(), paths.end(), [](const ExactPath& a, const ExactPath& b) {
    if (a.delay != b.delay) return a.delay < b.delay;
    if (a.tx_id != b.tx_id) return a.tx_id < b.tx_id;
    if (a.rx_id != b.rx_id) return a.rx_id < b.rx_id;
    return positions_lex_less(a, b);
  });
}

}  // namespace

std::vector<ExactPath> dedup_by_label(std::vector<ExactPath> paths) {
  using Key = std::tuple<std::uint32_t, std::uint32_t, std::vector<int>, std::vector<Label>>;
  std::map<Key, std::size_t> best;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    Key key{paths[i].tx_id, paths[i].rx_id, kind_chain(paths[i]), label_chain(paths[i])};
    auto [it, inserted] = best.try_emplace(std::move(key), i);
    if (inserted) continue;
    const ExactPath& cur = paths[it->second];
    const ExactPath& cand = paths[i];
    if (cand.total_length < cur.total_length ||
        (cand.total_length == cur.total_length && positions_lex_less(cand, cur))) {
      it->second = i;
    }
  }
  std::vector<ExactPath> out;
  out.reserve(best.size());
  for (const auto& [key, idx] : best) out.push_back(paths[idx]);
  sort_by_delay(out);
  return out;
}

std::vector<ExactPath> dedup_by_fresnel(std::vector<ExactPath> paths,
                                        double carrier_frequency_hz) {
  const double lambda = kSpeedOfLight / carrier_frequency_hz;
  sort_by_delay(paths);

  std::vector<ExactPath> kept;
  for (ExactPath& p : paths) {
    bool duplicate = false;
    for (const ExactPath& q : kept) {
      if (q.tx_id != p.tx_id || q.rx_id != p.rx_id) continue;
      if (kind_chain(q) != kind_chain(p)) continue;
      bool all_inside = true;  // vacuous for LOS vs LOS
      for (std::size_t k = 0; k < p.interactions.size() && all_inside; ++k) {
        // Incoming leg of the kept path: (I_{k-1}, I_k).
        const Vec3 a = k == 0 ? q.tx_position : q.interactions[k - 1].position;
        const Vec3 b = q.interactions[k].position;
        const Vec3& pt = p.interactions[k].position;
        all_inside = (pt - a).norm() + (pt - b).norm() <= (b - a).norm() + 0.5 * lambda;
      }
      if (all_inside) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(std::move(p));
  }
  return kept;
}

bool verify_reflection_law(const ExactPath& path, const Scene& scene, double tolerance) {
  Vec3 prev = path.tx_position;
  for (std::size_t k = 0; k < path.interactions.size(); ++k) {
    const Interaction& it = path.interactions[k];
    const Vec3 next =
        k + 1 < path.interactions.size() ? path.interactions[k + 1].position : path.rx_position;
    const Vec3 di = (it.position - prev).normalized();
    const Vec3 dr = (next - it.position).normalized();
    if (it.kind == InteractionKind::Reflection) {
      const double in_angle = std::acos(std::clamp(-di.dot(it.normal), -1.0, 1.0));
      const double out_angle = std::acos(std::clamp(dr.dot(it.normal), -1.0, 1.0));
      if (std::abs(in_angle - out_angle) > tolerance) return false;
    } else {
      const Vec3 w = scene.edges[it.edge_index].direction();
      if (std::abs(di.dot(w) - dr.dot(w)) > tolerance) return false;
    }
    prev = it.position;
  }
  return true;
}

}  // namespace pcray
