#include "pcray/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pcray/parallel.hpp"

namespace pcray {

namespace {

constexpr double kTiny = 1e-12;

// Amanatides-Woo voxel walk along origin + t*d, t in [t_begin, t_end],
// clipped against the grid box.
struct GridWalker {
  const VoxelGrid* grid = nullptr;
  Vec3 o = Vec3::Zero(), d = Vec3::UnitZ();
  double t_end = 0.0;
  Eigen::Vector3i v = Eigen::Vector3i::Zero();
  Eigen::Vector3i step = Eigen::Vector3i::Zero();
  Vec3 t_next = Vec3::Zero(), delta = Vec3::Zero();
  double t_entry = 0.0;
  bool active = false;

  void init(const VoxelGrid& g, const Vec3& origin, const Vec3& dir, double t0, double t1) {
    grid = &g;
    o = origin;
    d = dir;
    t_end = t1;
    active = false;

    // Slab clip against the grid box.
    double lo = t0, hi = t1;
    const Vec3 bmin = g.origin;
    const Vec3 bmax = g.origin + g.dims.cast<double>() * g.voxel_size;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(d[a]) < kTiny) {
        if (o[a] < bmin[a] || o[a] > bmax[a]) return;
        continue;
      }
      double ta = (bmin[a] - o[a]) / d[a];
      double tb = (bmax[a] - o[a]) / d[a];
      if (ta > tb) std::swap(ta, tb);
      lo = std::max(lo, ta);
      hi = std::min(hi, tb);
    }
    if (lo > hi) return;

    t_entry = lo;
    const Vec3 p = o + lo * d;
    for (int a = 0; a < 3; ++a) {
      v[a] = std::clamp(static_cast<int>(std::floor((p[a] - g.origin[a]) / g.voxel_size)), 0,
                        g.dims[a] - 1);
      if (d[a] > kTiny) {
        step[a] = 1;
        t_next[a] = (g.origin[a] + (v[a] + 1) * g.voxel_size - o[a]) / d[a];
        delta[a] = g.voxel_size / d[a];
      } else if (d[a] < -kTiny) {
        step[a] = -1;
        t_next[a] = (g.origin[a] + v[a] * g.voxel_size - o[a]) / d[a];
        delta[a] = -g.voxel_size / d[a];
      } else {
        step[a] = 0;
        t_next[a] = std::numeric_limits<double>::infinity();
        delta[a] = 0.0;
      }
    }
    active = true;
  }

  bool advance() {
    if (!active) return false;
    int axis = 0;
    if (t_next[1] < t_next[axis]) axis = 1;
    if (t_next[2] < t_next[axis]) axis = 2;
    if (t_next[axis] > t_end) {
      active = false;
      return false;
    }
    t_entry = t_next[axis];
    v[axis] += step[axis];
    if (v[axis] < 0 || v[axis] >= grid->dims[axis]) {
      active = false;
      return false;
    }
    t_next[axis] += delta[axis];
    return true;
  }
};

Vec3 safe_normalized(const Vec3& v) {
  const double n = v.norm();
  return n > kTiny ? Vec3(v / n) : Vec3::Zero();
}

bool passes_separation_planes(const Vec3& q, const std::vector<SeparationPlane>& planes) {
  for (const SeparationPlane& p : planes) {
    if ((q - p.point).dot(p.normal) < 0.0) return false;
  }
  return true;
}

// Spawned cones must absorb the anchor quantization: the spawn point is only
// known to within one subvoxel radius, which tilts the true continuation by up
// to asin(q / leg) relative to the cone axis. The target-side half of that
// error is already inside the cone-sphere test's asin(r / dist) slack.
double spawn_apex_angle(double base, double leg, const VoxelGrid& grid) {
  (void)leg;
  (void)grid;
  return base;
}

double chain_length(const Vec3& tx, const std::vector<Interaction>& interactions,
                    const Vec3& rx) {
  Vec3 prev = tx;
  double len = 0.0;
  for (const Interaction& it : interactions) {
    len += (it.position - prev).norm();
    prev = it.position;
  }
  return len + (rx - prev).norm();
}

}  // namespace

bool cone_intersects_sphere(const Vec3& o, const Vec3& d, double alpha, const Vec3& c,
                            double r) {
  const Vec3 vc = c - o;
  const double dist = vc.norm();
  if (dist <= r) return true;
  const double beta = angle_between(vc, d);
  return beta <= alpha + std::asin(std::min(1.0, r / dist));
}

bool segment_visible(const Vec3& origin, const Vec3& target, std::uint32_t target_ie,
                     const VoxelGrid& grid, const Scene& scene) {
  const Vec3 diff = target - origin;
  const double dist = diff.norm();
  if (dist < kTiny) return true;
  const Vec3 d = diff / dist;

  // Hits lie on the segment, so skipping hits within one subvoxel radius of
  // either endpoint (both endpoints sit on surfaces themselves) is exactly a
  // window on the march parameter; shrinking the marched span up front spares
  // the endpoint-adjacent spheres entirely.
  const double endpoint_radius = grid.subvoxel_radius();
  const double span = dist - 2.0 * endpoint_radius;
  if (span <= 1e-9) return true;
  const Vec3 o2 = origin + endpoint_radius * d;

  // Adjacent walker steps share most of their neighborhoods; stamp cells so
  // each IE range is marched once per segment. Epochs spare the reset.
  thread_local std::vector<std::uint32_t> cell_stamp;
  thread_local std::uint32_t stamp_epoch = 0;
  if (cell_stamp.size() < grid.cells.size()) cell_stamp.assign(grid.cells.size(), 0);
  if (++stamp_epoch == 0) {
    std::fill(cell_stamp.begin(), cell_stamp.end(), 0);
    stamp_epoch = 1;
  }

  GridWalker walker;
  walker.init(grid, origin, d, 0.0, dist);
  while (walker.active) {
    // An IE sphere can straddle the segment while its home cell sits just off
    // the walked line, so the neighboring cells are screened as well.
    for (int oz = -1; oz <= 1; ++oz) {
      for (int oy = -1; oy <= 1; ++oy) {
        for (int ox = -1; ox <= 1; ++ox) {
          const Eigen::Vector3i nv = walker.v + Eigen::Vector3i(ox, oy, oz);
          if (!grid.in_bounds(nv)) continue;
          const std::uint32_t ni = grid.linear_index(nv);
          const VoxelCell& cell = grid.cells[ni];
          if (!cell.has_ies()) continue;
          if (cell_stamp[ni] == stamp_epoch) continue;
          cell_stamp[ni] = stamp_epoch;
          // No sphere housed in this cell can reach the window: skip it.
          const Vec3 cc = grid.voxel_center(nv);
          const double tcc = std::clamp((cc - o2).dot(d), 0.0, span);
          if ((o2 + tcc * d - cc).norm() >
              grid.voxel_radius() + grid.subvoxel_radius()) {
            continue;
          }
          for (std::uint32_t i = cell.ie_begin; i < cell.ie_end; ++i) {
            const IntersectableEntity& ie = grid.ies[i];
            if (ie.kind != IeKind::SurfacePoints) continue;
            if (i == target_ie) continue;
            // Sphere must straddle the windowed span before paying for a march.
            const double tc = std::clamp((ie.sphere_center - o2).dot(d), 0.0, span);
            if ((o2 + tc * d - ie.sphere_center).norm() > ie.sphere_radius) continue;
            const auto hit = march_segment(o2, d, ie, grid, scene, span);
            if (!hit) continue;
            if (hit->distance_along_ray <= 1e-9) continue;
            if (hit->distance_along_ray >= span - 1e-9) continue;
            return false;
          }
        }
      }
    }
    walker.advance();
  }
  return true;
}

TransmissionResult transmission_phase(const Radio& tx, const VoxelGrid& grid, const Scene& scene,
                                      const TraceParams& params) {
  (void)params;
  TransmissionResult out;
  for (std::uint32_t i = 0; i < grid.ies.size(); ++i) {
    const IntersectableEntity& ie = grid.ies[i];
    const Vec3 rp = ie.reception_point;
    const Vec3 dir = safe_normalized(rp - tx.position);
    if (dir.isZero() && ie.kind != IeKind::Receiver) continue;
    if (!segment_visible(tx.position, rp, i, grid, scene)) continue;

    switch (ie.kind) {
      case IeKind::Receiver: {
        PathCandidate los;
        los.tx_id = tx.id;
        los.rx_id = ie.rx_id;
        los.tx_position = tx.position;
        los.rx_position = rp;
        los.coarse_length = (rp - tx.position).norm();
        out.los_paths.push_back(std::move(los));
        break;
      }
      case IeKind::SurfacePoints: {
        auto hit = march_segment(tx.position, dir, ie, grid, scene);
        if (!hit) hit = project_to_surface(rp, ie, grid, scene);
        if (!hit) break;
        InitialHit ih;
        ih.ie_index = i;
        ih.kind = ie.kind;
        ih.position = hit->position;
        ih.normal = hit->normal;
        ih.incoming = safe_normalized(hit->position - tx.position);
        if (ih.incoming.isZero()) break;
        out.initial_hits.push_back(ih);
        break;
      }
      case IeKind::EdgeSegment: {
        InitialHit ih;
        ih.ie_index = i;
        ih.kind = ie.kind;
        ih.position = rp;
        ih.incoming = dir;
        out.initial_hits.push_back(ih);
        break;
      }
    }
  }
  return out;
}

std::optional<ConicalRay> reflect_ray(const SurfaceHit& hit, const Vec3& incoming,
                                      const VoxelGrid& grid, const TraceParams& params) {
  const double dn = incoming.dot(hit.normal);
  if (dn >= 0.0) return std::nullopt;
  ConicalRay ray;
  ray.direction = (incoming - 2.0 * dn * hit.normal).normalized();
  ray.origin = hit.position + grid.hit_epsilon() * hit.normal;
  ray.apex_angle = spawn_apex_angle(params.cone_apex_angle, hit.distance_along_ray, grid);
  ray.separation_planes = {SeparationPlane{ray.origin, hit.normal}};
  return ray;
}

std::vector<ConicalRay> diffract_rays(const IntersectableEntity& ie, const Vec3& point,
                                      const Vec3& incoming, const Scene& scene,
                                      const VoxelGrid& grid, const TraceParams& params,
                                      double incoming_leg) {
  std::vector<ConicalRay> rays;
  const DiffractionEdge& edge = scene.edges[ie.edge_index];
  const Vec3 w = edge.direction();
  const double cos_b = incoming.dot(w);
  if (std::abs(cos_b) > 0.999) return rays;  // degenerate Keller cone
  if (angle_between(edge.normal_a, edge.normal_b) <= 1e-9) return rays;
  if (incoming.dot(edge.normal_a) >= 0.0 && incoming.dot(edge.normal_b) >= 0.0) {
    return rays;  // not reachable from the wedge's open side
  }

  const Vec3 e1 = safe_normalized(incoming - cos_b * w);
  if (e1.isZero()) return rays;
  const Vec3 e2 = w.cross(e1);
  const double sin_b = std::sqrt(std::max(0.0, 1.0 - cos_b * cos_b));

  const int n = params.diffraction_ray_count;
  const double dphi = 2.0 * std::numbers::pi / n;
  const double apex = spawn_apex_angle(params.cone_apex_angle, incoming_leg, grid);
  rays.reserve(n);
  for (int j = 0; j < n; ++j) {
    const double phi = j * dphi;
    const Vec3 dir = cos_b * w + sin_b * (std::cos(phi) * e1 + std::sin(phi) * e2);
    if (dir.dot(edge.normal_a) < 0.0 && dir.dot(edge.normal_b) < 0.0) continue;

    // Two planes through the edge, halfway in azimuth to the neighbor rays;
    // t(psi) is the azimuthal tangent, so u(phi)·t(psi) = sin(phi - psi).
    auto tangent = [&](double psi) {
      return Vec3(-std::sin(psi) * e1 + std::cos(psi) * e2);
    };
    ConicalRay ray;
    ray.origin = point;
    ray.direction = dir;
    ray.apex_angle = apex;
    ray.separation_planes = {SeparationPlane{point, -tangent(phi + 0.5 * dphi)},
                             SeparationPlane{point, tangent(phi - 0.5 * dphi)}};
    rays.push_back(std::move(ray));
  }
  return rays;
}

std::vector<Reception> voxel_cone_trace(const ConicalRay& ray, const VoxelGrid& grid,
                                        const Scene& scene, const TraceParams& params,
                                        TraceDebug* debug) {
  (void)params;
  std::vector<Reception> receptions;
  if (grid.ies.empty()) return receptions;

  const double half_angle = 0.5 * ray.apex_angle;
  const double exempt_radius = 2.0 * grid.subvoxel_radius();
  std::uint32_t origin_ie = kNoIe;
  Label origin_label = 0;
  if (!ray.provenance.empty()) {
    origin_ie = ray.provenance.back().ie_index;
    origin_label = ray.provenance.back().label;
  }

  std::vector<std::uint8_t> evaluated(grid.cells.size(), 0);
  GridWalker walker;
  walker.init(grid, ray.origin, ray.direction, 0.0,
              std::numeric_limits<double>::infinity());
  while (walker.active) {
    const std::uint32_t vi = grid.linear_index(walker.v);
    if (debug) debug->visited.push_back(vi);
    const std::int32_t march = grid.cells[vi].march;

    if (grid.cells[vi].has_ies() || march <= 1) {
      for (int oz = -1; oz <= 1; ++oz) {
        for (int oy = -1; oy <= 1; ++oy) {
          for (int ox = -1; ox <= 1; ++ox) {
            const Eigen::Vector3i nv = walker.v + Eigen::Vector3i(ox, oy, oz);
            if (!grid.in_bounds(nv)) continue;
            const std::uint32_t ni = grid.linear_index(nv);
            if (evaluated[ni]) continue;
            evaluated[ni] = 1;
            if (debug) debug->evaluated.push_back(ni);
            const VoxelCell& cell = grid.cells[ni];
            if (!cell.has_ies()) continue;
            if (!cone_intersects_sphere(ray.origin, ray.direction, half_angle,
                                        grid.voxel_center(nv), grid.voxel_radius())) {
              continue;
            }
            for (std::uint32_t i = cell.ie_begin; i < cell.ie_end; ++i) {
              const IntersectableEntity& ie = grid.ies[i];
              if (i == origin_ie) continue;
              if (origin_ie != kNoIe && ie.label == origin_label &&
                  (ie.sphere_center - ray.origin).norm() <= exempt_radius) {
                continue;
              }
              if (!cone_intersects_sphere(ray.origin, ray.direction, half_angle,
                                          ie.sphere_center, ie.sphere_radius)) {
                continue;
              }
              const Vec3 rp = ie.reception_point;
              if (!passes_separation_planes(rp, ray.separation_planes)) continue;
              if ((rp - ray.origin).norm() < kTiny) continue;
              if (!segment_visible(ray.origin, rp, i, grid, scene)) continue;

              Reception rec;
              rec.ie_index = i;
              rec.reception_point = rp;
              if (ie.kind == IeKind::SurfacePoints) {
                const Vec3 dir = safe_normalized(rp - ray.origin);
                auto hit = march_segment(ray.origin, dir, ie, grid, scene);
                if (!hit) {
                  hit = project_to_surface(rp, ie, grid, scene);
                  if (hit) hit->distance_along_ray = (hit->position - ray.origin).norm();
                }
                if (!hit) continue;
                rec.surface_hit = *hit;
                rec.hit_valid = true;
              }
              receptions.push_back(rec);
            }
          }
        }
      }
    }

    if (march >= 2) {
      walker.init(grid, ray.origin, ray.direction,
                  walker.t_entry + (march - 1) * grid.voxel_size,
                  std::numeric_limits<double>::infinity());
    } else {
      walker.advance();
    }
  }

  std::sort(receptions.begin(), receptions.end(),
            [](const Reception& a, const Reception& b) { return a.ie_index < b.ie_index; });
  return receptions;
}

namespace {

using SeqCounts = std::map<std::pair<std::uint32_t, std::vector<Label>>, int>;

struct DfsContext {
  const Radio* tx;
  const VoxelGrid* grid;
  const Scene* scene;
  const TraceParams* params;
  std::vector<PathCandidate>* out;
  SeqCounts* seq_counts;  // task-local kappa prefilter, bounds memory
};

void dfs_trace(const ConicalRay& ray, const DfsContext& ctx) {
  const int depth = static_cast<int>(ray.provenance.size());
  const auto receptions = voxel_cone_trace(ray, *ctx.grid, *ctx.scene, *ctx.params);
  for (const Reception& rec : receptions) {
    const IntersectableEntity& ie = ctx.grid->ies[rec.ie_index];
    if (ie.kind == IeKind::Receiver) {
      std::vector<Label> labels;
      labels.reserve(ray.provenance.size());
      for (const Interaction& it : ray.provenance) labels.push_back(it.label);
      int& count = (*ctx.seq_counts)[{ie.rx_id, std::move(labels)}];
      if (count >= ctx.params->kappa) continue;
      ++count;
      PathCandidate cand;
      cand.tx_id = ctx.tx->id;
      cand.rx_id = ie.rx_id;
      cand.tx_position = ctx.tx->position;
      cand.rx_position = rec.reception_point;
      cand.interactions = ray.provenance;
      cand.coarse_length =
          chain_length(ctx.tx->position, cand.interactions, rec.reception_point);
      ctx.out->push_back(std::move(cand));
      continue;
    }
    if (depth >= ctx.params->max_interactions) continue;

    if (ie.kind == IeKind::SurfacePoints) {
      if (!rec.hit_valid) continue;
      const Vec3 incoming = safe_normalized(rec.surface_hit.position - ray.origin);
      if (incoming.isZero()) continue;
      auto next = reflect_ray(rec.surface_hit, incoming, *ctx.grid, *ctx.params);
      if (!next) continue;
      next->provenance = ray.provenance;
      next->provenance.push_back(Interaction{InteractionKind::Reflection,
                                             rec.surface_hit.position, ie.label,
                                             rec.surface_hit.normal, rec.ie_index, 0});
      next->diffraction_count = ray.diffraction_count;
      dfs_trace(*next, ctx);
    } else {  // EdgeSegment
      if (ray.diffraction_count >= ctx.params->max_diffractions) continue;
      const Vec3 incoming = safe_normalized(rec.reception_point - ray.origin);
      if (incoming.isZero()) continue;
      auto fan = diffract_rays(ie, rec.reception_point, incoming, *ctx.scene, *ctx.grid,
                               *ctx.params, (rec.reception_point - ray.origin).norm());
      for (ConicalRay& next : fan) {
        next.provenance = ray.provenance;
        next.provenance.push_back(Interaction{InteractionKind::Diffraction,
                                              rec.reception_point, ie.label,
                                              ctx.scene->edges[ie.edge_index].normal_a,
                                              rec.ie_index, ie.edge_index});
        next.diffraction_count = ray.diffraction_count + 1;
        dfs_trace(next, ctx);
      }
    }
  }
}

}  // namespace

std::vector<PathCandidate> propagate(const Radio& tx, const std::vector<InitialHit>& initial_hits,
                                     const VoxelGrid& grid, const Scene& scene,
                                     const TraceParams& params, int thread_count) {
  std::vector<std::vector<PathCandidate>> per_task(initial_hits.size());
  if (params.max_interactions >= 1) {
    parallel_for(initial_hits.size(), thread_count, [&](std::size_t task) {
      const InitialHit& ih = initial_hits[task];
      SeqCounts seq_counts;
      DfsContext ctx{&tx, &grid, &scene, &params, &per_task[task], &seq_counts};
      const IntersectableEntity& ie = grid.ies[ih.ie_index];

      if (ih.kind == IeKind::SurfacePoints) {
        SurfaceHit hit;
        hit.position = ih.position;
        hit.normal = ih.normal;
        hit.label = ie.label;
        hit.distance_along_ray = (ih.position - tx.position).norm();
        auto seed = reflect_ray(hit, ih.incoming, grid, params);
        if (!seed) return;
        seed->provenance = {Interaction{InteractionKind::Reflection, hit.position, ie.label,
                                        hit.normal, ih.ie_index, 0}};
        dfs_trace(*seed, ctx);
      } else if (ih.kind == IeKind::EdgeSegment) {
        if (params.max_diffractions < 1) return;
        auto fan = diffract_rays(ie, ih.position, ih.incoming, scene, grid, params,
                                 (ih.position - tx.position).norm());
        for (ConicalRay& seed : fan) {
          seed.provenance = {Interaction{InteractionKind::Diffraction, ih.position, ie.label,
                                         scene.edges[ie.edge_index].normal_a, ih.ie_index,
                                         ie.edge_index}};
          seed.diffraction_count = 1;
          dfs_trace(seed, ctx);
        }
      }
    });
  }

  // Merge in task order (schedule-independent), then apply the kappa cap per
  // (rx, ordered label sequence).
  std::vector<PathCandidate> merged;
  for (auto& chunk : per_task) {
    for (auto& cand : chunk) merged.push_back(std::move(cand));
  }
  std::map<std::pair<std::uint32_t, std::vector<Label>>, int> seq_counts;
  std::vector<PathCandidate> kept;
  kept.reserve(merged.size());
  for (auto& cand : merged) {
    std::vector<Label> labels;
    labels.reserve(cand.interactions.size());
    for (const Interaction& it : cand.interactions) labels.push_back(it.label);
    int& count = seq_counts[{cand.rx_id, std::move(labels)}];
    if (count < params.kappa) {
      ++count;
      kept.push_back(std::move(cand));
    }
  }
  return kept;
}

}  // namespace pcray
