#include "pcray/surface.hpp"

#include <algorithm>
#include <cmath>

namespace pcray {

namespace {
constexpr int kMarchStepBudget = 32;
constexpr int kBisectionBudget = 64;
constexpr int kProjectionBudget = 16;

// For coplanar payloads with one shared normal, the weighted SDF collapses to
// the plane distance whatever the weights evaluate to; marches take this O(1)
// route and only the final hit pays for the full estimate.
double sdf_value_at(const Vec3& x, const IntersectableEntity& ie, const VoxelGrid& grid,
                    const Scene& scene) {
  if (ie.planar) return (x - ie.plane_point).dot(ie.plane_normal);
  return estimate_surface(x, ie, grid, scene).sdf_value;
}

}  // namespace

SurfaceEstimate estimate_surface(const Vec3& x, const IntersectableEntity& ie,
                                 const VoxelGrid& grid, const Scene& scene) {
  SurfaceEstimate est;
  est.query_x = x;

  const double h = grid.subvoxel_edge();
  const double inv_h2 = 1.0 / (h * h);

  Vec3 p_sum = Vec3::Zero();
  Vec3 n_sum = Vec3::Zero();
  double w_sum = 0.0;
  double best_d2 = std::numeric_limits<double>::max();
  std::uint32_t best = ie.point_begin;
  for (std::uint32_t i = ie.point_begin; i < ie.point_end; ++i) {
    const LabeledPoint& pt = scene.points[grid.point_indices[i]];
    const double d2 = (x - pt.position).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
    const double w = std::exp(-d2 * inv_h2);
    w_sum += w;
    p_sum += w * pt.position;
    n_sum += w * pt.normal;
  }

  if (w_sum > 0.0 && n_sum.norm() > 0.0) {
    est.p_bar = p_sum / w_sum;
    est.n_bar = n_sum.normalized();
    est.weight_sum = w_sum;
  } else {
    const LabeledPoint& pt = scene.points[grid.point_indices[best]];
    est.p_bar = pt.position;
    est.n_bar = pt.normal;
    est.weight_sum = 0.0;
  }
  est.sdf_value = (x - est.p_bar).dot(est.n_bar);
  return est;
}

std::optional<SurfaceHit> march_segment(const Vec3& origin, const Vec3& direction,
                                        const IntersectableEntity& ie, const VoxelGrid& grid,
                                        const Scene& scene, double t_max) {
  const double eps = grid.hit_epsilon();
  const double r = ie.sphere_radius;
  const double t_center = (ie.sphere_center - origin).dot(direction);
  const double t_lo = std::max(0.0, t_center - r);
  const double t_hi = std::min(t_center + r, t_max);
  if (t_hi <= t_lo) return std::nullopt;

  auto make_hit = [&](double t) {
    if (ie.planar) {
      // The march stops within eps of the surface, which leaves an along-ray
      // shortfall of eps over the incidence sine; snap to the exact crossing
      // so downstream consumers (reprojection in particular) see no bias.
      const double dn = direction.dot(ie.plane_normal);
      if (std::abs(dn) > 1e-12) {
        const double t_star = (ie.plane_point - origin).dot(ie.plane_normal) / dn;
        if (t_star >= t_lo && t_star <= t_hi) t = t_star;
      }
    }
    const Vec3 pos = origin + t * direction;
    SurfaceHit hit;
    hit.position = pos;
    hit.normal = ie.planar ? ie.plane_normal : estimate_surface(pos, ie, grid, scene).n_bar;
    hit.label = ie.label;
    hit.distance_along_ray = t;
    return hit;
  };

  double t = t_lo;
  double f = sdf_value_at(origin + t * direction, ie, grid, scene);
  if (std::abs(f) <= eps) return make_hit(t);

  if (ie.planar) {
    // f is linear in t, so the window holds a hit exactly when an endpoint
    // touches within eps or the sign flips; the stepped march below can stall
    // against its budget when f hovers just above eps.
    const double f_hi = sdf_value_at(origin + t_hi * direction, ie, grid, scene);
    if (f * f_hi < 0.0) return make_hit(0.5 * (t_lo + t_hi));
    if (std::abs(f_hi) <= eps) return make_hit(t_hi);
    return std::nullopt;
  }

  for (int step = 0; step < kMarchStepBudget; ++step) {
    const bool at_end = t + std::abs(f) >= t_hi;
    const double t_next = at_end ? t_hi : t + std::abs(f);
    const double f_next = sdf_value_at(origin + t_next * direction, ie, grid, scene);
    if (std::abs(f_next) <= eps) return make_hit(t_next);
    if (f * f_next < 0.0) {
      // Sign change: bisect the bracket down to the hit tolerance.
      double a = t, b = t_next, fa = f;
      for (int i = 0; i < kBisectionBudget; ++i) {
        const double m = 0.5 * (a + b);
        const double fm = sdf_value_at(origin + m * direction, ie, grid, scene);
        if (std::abs(fm) <= eps) return make_hit(m);
        if (fa * fm < 0.0) {
          b = m;
        } else {
          a = m;
          fa = fm;
        }
      }
      return make_hit(0.5 * (a + b));
    }
    if (at_end) return std::nullopt;
    t = t_next;
    f = f_next;
  }
  return std::nullopt;
}

std::optional<SurfaceHit> project_to_surface(const Vec3& x, const IntersectableEntity& ie,
                                             const VoxelGrid& grid, const Scene& scene) {
  const double eps = grid.hit_epsilon();
  Vec3 p = x;
  if (ie.planar) {
    p -= (p - ie.plane_point).dot(ie.plane_normal) * ie.plane_normal;
    SurfaceHit hit;
    hit.position = p;
    hit.normal = ie.plane_normal;
    hit.label = ie.label;
    hit.distance_along_ray = 0.0;
    return hit;
  }
  for (int i = 0; i < kProjectionBudget; ++i) {
    const SurfaceEstimate est = estimate_surface(p, ie, grid, scene);
    if (std::abs(est.sdf_value) <= eps) {
      SurfaceHit hit;
      hit.position = p;
      hit.normal = est.n_bar;
      hit.label = ie.label;
      hit.distance_along_ray = 0.0;
      return hit;
    }
    p -= est.sdf_value * est.n_bar;
  }
  return std::nullopt;
}

std::pair<Vec3, Vec3> local_frame(const Vec3& normal) {
  int axis = 0;
  double best = std::abs(normal.x());
  for (int a = 1; a < 3; ++a) {
    if (std::abs(normal[a]) <= best) {
      best = std::abs(normal[a]);
      axis = a;
    }
  }
  const Vec3 a = Vec3::Unit(axis);
  const Vec3 u = a.cross(normal).normalized();
  const Vec3 v = normal.cross(u);
  return {u, v};
}

}  // namespace pcray
