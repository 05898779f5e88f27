#include "pcray/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace pcray {

namespace {

struct SubvoxelCoord {
  Eigen::Vector3i voxel;
  Eigen::Vector3i local;
};

// Bins through the global subvoxel lattice first so voxel and subvoxel
// assignments can never disagree at shared boundaries.
SubvoxelCoord locate_subvoxel(const Vec3& p, const Vec3& origin, double sub_edge,
                              const Eigen::Vector3i& dims, int dv) {
  SubvoxelCoord out;
  for (int a = 0; a < 3; ++a) {
    int g = static_cast<int>(std::floor((p[a] - origin[a]) / sub_edge));
    const int g_max = dims[a] * dv - 1;
    g = std::clamp(g, 0, g_max);
    out.voxel[a] = g / dv;
    out.local[a] = g - out.voxel[a] * dv;
  }
  return out;
}

std::uint32_t local_linear(const Eigen::Vector3i& local, int dv) {
  return static_cast<std::uint32_t>(local.x() + dv * (local.y() + dv * local.z()));
}

Vec3 subvoxel_center(const VoxelGrid& grid, std::uint32_t voxel, std::uint32_t sub) {
  const int dv = grid.division_factor;
  const int dx = grid.dims.x(), dy = grid.dims.y();
  const Eigen::Vector3i v(static_cast<int>(voxel) % dx,
                          (static_cast<int>(voxel) / dx) % dy,
                          static_cast<int>(voxel) / (dx * dy));
  const Eigen::Vector3i l(static_cast<int>(sub) % dv,
                          (static_cast<int>(sub) / dv) % dv,
                          static_cast<int>(sub) / (dv * dv));
  const double se = grid.subvoxel_edge();
  return grid.origin + (v.cast<double>() * grid.voxel_size) +
         ((l.cast<double>() + Vec3::Constant(0.5).eval()) * se);
}

bool canonical_ie_less(const IntersectableEntity& a, const IntersectableEntity& b) {
  auto key = [](const IntersectableEntity& e) {
    return std::tuple(e.voxel, e.subvoxel, static_cast<int>(e.kind), e.label, e.edge_index,
                      e.rx_id);
  };
  if (key(a) != key(b)) return key(a) < key(b);
  return lex_less(a.seg_start, b.seg_start);  // same-label edge pieces
}

}  // namespace

Vec3 reception_point_of(const IntersectableEntity& ie, const VoxelGrid& grid,
                        const Scene& scene) {
  switch (ie.kind) {
    case IeKind::SurfacePoints: {
      Vec3 sum = Vec3::Zero();
      for (std::uint32_t i = ie.point_begin; i < ie.point_end; ++i) {
        sum += scene.points[grid.point_indices[i]].position;
      }
      return sum / static_cast<double>(ie.point_end - ie.point_begin);
    }
    case IeKind::EdgeSegment:
      return 0.5 * (ie.seg_start + ie.seg_end);
    case IeKind::Receiver:
      for (const Radio& r : scene.receivers) {
        if (r.id == ie.rx_id) return r.position;
      }
      return ie.reception_point;
  }
  return ie.reception_point;
}

VoxelGrid build_grid(const Scene& scene, const VoxelizationParams& params) {
  if (!(params.voxel_size > 0.0)) throw std::runtime_error("voxel_size must be > 0");
  if (params.division_factor < 1) throw std::runtime_error("division_factor must be >= 1");

  const Aabb box = scene_bounds(scene, params.voxel_size);

  VoxelGrid grid;
  grid.origin = box.min;
  grid.voxel_size = params.voxel_size;
  grid.division_factor = params.division_factor;
  double cell_product = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double span = (box.max[a] - box.min[a]) / params.voxel_size;
    grid.dims[a] = std::max(1, static_cast<int>(std::ceil(span - 1e-9)));
    cell_product *= grid.dims[a];
  }
  if (cell_product > static_cast<double>(params.max_cells)) {
    throw std::runtime_error("grid too large");
  }
  grid.cells.assign(static_cast<std::size_t>(cell_product), VoxelCell{});

  const int dv = grid.division_factor;
  const double sub_edge = grid.subvoxel_edge();
  const double sub_radius = grid.subvoxel_radius();

  // Surface points, grouped per (voxel, subvoxel, label).
  struct PointBin {
    std::uint32_t voxel, subvoxel;
    Label label;
    std::uint32_t point;
  };
  std::vector<PointBin> bins;
  bins.reserve(scene.points.size());
  for (std::uint32_t i = 0; i < scene.points.size(); ++i) {
    const SubvoxelCoord sc =
        locate_subvoxel(scene.points[i].position, grid.origin, sub_edge, grid.dims, dv);
    bins.push_back({grid.linear_index(sc.voxel), local_linear(sc.local, dv),
                    scene.points[i].label, i});
  }
  std::sort(bins.begin(), bins.end(), [](const PointBin& a, const PointBin& b) {
    return std::tuple(a.voxel, a.subvoxel, a.label, a.point) <
           std::tuple(b.voxel, b.subvoxel, b.label, b.point);
  });

  std::vector<IntersectableEntity> ies;
  grid.point_indices.reserve(bins.size());
  for (std::size_t i = 0; i < bins.size();) {
    std::size_t j = i;
    while (j < bins.size() && bins[j].voxel == bins[i].voxel &&
           bins[j].subvoxel == bins[i].subvoxel && bins[j].label == bins[i].label) {
      ++j;
    }
    IntersectableEntity ie;
    ie.kind = IeKind::SurfacePoints;
    ie.label = bins[i].label;
    ie.voxel = bins[i].voxel;
    ie.subvoxel = bins[i].subvoxel;
    ie.point_begin = static_cast<std::uint32_t>(grid.point_indices.size());
    for (std::size_t k = i; k < j; ++k) grid.point_indices.push_back(bins[k].point);
    ie.point_end = static_cast<std::uint32_t>(grid.point_indices.size());

    // Flag payloads where every point shares one plane and one normal.
    const LabeledPoint& first = scene.points[bins[i].point];
    ie.plane_point = first.position;
    ie.plane_normal = first.normal;
    ie.planar = true;
    for (std::size_t k = i; k < j && ie.planar; ++k) {
      const LabeledPoint& pt = scene.points[bins[k].point];
      if (pt.normal.dot(first.normal) < 1.0 - 1e-12 ||
          std::abs((pt.position - first.position).dot(first.normal)) > 1e-9) {
        ie.planar = false;
      }
    }
    ies.push_back(ie);
    i = j;
  }

  // Edge segments, clipped against the subvoxel lattice.
  for (std::uint32_t e = 0; e < scene.edges.size(); ++e) {
    const DiffractionEdge& edge = scene.edges[e];
    const double len = edge.length();
    if (!(len > 0.0)) continue;
    const Vec3 dir = (edge.end - edge.start) / len;

    std::vector<double> cuts{0.0, len};
    for (int a = 0; a < 3; ++a) {
      if (std::abs(dir[a]) < 1e-15) continue;
      const double lo = std::min(edge.start[a], edge.end[a]);
      const double hi = std::max(edge.start[a], edge.end[a]);
      const int k_lo = static_cast<int>(std::ceil((lo - grid.origin[a]) / sub_edge));
      const int k_hi = static_cast<int>(std::floor((hi - grid.origin[a]) / sub_edge));
      for (int k = k_lo; k <= k_hi; ++k) {
        const double t = (grid.origin[a] + k * sub_edge - edge.start[a]) / dir[a];
        if (t > 1e-12 && t < len - 1e-12) cuts.push_back(t);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      if (cuts[c + 1] - cuts[c] < 1e-12) continue;
      const Vec3 a = edge.start + cuts[c] * dir;
      const Vec3 b = edge.start + cuts[c + 1] * dir;
      const SubvoxelCoord sc =
          locate_subvoxel(0.5 * (a + b), grid.origin, sub_edge, grid.dims, dv);
      IntersectableEntity ie;
      ie.kind = IeKind::EdgeSegment;
      ie.label = edge.label;
      ie.edge_index = e;
      ie.seg_start = a;
      ie.seg_end = b;
      ie.voxel = grid.linear_index(sc.voxel);
      ie.subvoxel = local_linear(sc.local, dv);
      ies.push_back(ie);
    }
  }

  // Receivers.
  for (const Radio& rx : scene.receivers) {
    const SubvoxelCoord sc = locate_subvoxel(rx.position, grid.origin, sub_edge, grid.dims, dv);
    IntersectableEntity ie;
    ie.kind = IeKind::Receiver;
    ie.label = rx.id;
    ie.rx_id = rx.id;
    ie.reception_point = rx.position;
    ie.voxel = grid.linear_index(sc.voxel);
    ie.subvoxel = local_linear(sc.local, dv);
    ies.push_back(ie);
  }

  std::sort(ies.begin(), ies.end(), canonical_ie_less);

  for (IntersectableEntity& ie : ies) {
    ie.sphere_center = subvoxel_center(grid, ie.voxel, ie.subvoxel);
    ie.sphere_radius = sub_radius;
    ie.reception_point = reception_point_of(ie, grid, scene);
  }
  grid.ies = std::move(ies);

  for (std::uint32_t i = 0; i < grid.ies.size(); ++i) {
    VoxelCell& cell = grid.cells[grid.ies[i].voxel];
    if (!cell.has_ies()) cell.ie_begin = i;
    cell.ie_end = i + 1;
  }

  compute_march_distances(grid);
  return grid;
}

void compute_march_distances(VoxelGrid& grid) {
  std::vector<std::uint32_t> frontier;
  for (std::uint32_t i = 0; i < grid.cells.size(); ++i) {
    if (grid.cells[i].has_ies()) {
      grid.cells[i].march = 0;
      frontier.push_back(i);
    } else {
      grid.cells[i].march = kMarchNoIes;
    }
  }
  if (frontier.empty()) return;

  // BFS over the 26-neighborhood: layer k reaches exactly the voxels at
  // Chebyshev distance k from the nearest occupied voxel.
  const int dx = grid.dims.x(), dy = grid.dims.y(), dz = grid.dims.z();
  std::vector<std::uint32_t> next;
  std::int32_t dist = 0;
  while (!frontier.empty()) {
    ++dist;
    next.clear();
    for (std::uint32_t idx : frontier) {
      const int x = static_cast<int>(idx) % dx;
      const int y = (static_cast<int>(idx) / dx) % dy;
      const int z = static_cast<int>(idx) / (dx * dy);
      for (int oz = -1; oz <= 1; ++oz) {
        for (int oy = -1; oy <= 1; ++oy) {
          for (int ox = -1; ox <= 1; ++ox) {
            const int nx = x + ox, ny = y + oy, nz = z + oz;
            if (nx < 0 || ny < 0 || nz < 0 || nx >= dx || ny >= dy || nz >= dz) continue;
            const std::uint32_t n = static_cast<std::uint32_t>(nx + dx * (ny + dy * nz));
            if (grid.cells[n].march != kMarchNoIes) continue;
            grid.cells[n].march = dist;
            next.push_back(n);
          }
        }
      }
    }
    frontier.swap(next);
  }
}

}  // namespace pcray
