#include <doctest.h>

#include <cmath>
#include <random>

#include "pcray/refine.hpp"
#include "test_helpers.hpp"

using namespace pcray;
using namespace pcray::testutil;

namespace {

Interaction reflection_at(const Vec3& pos, Label label, const Vec3& normal = Vec3(0, 0, 1)) {
  Interaction it;
  it.kind = InteractionKind::Reflection;
  it.position = pos;
  it.label = label;
  it.normal = normal;
  return it;
}

Interaction diffraction_at(const Vec3& pos, Label label, std::uint32_t edge_index = 0) {
  Interaction it;
  it.kind = InteractionKind::Diffraction;
  it.position = pos;
  it.label = label;
  it.edge_index = edge_index;
  return it;
}

PathCandidate candidate(const Vec3& tx, const Vec3& rx, std::vector<Interaction> inters) {
  PathCandidate c;
  c.tx_position = tx;
  c.rx_position = rx;
  c.interactions = std::move(inters);
  return c;
}

ExactPath make_exact(const Vec3& tx, const Vec3& rx, std::vector<Interaction> inters) {
  ExactPath p;
  p.tx_position = tx;
  p.rx_position = rx;
  p.interactions = std::move(inters);
  Vec3 prev = tx;
  double len = 0.0;
  for (const auto& it : p.interactions) {
    len += (it.position - prev).norm();
    prev = it.position;
  }
  len += (rx - prev).norm();
  p.total_length = len;
  p.delay = len / kSpeedOfLight;
  p.converged = true;
  return p;
}

double finite_difference(PathState state, std::size_t unknown, double h) {
  const auto apply = [&](double offset) {
    PathState s = state;
    std::size_t k = 0;
    for (auto& node : s.nodes) {
      if (node.kind == InteractionKind::Reflection) {
        if (k == unknown) node.refl.r += offset;
        if (k + 1 == unknown) node.refl.s += offset;
        k += 2;
      } else {
        if (k == unknown) node.diff.t += offset;
        k += 1;
      }
    }
    return path_length(s);
  };
  return (apply(h) - apply(-h)) / (2.0 * h);
}

}  // namespace

TEST_SUITE("refine") {

TEST_CASE("local_gradients at the Fermat point vanish") {
  PathState state;
  state.tx = Vec3(0, 0, 1);
  state.rx = Vec3(1, 0, 1);
  PathNode node;
  node.kind = InteractionKind::Reflection;
  node.refl.c = Vec3(0.5, 0, 0);
  state.nodes.push_back(node);

  const auto grads = local_gradients(state);
  REQUIRE(grads.has_value());
  REQUIRE(grads->size() == 2);
  CHECK((*grads)[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((*grads)[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("local_gradients off-optimum match the hand value") {
  PathState state;
  state.tx = Vec3(0, 0, 1);
  state.rx = Vec3(1, 0, 1);
  PathNode node;
  node.kind = InteractionKind::Reflection;
  node.refl.c = Vec3(0, 0, 0);
  state.nodes.push_back(node);

  const auto grads = local_gradients(state);
  REQUIRE(grads.has_value());
  CHECK((*grads)[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-9));
  CHECK((*grads)[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("diffraction gradient vanishes under mirror symmetry") {
  PathState state;
  state.tx = Vec3(0, -1, 1);
  state.rx = Vec3(0, 1, 1);
  PathNode node;
  node.kind = InteractionKind::Diffraction;
  node.diff.c = Vec3(0, 0, 0);
  node.diff.w = Vec3(1, 0, 0);
  node.diff.t_min = -1.0;
  node.diff.t_max = 1.0;
  state.nodes.push_back(node);

  const auto grads = local_gradients(state);
  REQUIRE(grads.has_value());
  REQUIRE(grads->size() == 1);
  CHECK((*grads)[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("coincident neighbors yield no gradients") {
  PathState state;
  state.tx = Vec3(0, 0, 1);
  state.rx = Vec3(1, 0, 1);
  PathNode node;
  node.kind = InteractionKind::Reflection;
  node.refl.c = Vec3(0, 0, 1);  // sits on the TX
  state.nodes.push_back(node);
  CHECK(!local_gradients(state).has_value());
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> coord(0.0, 3.0);
  std::uniform_real_distribution<double> offset(-0.5, 0.5);
  std::normal_distribution<double> g(0.0, 1.0);

  int accepted = 0;
  while (accepted < 1000) {
    PathState state;
    state.tx = Vec3(coord(rng), coord(rng), coord(rng));
    state.rx = Vec3(coord(rng), coord(rng), coord(rng));
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) {
      PathNode node;
      if (rng() % 2 == 0) {
        node.kind = InteractionKind::Reflection;
        node.refl.c = Vec3(coord(rng), coord(rng), coord(rng));
        Vec3 normal(g(rng), g(rng), g(rng));
        if (normal.norm() < 1e-6) normal = Vec3(0, 0, 1);
        normal.normalize();
        const auto [u, v] = local_frame(normal);
        node.refl.u = u;
        node.refl.v = v;
        node.refl.normal = normal;
        node.refl.r = offset(rng);
        node.refl.s = offset(rng);
      } else {
        node.kind = InteractionKind::Diffraction;
        node.diff.c = Vec3(coord(rng), coord(rng), coord(rng));
        Vec3 w(g(rng), g(rng), g(rng));
        if (w.norm() < 1e-6) w = Vec3(1, 0, 0);
        node.diff.w = w.normalized();
        node.diff.t = offset(rng);
        node.diff.t_min = -2.0;
        node.diff.t_max = 2.0;
      }
      state.nodes.push_back(node);
    }

    // Keep the state clear of the degenerate pre-condition.
    bool separated = true;
    Vec3 prev = state.tx;
    for (const auto& node : state.nodes) {
      if ((node.point() - prev).norm() < 0.05) separated = false;
      prev = node.point();
    }
    if ((state.rx - prev).norm() < 0.05) separated = false;
    if (!separated) continue;
    ++accepted;

    const auto grads = local_gradients(state);
    REQUIRE(grads.has_value());
    for (std::size_t j = 0; j < grads->size(); ++j) {
      const double fd = finite_difference(state, j, 1e-6);
      CHECK(std::abs((*grads)[j] - fd) <= 1e-6 + 1e-5 * std::abs(fd));
    }
  }
}

TEST_CASE("single reflection refines to the image-method solution") {
  std::vector<LabeledPoint> pts;
  add_wall(pts, Vec3(-0.2, -0.6, 0), Vec3(1.4, 0, 0), Vec3(0, 1.2, 0), Vec3(0, 0, 1), 0, 0.03);
  Scene scene = scene_with_radios(std::move(pts), Vec3(0, 0, 1), Vec3(1, 0, 1));
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});

  const PathCandidate cand =
      candidate(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0.4, 0, 0), 0)});
  const double initial_length = path_length(make_path_state(cand, scene));

  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  REQUIRE(out.path.has_value());
  CHECK(out.path->converged);
  CHECK(out.path->gradient_norm < RefineParams{}.delta);
  CHECK(out.path->total_length == doctest::Approx(std::sqrt(5.0)).epsilon(1e-6));
  CHECK((out.path->interactions[0].position - Vec3(0.5, 0, 0)).norm() <= 1e-3);
  CHECK(out.path->delay == doctest::Approx(out.path->total_length / kSpeedOfLight));
  CHECK(verify_reflection_law(*out.path, scene, 1e-4));
  // Descent on planar geometry never lengthens the path.
  CHECK(out.path->total_length <= initial_length + 1e-12);

  // Stored length agrees with the stored points.
  Vec3 prev = out.path->tx_position;
  double recomputed = 0.0;
  for (const auto& it : out.path->interactions) {
    recomputed += (it.position - prev).norm();
    prev = it.position;
  }
  recomputed += (out.path->rx_position - prev).norm();
  CHECK(out.path->total_length == doctest::Approx(recomputed).epsilon(1e-9));
}

TEST_CASE("single diffraction refines to the symmetric edge point") {
  Scene scene = scene_with_radios({}, Vec3(0, -1, 1), Vec3(0, 1, 1));
  scene.edges.push_back({Vec3(-1, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 1), Vec3(0, 0, -1), 5});
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});

  const PathCandidate cand =
      candidate(Vec3(0, -1, 1), Vec3(0, 1, 1), {diffraction_at(Vec3(0.3, 0, 0), 5, 0)});
  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  REQUIRE(out.path.has_value());
  CHECK(out.path->converged);
  CHECK(out.path->total_length == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-6));
  CHECK((out.path->interactions[0].position - Vec3(0, 0, 0)).norm() <= 1e-3);
  CHECK(verify_reflection_law(*out.path, scene, 1e-4));
}

TEST_CASE("diffraction point stays clamped to the edge extent") {
  Scene scene = scene_with_radios({}, Vec3(3, -1, 1), Vec3(3, 1, 1));
  // Fermat point would be at x=3, but the edge stops at x=1.
  scene.edges.push_back({Vec3(-1, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 1), Vec3(0, 0, -1), 5});
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});
  const PathCandidate cand =
      candidate(Vec3(3, -1, 1), Vec3(3, 1, 1), {diffraction_at(Vec3(0.5, 0, 0), 5, 0)});
  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  if (out.path.has_value()) {
    CHECK(out.path->interactions[0].position.x() <= 1.0 + 1e-9);
  } else {
    CHECK(out.reason == RejectReason::not_converged);  // pinned at the clamp
  }
}

TEST_CASE("two-reflection corridor matches the double-image oracle") {
  std::vector<LabeledPoint> pts;
  add_wall(pts, Vec3(-0.5, -0.6, 0), Vec3(5, 0, 0), Vec3(0, 1.2, 0), Vec3(0, 0, 1), 0, 0.04);
  add_wall(pts, Vec3(-0.5, -0.6, 3), Vec3(5, 0, 0), Vec3(0, 1.2, 0), Vec3(0, 0, -1), 1, 0.04);
  Scene scene = scene_with_radios(std::move(pts), Vec3(0, 0, 1), Vec3(4, 0, 1));
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});

  const PathCandidate cand = candidate(
      Vec3(0, 0, 1), Vec3(4, 0, 1),
      {reflection_at(Vec3(0.8, 0.05, 0), 0), reflection_at(Vec3(2.4, -0.05, 3), 1, Vec3(0, 0, -1))});
  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  REQUIRE(out.path.has_value());
  CHECK(out.path->converged);
  // Double image: TX mirrored in z=0, RX mirrored in z=3.
  CHECK((out.path->interactions[0].position - Vec3(2.0 / 3.0, 0, 0)).norm() <= 1e-3);
  CHECK((out.path->interactions[1].position - Vec3(8.0 / 3.0, 0, 3)).norm() <= 1e-3);
  CHECK(out.path->total_length == doctest::Approx(2.0 * std::sqrt(13.0)).epsilon(1e-3));
  CHECK(verify_reflection_law(*out.path, scene, 1e-3));
}

TEST_CASE("degenerate candidate is rejected") {
  std::vector<LabeledPoint> pts;
  add_wall(pts, Vec3(-0.2, -0.6, 0), Vec3(1.4, 0, 0), Vec3(0, 1.2, 0), Vec3(0, 0, 1), 0, 0.03);
  Scene scene = scene_with_radios(std::move(pts), Vec3(0, 0, 1), Vec3(1, 0, 1));
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});
  const PathCandidate cand =
      candidate(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0, 0, 1), 0)});
  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  CHECK(!out.path.has_value());
  CHECK(out.reason == RejectReason::degenerate);
}

TEST_CASE("reprojection away from any surface is a ray miss") {
  std::vector<LabeledPoint> pts;
  add_wall(pts, Vec3(0, -0.6, 0), Vec3(1, 0, 0), Vec3(0, 1.2, 0), Vec3(0, 0, 1), 0, 0.03);
  Scene scene = scene_with_radios(std::move(pts), Vec3(5, 0, 1), Vec3(6, 0, 1));
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});
  const PathCandidate cand =
      candidate(Vec3(5, 0, 1), Vec3(6, 0, 1), {reflection_at(Vec3(5.3, 0, 0), 0)});
  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  CHECK(!out.path.has_value());
  CHECK(out.reason == RejectReason::ray_missed);
}

TEST_CASE("converged but blocked paths are rejected as occluded") {
  std::vector<LabeledPoint> pts;
  add_wall(pts, Vec3(-0.2, -0.6, 0), Vec3(1.4, 0, 0), Vec3(0, 1.2, 0), Vec3(0, 0, 1), 0, 0.03);
  add_wall(pts, Vec3(0.1, -0.3, 0.5), Vec3(0.3, 0, 0), Vec3(0, 0.6, 0), Vec3(0, 0, 1), 9, 0.03);
  Scene scene = scene_with_radios(std::move(pts), Vec3(0, 0, 1), Vec3(1, 0, 1));
  const VoxelGrid grid = build_grid(scene, VoxelizationParams{});
  const PathCandidate cand =
      candidate(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0.4, 0, 0), 0)});
  const RefineOutcome out = refine_path(cand, grid, scene, RefineParams{});
  CHECK(!out.path.has_value());
  CHECK(out.reason == RejectReason::occluded);
}

TEST_CASE("dedup_by_label keeps the shortest path per chain") {
  ExactPath a = make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0.5, 0, 0), 3)});
  ExactPath b = a;
  a.total_length = 5.0;
  a.delay = a.total_length / kSpeedOfLight;
  b.total_length = 5.2;
  b.delay = b.total_length / kSpeedOfLight;
  const auto kept = dedup_by_label({b, a});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].total_length == 5.0);

  ExactPath c = make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0.5, 0, 0), 4)});
  const auto both = dedup_by_label({a, c});
  CHECK(both.size() == 2);  // different labels, different groups
  CHECK(both[0].delay <= both[1].delay);
}

TEST_CASE("dedup_by_label collapses kappa duplicates") {
  std::vector<ExactPath> paths;
  for (int i = 0; i < 100; ++i) {
    ExactPath p = make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1),
                             {reflection_at(Vec3(0.5 + 0.001 * i, 0, 0), 3)});
    paths.push_back(p);
  }
  const auto kept = dedup_by_label(paths);
  REQUIRE(kept.size() == 1);
  // The minimum-length member survives (offset 0 is the symmetric optimum).
  CHECK(kept[0].interactions[0].position.x() == doctest::Approx(0.5));

  const auto again = dedup_by_label(kept);
  CHECK(again.size() == 1);  // idempotent
}

TEST_CASE("dedup_by_fresnel removes millimetre-scale duplicates at 60 GHz") {
  const double freq = 60e9;
  const Vec3 tx(-1, 0, 0.5), rx(1, 0, 0.5);
  ExactPath a = make_exact(tx, rx, {reflection_at(Vec3(0, 0, 0), 3)});
  ExactPath near_dup = make_exact(tx, rx, {reflection_at(Vec3(0.001, 0, 0), 4)});
  ExactPath far_apart = make_exact(tx, rx, {reflection_at(Vec3(0, 1, 0), 5)});

  auto kept = dedup_by_fresnel({a, near_dup}, freq);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].interactions[0].label == 3);  // shorter path wins

  kept = dedup_by_fresnel({a, far_apart}, freq);
  CHECK(kept.size() == 2);  // 1 m apart is far outside the 5 mm zone

  kept = dedup_by_fresnel({a}, freq);
  CHECK(kept.size() == 1);  // single path unchanged

  // Different kind sequences never collapse.
  ExactPath diff = make_exact(tx, rx, {diffraction_at(Vec3(0, 0, 0), 3)});
  diff.total_length += 1e-9;
  diff.delay = diff.total_length / kSpeedOfLight;
  kept = dedup_by_fresnel({a, diff}, freq);
  CHECK(kept.size() == 2);
}

TEST_CASE("dedup invariants: sorted, subset, idempotent") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ExactPath> paths;
  for (int i = 0; i < 40; ++i) {
    paths.push_back(make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1),
                               {reflection_at(Vec3(u(rng), u(rng), 0), i % 5)}));
  }
  const auto labeled = dedup_by_label(paths);
  const auto fresnel = dedup_by_fresnel(labeled, 60e9);
  CHECK(fresnel.size() <= labeled.size());
  CHECK(labeled.size() <= paths.size());
  for (std::size_t i = 1; i < fresnel.size(); ++i) {
    CHECK(fresnel[i - 1].delay <= fresnel[i].delay);
  }
  const auto twice = dedup_by_fresnel(fresnel, 60e9);
  CHECK(twice.size() == fresnel.size());
  for (const auto& p : fresnel) {
    const bool found = std::any_of(paths.begin(), paths.end(), [&](const ExactPath& q) {
      return q.total_length == p.total_length &&
             q.interactions[0].position == p.interactions[0].position;
    });
    CHECK(found);
  }
}

TEST_CASE("verify_reflection_law on hand-built paths") {
  Scene scene;  // edges unused for pure reflections
  const ExactPath specular =
      make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0.5, 0, 0), 0)});
  CHECK(verify_reflection_law(specular, scene, 1e-4));

  const ExactPath skewed =
      make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1), {reflection_at(Vec3(0.51, 0, 0), 0)});
  CHECK(!verify_reflection_law(skewed, scene, 1e-4));

  const ExactPath los = make_exact(Vec3(0, 0, 1), Vec3(1, 0, 1), {});
  CHECK(verify_reflection_law(los, scene, 1e-4));  // vacuous

  Scene with_edge;
  with_edge.edges.push_back({Vec3(-1, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 1), Vec3(0, 0, -1), 5});
  const ExactPath keller =
      make_exact(Vec3(0, -1, 1), Vec3(0, 1, 1), {diffraction_at(Vec3(0, 0, 0), 5, 0)});
  CHECK(verify_reflection_law(keller, with_edge, 1e-4));
  const ExactPath bent =
      make_exact(Vec3(0, -1, 1), Vec3(0.5, 1, 1), {diffraction_at(Vec3(0, 0, 0), 5, 0)});
  CHECK(!verify_reflection_law(bent, with_edge, 1e-4));
}

}  // TEST_SUITE
