#include "pcray/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pcray/io.hpp"
#include "pcray/parallel.hpp"
#include "pcray/tracer.hpp"

namespace pcray {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

[[noreturn]] void stage_error(const std::string& stage, const std::string& what) {
  throw std::runtime_error(stage + ": " + what);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j = json::parse(in);
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");

  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "scene_path") {
      cfg.scene_path = value.get<std::string>();
    } else if (key == "edges_path") {
      cfg.edges_path = value.get<std::string>();
    } else if (key == "output_path") {
      cfg.output_path = value.get<std::string>();
    } else if (key == "carrier_frequency_hz") {
      cfg.carrier_frequency_hz = value.get<double>();
    } else if (key == "voxel_size_m") {
      cfg.voxel_size_m = value.get<double>();
    } else if (key == "division_factor") {
      cfg.division_factor = value.get<int>();
    } else if (key == "kappa") {
      cfg.kappa = value.get<int>();
    } else if (key == "max_interactions") {
      cfg.max_interactions = value.get<int>();
    } else if (key == "max_diffractions") {
      cfg.max_diffractions = value.get<int>();
    } else if (key == "cone_apex_angle_deg") {
      cfg.cone_apex_angle_deg = value.get<double>();
    } else if (key == "diffraction_ray_count") {
      cfg.diffraction_ray_count = value.get<int>();
    } else if (key == "delta") {
      cfg.delta = value.get<double>();
    } else if (key == "rho") {
      cfg.rho = value.get<int>();
    } else if (key == "step_size") {
      cfg.step_size = value.get<double>();
    } else if (key == "seed") {
      cfg.seed = value.get<std::uint32_t>();
    } else if (key == "thread_count") {
      cfg.thread_count = value.get<int>();
    } else if (key == "fresnel_enabled") {
      cfg.fresnel_enabled = value.get<bool>();
    } else if (key == "transmitters") {
      for (const json& v : value) cfg.transmitters.push_back(vec3_from_json(v));
    } else if (key == "receivers") {
      for (const json& v : value) cfg.receivers.push_back(vec3_from_json(v));
    } else {
      throw std::runtime_error("unknown config key: " + key);
    }
  }
  return cfg;
}

std::uint64_t config_hash(const RunConfig& config) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%.17g|%.17g|%d|%d|%d|%d|%.17g|%d|%.17g|%d|%.17g|%d",
                config.carrier_frequency_hz, config.voxel_size_m, config.division_factor,
                config.kappa, config.max_interactions, config.max_diffractions,
                config.cone_apex_angle_deg, config.diffraction_ray_count, config.delta,
                config.rho, config.step_size, config.fresnel_enabled ? 1 : 0);
  return fnv1a(buf);
}

RunSummary run_pipeline_on_scene(const Scene& scene, const RunConfig& config) {
  RunSummary summary;
  summary.hash = config_hash(config);
  summary.point_count = scene.points.size();
  summary.edge_count = scene.edges.size();
  const int threads = resolve_thread_count(config.thread_count);

  auto t0 = Clock::now();
  const auto violations = validate_scene(scene);
  if (!violations.empty()) {
    stage_error("validate", violations.front().rule + " (" + violations.front().detail + ")");
  }
  summary.timings.push_back({"validate", seconds_since(t0)});

  t0 = Clock::now();
  VoxelizationParams vox;
  vox.voxel_size = config.voxel_size_m;
  vox.division_factor = config.division_factor;
  VoxelGrid grid;
  try {
    grid = build_grid(scene, vox);
  } catch (const std::exception& e) {
    stage_error("voxelize", e.what());
  }
  summary.ie_count = grid.ies.size();
  summary.grid_dims = grid.dims;
  summary.timings.push_back({"voxelize", seconds_since(t0)});

  TraceParams trace;
  trace.max_interactions = config.max_interactions;
  trace.kappa = config.kappa;
  trace.cone_apex_angle = deg_to_rad(config.cone_apex_angle_deg);
  trace.diffraction_ray_count = config.diffraction_ray_count;
  trace.max_diffractions = config.max_diffractions;

  t0 = Clock::now();
  std::vector<PathCandidate> candidates;
  for (const Radio& tx : scene.transmitters) {
    TransmissionResult tr;
    try {
      tr = transmission_phase(tx, grid, scene, trace);
      auto traced = propagate(tx, tr.initial_hits, grid, scene, trace, threads);
      candidates.insert(candidates.end(), tr.los_paths.begin(), tr.los_paths.end());
      candidates.insert(candidates.end(), traced.begin(), traced.end());
    } catch (const std::exception& e) {
      stage_error("trace", e.what());
    }
  }
  summary.coarse_paths = candidates.size();
  summary.timings.push_back({"trace", seconds_since(t0)});

  t0 = Clock::now();
  RefineParams refine;
  refine.delta = config.delta;
  refine.rho = config.rho;
  refine.step_size = config.step_size;
  refine.fresnel_enabled = config.fresnel_enabled;

  std::vector<RefineOutcome> outcomes(candidates.size());
  try {
    parallel_for(candidates.size(), threads, [&](std::size_t i) {
      if (candidates[i].interactions.empty()) {
        // LOS candidates are already exact.
        ExactPath los;
        los.tx_id = candidates[i].tx_id;
        los.rx_id = candidates[i].rx_id;
        los.tx_position = candidates[i].tx_position;
        los.rx_position = candidates[i].rx_position;
        los.total_length = candidates[i].coarse_length;
        los.delay = los.total_length / kSpeedOfLight;
        los.converged = true;
        outcomes[i] = {los, RejectReason::not_converged};
      } else {
        outcomes[i] = refine_path(candidates[i], grid, scene, refine);
      }
    });
  } catch (const std::exception& e) {
    stage_error("refine", e.what());
  }
  std::vector<ExactPath> exact;
  for (const RefineOutcome& o : outcomes) {
    if (o.path) {
      exact.push_back(*o.path);
    } else {
      ++summary.rejected[static_cast<int>(o.reason)];
    }
  }
  summary.refined_paths = exact.size();
  summary.timings.push_back({"refine", seconds_since(t0)});

  t0 = Clock::now();
  exact = dedup_by_label(std::move(exact));
  if (config.fresnel_enabled) {
    exact = dedup_by_fresnel(std::move(exact), config.carrier_frequency_hz);
  }
  std::sort(exact.begin(), exact.end(), [](const ExactPath& a, const ExactPath& b) {
    if (a.tx_id != b.tx_id) return a.tx_id < b.tx_id;
    if (a.rx_id != b.rx_id) return a.rx_id < b.rx_id;
    if (a.delay != b.delay) return a.delay < b.delay;
    if (a.interactions.size() != b.interactions.size()) {
      return a.interactions.size() < b.interactions.size();
    }
    for (std::size_t k = 0; k < a.interactions.size(); ++k) {
      const Vec3& pa = a.interactions[k].position;
      const Vec3& pb = b.interactions[k].position;
      if (pa != pb) return lex_less(pa, pb);
    }
    return false;
  });
  summary.exact_paths = exact.size();
  summary.paths = std::move(exact);
  summary.timings.push_back({"dedup", seconds_since(t0)});
  return summary;
}

RunSummary run_pipeline(const RunConfig& config) {
  Scene scene;
  scene.carrier_frequency_hz = config.carrier_frequency_hz;
  auto t0 = Clock::now();
  try {
    if (!config.scene_path.empty()) scene.points = load_point_cloud(config.scene_path);
    if (!config.edges_path.empty()) scene.edges = load_edges(config.edges_path);
  } catch (const std::exception& e) {
    stage_error("load", e.what());
  }
  std::uint32_t id = 0;
  for (const Vec3& p : config.transmitters) {
    scene.transmitters.push_back(Radio{RadioKind::Tx, p, id++});
  }
  id = 0;
  for (const Vec3& p : config.receivers) {
    scene.receivers.push_back(Radio{RadioKind::Rx, p, id++});
  }
  const double load_seconds = seconds_since(t0);

  RunSummary summary = run_pipeline_on_scene(scene, config);
  summary.timings.insert(summary.timings.begin(), {"load", load_seconds});

  if (!config.output_path.empty()) {
    t0 = Clock::now();
    try {
      write_paths(config.output_path, summary.paths, summary.hash);
    } catch (const std::exception& e) {
      stage_error("write", e.what());
    }
    summary.timings.push_back({"write", seconds_since(t0)});
  }
  return summary;
}

}  // namespace pcray
