#pragma once

#include <string>
#include <vector>

#include "pcray/refine.hpp"
#include "pcray/scene.hpp"
#include "pcray/voxel_grid.hpp"

namespace pcray {

struct RunConfig {
  std::string scene_path;
  std::string edges_path;
  std::string output_path;
  double carrier_frequency_hz = 60e9;
  double voxel_size_m = 0.5;
  int division_factor = 2;
  int kappa = 100;
  int max_interactions = 5;
  int max_diffractions = 1;
  double cone_apex_angle_deg = 1.0;
  int diffraction_ray_count = 360;
  double delta = 1e-4;
  int rho = 2000;
  double step_size = 0.5;
  std::uint32_t seed = 1;
  int thread_count = 0;  // 0 = hardware concurrency
  bool fresnel_enabled = true;
  std::vector<Vec3> transmitters;  // radio placement travels with the config
  std::vector<Vec3> receivers;
};

// Flat JSON object, keys named exactly as the RunConfig fields; unknown keys
// are rejected.
RunConfig load_run_config(const std::string& path);

// FNV-1a over the physics-relevant fields (paths and thread_count excluded).
std::uint64_t config_hash(const RunConfig& config);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunSummary {
  std::size_t point_count = 0;
  std::size_t edge_count = 0;
  std::size_t ie_count = 0;
  Eigen::Vector3i grid_dims = Eigen::Vector3i::Zero();
  std::size_t coarse_paths = 0;   // LOS + propagation candidates
  std::size_t refined_paths = 0;  // converged before dedup
  std::size_t rejected[4] = {0, 0, 0, 0};  // indexed by RejectReason
  std::size_t exact_paths = 0;    // final output
  std::vector<StageTiming> timings;
  std::vector<ExactPath> paths;
  std::uint64_t hash = 0;
};

// Full pipeline over an in-memory scene; does not touch the filesystem.
RunSummary run_pipeline_on_scene(const Scene& scene, const RunConfig& config);

// load -> validate -> voxelize -> trace -> refine -> dedup -> write.
RunSummary run_pipeline(const RunConfig& config);

}  // namespace pcray
