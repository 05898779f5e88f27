#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcray/io.hpp"
#include "pcray/oracle.hpp"
#include "pcray/pipeline.hpp"
#include "pcray/tracer.hpp"

namespace {

using namespace pcray;

Vec3 parse_vec3(const std::string& text) {
  Vec3 v;
  char extra;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &v.x(), &v.y(), &v.z(), &extra) != 3) {
    throw CLI::ValidationError("expected 'x,y,z', got '" + text + "'");
  }
  return v;
}

void print_summary(const RunSummary& summary) {
  std::printf("points            %zu\n", summary.point_count);
  std::printf("edges             %zu\n", summary.edge_count);
  std::printf("grid              %dx%dx%d voxels, %zu IEs\n", summary.grid_dims.x(),
              summary.grid_dims.y(), summary.grid_dims.z(), summary.ie_count);
  std::printf("coarse paths      %zu\n", summary.coarse_paths);
  std::printf("refined paths     %zu\n", summary.refined_paths);
  std::printf("rejected          ray_missed=%zu not_converged=%zu occluded=%zu degenerate=%zu\n",
              summary.rejected[0], summary.rejected[1], summary.rejected[2],
              summary.rejected[3]);
  std::printf("exact paths       %zu\n", summary.exact_paths);
  for (const StageTiming& t : summary.timings) {
    std::printf("time %-12s %.3f s\n", t.stage.c_str(), t.seconds);
  }
}

struct TraceFlags {
  std::string config_path;
  RunConfig flags;  // values arriving via CLI
  std::vector<std::string> tx_texts, rx_texts;
};

void add_trace_options(CLI::App* cmd, TraceFlags& tf) {
  cmd->add_option("--config", tf.config_path, "JSON config file (flat RunConfig object)");
  cmd->add_option("--scene_path", tf.flags.scene_path, "point cloud file");
  cmd->add_option("--edges_path", tf.flags.edges_path, "diffraction edges file");
  cmd->add_option("--output_path", tf.flags.output_path, "path records output file");
  cmd->add_option("--carrier_frequency_hz", tf.flags.carrier_frequency_hz);
  cmd->add_option("--voxel_size_m", tf.flags.voxel_size_m);
  cmd->add_option("--division_factor", tf.flags.division_factor);
  cmd->add_option("--kappa", tf.flags.kappa);
  cmd->add_option("--max_interactions", tf.flags.max_interactions);
  cmd->add_option("--max_diffractions", tf.flags.max_diffractions);
  cmd->add_option("--cone_apex_angle_deg", tf.flags.cone_apex_angle_deg);
  cmd->add_option("--diffraction_ray_count", tf.flags.diffraction_ray_count);
  cmd->add_option("--delta", tf.flags.delta);
  cmd->add_option("--rho", tf.flags.rho);
  cmd->add_option("--step_size", tf.flags.step_size);
  cmd->add_option("--seed", tf.flags.seed, "only used by make-scene");
  cmd->add_option("--thread_count", tf.flags.thread_count, "0 = hardware concurrency");
  cmd->add_option("--fresnel_enabled", tf.flags.fresnel_enabled);
  cmd->add_option("--tx", tf.tx_texts, "transmitter position 'x,y,z' (repeatable)");
  cmd->add_option("--rx", tf.rx_texts, "receiver position 'x,y,z' (repeatable)");
}

RunConfig resolve_config(const CLI::App* cmd, const TraceFlags& tf) {
  RunConfig cfg;
  if (!tf.config_path.empty()) cfg = load_run_config(tf.config_path);
  auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
  if (passed("--scene_path")) cfg.scene_path = tf.flags.scene_path;
  if (passed("--edges_path")) cfg.edges_path = tf.flags.edges_path;
  if (passed("--output_path")) cfg.output_path = tf.flags.output_path;
  if (passed("--carrier_frequency_hz")) cfg.carrier_frequency_hz = tf.flags.carrier_frequency_hz;
  if (passed("--voxel_size_m")) cfg.voxel_size_m = tf.flags.voxel_size_m;
  if (passed("--division_factor")) cfg.division_factor = tf.flags.division_factor;
  if (passed("--kappa")) cfg.kappa = tf.flags.kappa;
  if (passed("--max_interactions")) cfg.max_interactions = tf.flags.max_interactions;
  if (passed("--max_diffractions")) cfg.max_diffractions = tf.flags.max_diffractions;
  if (passed("--cone_apex_angle_deg")) cfg.cone_apex_angle_deg = tf.flags.cone_apex_angle_deg;
  if (passed("--diffraction_ray_count")) {
    cfg.diffraction_ray_count = tf.flags.diffraction_ray_count;
  }
  if (passed("--delta")) cfg.delta = tf.flags.delta;
  if (passed("--rho")) cfg.rho = tf.flags.rho;
  if (passed("--step_size")) cfg.step_size = tf.flags.step_size;
  if (passed("--seed")) cfg.seed = tf.flags.seed;
  if (passed("--thread_count")) cfg.thread_count = tf.flags.thread_count;
  if (passed("--fresnel_enabled")) cfg.fresnel_enabled = tf.flags.fresnel_enabled;
  if (!tf.tx_texts.empty()) {
    cfg.transmitters.clear();
    for (const std::string& t : tf.tx_texts) cfg.transmitters.push_back(parse_vec3(t));
  }
  if (!tf.rx_texts.empty()) {
    cfg.receivers.clear();
    for (const std::string& t : tf.rx_texts) cfg.receivers.push_back(parse_vec3(t));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-cloud ray launching for radio propagation paths"};
  app.require_subcommand(1);

  auto* trace_cmd = app.add_subcommand("trace", "run the full pipeline");
  TraceFlags trace_flags;
  add_trace_options(trace_cmd, trace_flags);

  auto* vox_cmd = app.add_subcommand("voxelize", "build the grid and print statistics");
  TraceFlags vox_flags;
  add_trace_options(vox_cmd, vox_flags);

  auto* val_cmd = app.add_subcommand(
      "validate", "compare pipeline output to the image-method oracle on a planar scene");
  std::string val_planar;
  double val_density = 5000.0;
  int val_max_order = 3;
  double val_angle_tol_deg = 1.0;
  TraceFlags val_flags;
  val_cmd->add_option("--planar", val_planar, "planar scene JSON")->required();
  val_cmd->add_option("--density", val_density, "sampling density, points per m^2");
  val_cmd->add_option("--max_order", val_max_order, "oracle reflection order (<= 3)");
  val_cmd->add_option("--angle_tol_deg", val_angle_tol_deg, "match tolerance, degrees");
  add_trace_options(val_cmd, val_flags);

  auto* make_cmd = app.add_subcommand("make-scene", "sample a planar scene into fixtures");
  std::string make_planar, scene_out, edges_out;
  double make_density = 5000.0;
  std::uint32_t make_seed = 1;
  bool make_ascii = false;
  make_cmd->add_option("--planar", make_planar, "planar scene JSON")->required();
  make_cmd->add_option("--density", make_density, "sampling density, points per m^2");
  make_cmd->add_option("--seed", make_seed, "sampling seed");
  make_cmd->add_option("--scene_out", scene_out, "output point cloud file")->required();
  make_cmd->add_option("--edges_out", edges_out, "output edges file");
  make_cmd->add_flag("--ascii", make_ascii, "write an ascii point file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*trace_cmd) {
      const RunConfig cfg = resolve_config(trace_cmd, trace_flags);
      const RunSummary summary = run_pipeline(cfg);
      print_summary(summary);
    } else if (*vox_cmd) {
      const RunConfig cfg = resolve_config(vox_cmd, vox_flags);
      Scene scene;
      scene.carrier_frequency_hz = cfg.carrier_frequency_hz;
      if (!cfg.scene_path.empty()) scene.points = load_point_cloud(cfg.scene_path);
      if (!cfg.edges_path.empty()) scene.edges = load_edges(cfg.edges_path);
      std::uint32_t id = 0;
      for (const Vec3& p : cfg.transmitters) {
        scene.transmitters.push_back(Radio{RadioKind::Tx, p, id++});
      }
      id = 0;
      for (const Vec3& p : cfg.receivers) {
        scene.receivers.push_back(Radio{RadioKind::Rx, p, id++});
      }
      VoxelizationParams vox;
      vox.voxel_size = cfg.voxel_size_m;
      vox.division_factor = cfg.division_factor;
      const VoxelGrid grid = build_grid(scene, vox);
      std::size_t by_kind[3] = {0, 0, 0};
      for (const auto& ie : grid.ies) ++by_kind[static_cast<int>(ie.kind)];
      std::int32_t max_march = 0;
      for (const auto& cell : grid.cells) {
        if (cell.march != kMarchNoIes) max_march = std::max(max_march, cell.march);
      }
      std::printf("grid %dx%dx%d voxels (%zu cells), origin (%g, %g, %g), voxel %g m\n",
                  grid.dims.x(), grid.dims.y(), grid.dims.z(), grid.cells.size(),
                  grid.origin.x(), grid.origin.y(), grid.origin.z(), grid.voxel_size);
      std::printf("IEs %zu (surface %zu, edge %zu, receiver %zu), max march %d\n",
                  grid.ies.size(), by_kind[0], by_kind[1], by_kind[2], max_march);
    } else if (*val_cmd) {
      const PlanarScene planar = load_planar_scene(val_planar);
      RunConfig cfg = resolve_config(val_cmd, val_flags);
      const Scene scene = scene_from_planar(planar, val_density, cfg.seed);
      cfg.transmitters = {planar.tx};
      cfg.receivers = {planar.rx};
      const RunSummary summary = run_pipeline_on_scene(scene, cfg);
      const auto reference = image_method_paths(planar, std::min(val_max_order, 3));
      const MatchReport report =
          match_paths(summary.paths, reference, deg_to_rad(val_angle_tol_deg));
      print_summary(summary);
      std::printf("oracle paths      %zu\n", reference.size());
      std::printf("matched           %d (%.1f%%)\n", report.matched_count,
                  report.percent_matched);
      for (std::size_t i = 0; i < report.reference_matched.size(); ++i) {
        if (!report.reference_matched[i]) {
          std::printf("unmatched oracle path %zu (delay %.9g ns)\n", i,
                      reference[i].delay * 1e9);
        }
      }
    } else if (*make_cmd) {
      const PlanarScene planar = load_planar_scene(make_planar);
      const auto points = sample_planar_scene(planar, make_density, make_seed);
      save_point_cloud(scene_out, points, !make_ascii);
      std::printf("wrote %zu points to %s\n", points.size(), scene_out.c_str());
      if (!edges_out.empty()) {
        save_edges(edges_out, planar.edges);
        std::printf("wrote %zu edges to %s\n", planar.edges.size(), edges_out.c_str());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
