#pragma once

#include <string>
#include <vector>

#include "pcray/oracle.hpp"
#include "pcray/refine.hpp"
#include "pcray/scene.hpp"

namespace pcray {

// Polygon point files with per-vertex x,y,z,nx,ny,nz (float32) and label
// (uint32); ascii and binary_little_endian variants. Unknown fixed-size
// vertex properties are skipped.
std::vector<LabeledPoint> load_point_cloud(const std::string& path);
void save_point_cloud(const std::string& path, const std::vector<LabeledPoint>& points,
                      bool binary = true);

// Edge records: one per line, 13 numbers (start, end, normal_a, normal_b,
// label); '#' starts a comment.
std::vector<DiffractionEdge> load_edges(const std::string& path);
void save_edges(const std::string& path, const std::vector<DiffractionEdge>& edges);

PlanarScene load_planar_scene(const std::string& path);
void save_planar_scene(const std::string& path, const PlanarScene& scene);

// Line-delimited path records preceded by a header line carrying the config
// hash; positions printed to 9 significant digits; records sorted by
// (tx, rx, delay) by the pipeline before writing.
void write_paths(const std::string& path, const std::vector<ExactPath>& paths,
                 std::uint64_t config_hash);

struct PathRecordInteraction {
  std::string kind;
  Vec3 position = Vec3::Zero();
  Label label = 0;
};

struct PathRecord {
  std::uint32_t tx_id = 0;
  std::uint32_t rx_id = 0;
  double delay_s = 0.0;
  double length_m = 0.0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::vector<PathRecordInteraction> interactions;
};

struct PathsFile {
  int version = 0;
  std::string config_hash;
  std::vector<PathRecord> records;
};

PathsFile read_paths(const std::string& path);

}  // namespace pcray
