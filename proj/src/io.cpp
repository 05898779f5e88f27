#include "pcray/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pcray {

namespace {

using nlohmann::json;

[[noreturn]] void header_error(int line_no, const std::string& what) {
  throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " + what);
}

std::size_t ply_type_size(const std::string& type, int line_no) {
  if (type == "char" || type == "int8" || type == "uchar" || type == "uint8") return 1;
  if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") return 2;
  if (type == "int" || type == "int32" || type == "uint" || type == "uint32" ||
      type == "float" || type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  header_error(line_no, "unknown property type '" + type + "'");
}

struct PlyProperty {
  std::string type;
  std::string name;
  std::size_t offset = 0;  // binary layout
};

}  // namespace

std::vector<LabeledPoint> load_point_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open point cloud file: " + path);

  int line_no = 0;
  auto next_line = [&](std::string& line) {
    if (!std::getline(in, line)) header_error(line_no + 1, "unexpected end of header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };

  std::string line;
  next_line(line);
  if (line != "ply") header_error(line_no, "expected 'ply' magic");
  next_line(line);
  bool binary;
  if (line == "format ascii 1.0") {
    binary = false;
  } else if (line == "format binary_little_endian 1.0") {
    binary = true;
  } else {
    header_error(line_no, "unsupported format '" + line + "'");
  }

  std::size_t vertex_count = 0;
  bool in_vertex_element = false, vertex_seen = false;
  std::vector<PlyProperty> props;
  std::size_t stride = 0;
  for (;;) {
    next_line(line);
    std::istringstream iss(line);
    std::string word;
    iss >> word;
    if (word == "comment" || word == "obj_info" || word.empty()) continue;
    if (word == "end_header") break;
    if (word == "element") {
      std::string name;
      long long count = -1;
      if (!(iss >> name >> count) || count < 0) {
        header_error(line_no, "malformed element declaration");
      }
      if (name == "vertex") {
        if (vertex_seen) header_error(line_no, "duplicate vertex element");
        vertex_seen = true;
        in_vertex_element = true;
        vertex_count = static_cast<std::size_t>(count);
      } else {
        if (!vertex_seen && count > 0) {
          header_error(line_no, "element '" + name + "' precedes vertex data");
        }
        in_vertex_element = false;  // trailing elements are never read
      }
      continue;
    }
    if (word == "property") {
      if (!in_vertex_element) continue;
      PlyProperty p;
      iss >> p.type;
      if (p.type == "list") header_error(line_no, "list property in vertex element");
      iss >> p.name;
      if (p.name.empty()) header_error(line_no, "malformed property declaration");
      p.offset = stride;
      stride += ply_type_size(p.type, line_no);
      props.push_back(p);
      continue;
    }
    header_error(line_no, "unknown header keyword '" + word + "'");
  }
  if (!vertex_seen) header_error(line_no, "no vertex element");

  const char* required[] = {"x", "y", "z", "nx", "ny", "nz", "label"};
  int idx[7];
  for (int r = 0; r < 7; ++r) {
    idx[r] = -1;
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i].name == required[r]) idx[r] = static_cast<int>(i);
    }
    if (idx[r] < 0) throw std::runtime_error(std::string("missing field: ") + required[r]);
    const std::string& t = props[idx[r]].type;
    if (r < 6 && t != "float" && t != "float32") {
      throw std::runtime_error(std::string("field ") + required[r] + " must be float32");
    }
    if (r == 6 && t != "uint" && t != "uint32") {
      throw std::runtime_error("field label must be uint32");
    }
  }

  std::vector<LabeledPoint> points;
  points.reserve(vertex_count);
  if (binary) {
    std::vector<char> row(stride);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      in.read(row.data(), static_cast<std::streamsize>(stride));
      if (!in) throw std::runtime_error("truncated vertex data at record " + std::to_string(v));
      float f[6];
      std::uint32_t label;
      for (int r = 0; r < 6; ++r) std::memcpy(&f[r], row.data() + props[idx[r]].offset, 4);
      std::memcpy(&label, row.data() + props[idx[6]].offset, 4);
      points.push_back(LabeledPoint{Vec3(f[0], f[1], f[2]), Vec3(f[3], f[4], f[5]), label});
    }
  } else {
    std::vector<double> values(props.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
      if (!std::getline(in, line)) {
        throw std::runtime_error("truncated vertex data at record " + std::to_string(v));
      }
      std::istringstream iss(line);
      for (std::size_t i = 0; i < props.size(); ++i) {
        if (!(iss >> values[i])) {
          throw std::runtime_error("malformed vertex data at record " + std::to_string(v));
        }
      }
      points.push_back(LabeledPoint{
          Vec3(values[idx[0]], values[idx[1]], values[idx[2]]),
          Vec3(values[idx[3]], values[idx[4]], values[idx[5]]),
          static_cast<Label>(values[idx[6]])});
    }
  }
  return points;
}

void save_point_cloud(const std::string& path, const std::vector<LabeledPoint>& points,
                      bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write point cloud file: " + path);
  out << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float nx\nproperty float ny\nproperty float nz\n"
      << "property uint label\nend_header\n";
  if (binary) {
    for (const LabeledPoint& p : points) {
      const float row[6] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                            static_cast<float>(p.position.z()), static_cast<float>(p.normal.x()),
                            static_cast<float>(p.normal.y()),   static_cast<float>(p.normal.z())};
      out.write(reinterpret_cast<const char*>(row), sizeof(row));
      out.write(reinterpret_cast<const char*>(&p.label), sizeof(p.label));
    }
  } else {
    char buf[256];
    for (const LabeledPoint& p : points) {
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %.9g %.9g %u\n", p.position.x(),
                    p.position.y(), p.position.z(), p.normal.x(), p.normal.y(), p.normal.z(),
                    p.label);
      out << buf;
    }
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

std::vector<DiffractionEdge> load_edges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edges file: " + path);
  std::vector<DiffractionEdge> edges;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream iss(line);
    double v[13];
    if (!(iss >> v[0])) continue;  // blank or comment-only line
    for (int i = 1; i < 13; ++i) {
      if (!(iss >> v[i])) {
        throw std::runtime_error("edge record " + std::to_string(record) +
                                 ": expected 13 values");
      }
    }
    DiffractionEdge e;
    e.start = Vec3(v[0], v[1], v[2]);
    e.end = Vec3(v[3], v[4], v[5]);
    e.normal_a = Vec3(v[6], v[7], v[8]);
    e.normal_b = Vec3(v[9], v[10], v[11]);
    e.label = static_cast<Label>(v[12]);
    if ((e.end - e.start).norm() < 1e-12) {
      throw std::runtime_error("edge record " + std::to_string(record) + ": degenerate edge");
    }
    if (e.normal_a.norm() < 1e-12 || e.normal_b.norm() < 1e-12) {
      throw std::runtime_error("edge record " + std::to_string(record) + ": zero normal");
    }
    e.normal_a.normalize();
    e.normal_b.normalize();
    const Vec3 w = e.direction();
    if (std::abs(w.dot(e.normal_a)) > 1e-3 || std::abs(w.dot(e.normal_b)) > 1e-3) {
      throw std::runtime_error("edge record " + std::to_string(record) +
                               ": normal not perpendicular to edge");
    }
    edges.push_back(e);
    ++record;
  }
  return edges;
}

void save_edges(const std::string& path, const std::vector<DiffractionEdge>& edges) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write edges file: " + path);
  out << "# start_xyz end_xyz normal_a_xyz normal_b_xyz label\n";
  char buf[512];
  for (const DiffractionEdge& e : edges) {
    std::snprintf(buf, sizeof(buf),
                  "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %u\n",
                  e.start.x(), e.start.y(), e.start.z(), e.end.x(), e.end.y(), e.end.z(),
                  e.normal_a.x(), e.normal_a.y(), e.normal_a.z(), e.normal_b.x(),
                  e.normal_b.y(), e.normal_b.z(), e.label);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

namespace {

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

PlanarScene load_planar_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open planar scene file: " + path);
  json j = json::parse(in);
  PlanarScene scene;
  for (const json& r : j.value("rectangles", json::array())) {
    PlanarRect rect;
    rect.corner = vec3_from_json(r.at("corner"));
    rect.e1 = vec3_from_json(r.at("e1"));
    rect.e2 = vec3_from_json(r.at("e2"));
    rect.label = r.at("label").get<Label>();
    if (std::abs(rect.e1.dot(rect.e2)) > 1e-9 * rect.e1.norm() * rect.e2.norm()) {
      throw std::runtime_error("rectangle edge vectors must be orthogonal");
    }
    scene.rectangles.push_back(rect);
  }
  for (const json& r : j.value("edges", json::array())) {
    DiffractionEdge e;
    e.start = vec3_from_json(r.at("start"));
    e.end = vec3_from_json(r.at("end"));
    e.normal_a = vec3_from_json(r.at("normal_a")).normalized();
    e.normal_b = vec3_from_json(r.at("normal_b")).normalized();
    e.label = r.at("label").get<Label>();
    scene.edges.push_back(e);
  }
  scene.tx = vec3_from_json(j.at("tx"));
  scene.rx = vec3_from_json(j.at("rx"));
  return scene;
}

void save_planar_scene(const std::string& path, const PlanarScene& scene) {
  json j;
  j["rectangles"] = json::array();
  for (const PlanarRect& r : scene.rectangles) {
    j["rectangles"].push_back({{"corner", vec3_to_json(r.corner)},
                               {"e1", vec3_to_json(r.e1)},
                               {"e2", vec3_to_json(r.e2)},
                               {"label", r.label}});
  }
  j["edges"] = json::array();
  for (const DiffractionEdge& e : scene.edges) {
    j["edges"].push_back({{"start", vec3_to_json(e.start)},
                          {"end", vec3_to_json(e.end)},
                          {"normal_a", vec3_to_json(e.normal_a)},
                          {"normal_b", vec3_to_json(e.normal_b)},
                          {"label", e.label}});
  }
  j["tx"] = vec3_to_json(scene.tx);
  j["rx"] = vec3_to_json(scene.rx);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write planar scene file: " + path);
  out << j.dump(2) << "\n";
}

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_paths(const std::string& path, const std::vector<ExactPath>& paths,
                 std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write paths file: " + path);
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash));
  out << "{\"artifact\":\"paths\",\"version\":1,\"config_hash\":\"" << hash_hex << "\"}\n";
  for (const ExactPath& p : paths) {
    out << "{\"tx_id\":" << p.tx_id << ",\"rx_id\":" << p.rx_id
        << ",\"delay_s\":" << fmt9(p.delay) << ",\"length_m\":" << fmt9(p.total_length)
        << ",\"converged\":" << (p.converged ? "true" : "false")
        << ",\"gradient_norm\":" << fmt9(p.gradient_norm) << ",\"interactions\":[";
    for (std::size_t k = 0; k < p.interactions.size(); ++k) {
      const Interaction& it = p.interactions[k];
      if (k) out << ",";
      out << "{\"kind\":\""
          << (it.kind == InteractionKind::Reflection ? "reflection" : "diffraction")
          << "\",\"position\":[" << fmt9(it.position.x()) << "," << fmt9(it.position.y()) << ","
          << fmt9(it.position.z()) << "],\"label\":" << it.label << "}";
    }
    out << "]}\n";
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

PathsFile read_paths(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open paths file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty paths file: " + path);
  json header = json::parse(line);
  if (header.value("artifact", "") != "paths") {
    throw std::runtime_error("not a paths file: " + path);
  }
  PathsFile file;
  file.version = header.at("version").get<int>();
  file.config_hash = header.at("config_hash").get<std::string>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    PathRecord rec;
    rec.tx_id = j.at("tx_id").get<std::uint32_t>();
    rec.rx_id = j.at("rx_id").get<std::uint32_t>();
    rec.delay_s = j.at("delay_s").get<double>();
    rec.length_m = j.at("length_m").get<double>();
    rec.converged = j.at("converged").get<bool>();
    rec.gradient_norm = j.at("gradient_norm").get<double>();
    for (const json& ij : j.at("interactions")) {
      PathRecordInteraction it;
      it.kind = ij.at("kind").get<std::string>();
      it.position = vec3_from_json(ij.at("position"));
      it.label = ij.at("label").get<Label>();
      rec.interactions.push_back(std::move(it));
    }
    file.records.push_back(std::move(rec));
  }
  return file;
}

}  // namespace pcray
