#include "splatkit/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "splatkit/errors.hpp"
#include "splatkit/sh.hpp"

namespace splat {

namespace {

constexpr int kFullBasis = 16;  // degree 3
constexpr int kRestCount = 3 * (kFullBasis - 1);

struct PlyProperty {
  std::string type;
  std::string name;
};

struct PlyHeader {
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> properties;  // of the vertex element
  std::size_t data_offset = 0;
};

int type_size(const std::string& t) {
  if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" || t == "uint32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  if (t == "uchar" || t == "uint8" || t == "char" || t == "int8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  throw FormatError("PLY: unsupported property type '" + t + "'");
}

PlyHeader parse_header(std::istream& in, const std::string& path) {
  PlyHeader header;
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw FormatError(path + ": not a PLY file");
  bool in_vertex = false;
  bool format_ok = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") continue;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian")
        throw FormatError(path + ": only binary_little_endian PLY is supported");
      format_ok = true;
    } else if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex = (name == "vertex");
      if (in_vertex) header.vertex_count = count;
      else if (count != 0)
        throw FormatError(path + ": unexpected non-empty element '" + name + "'");
    } else if (word == "property") {
      if (!in_vertex) continue;
      PlyProperty prop;
      ls >> prop.type >> prop.name;
      if (prop.type == "list") throw FormatError(path + ": list properties are not supported");
      header.properties.push_back(prop);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!format_ok) throw FormatError(path + ": missing format declaration");
  header.data_offset = static_cast<std::size_t>(in.tellg());
  return header;
}

double read_value(const char* bytes, const std::string& type) {
  if (type == "float" || type == "float32") {
    float v;
    std::memcpy(&v, bytes, 4);
    return v;
  }
  if (type == "double" || type == "float64") {
    double v;
    std::memcpy(&v, bytes, 8);
    return v;
  }
  if (type == "uchar" || type == "uint8") return static_cast<double>(static_cast<std::uint8_t>(bytes[0]));
  if (type == "char" || type == "int8") return static_cast<double>(static_cast<std::int8_t>(bytes[0]));
  if (type == "ushort" || type == "uint16") {
    std::uint16_t v;
    std::memcpy(&v, bytes, 2);
    return v;
  }
  if (type == "short" || type == "int16") {
    std::int16_t v;
    std::memcpy(&v, bytes, 2);
    return v;
  }
  if (type == "int" || type == "int32") {
    std::int32_t v;
    std::memcpy(&v, bytes, 4);
    return v;
  }
  if (type == "uint" || type == "uint32") {
    std::uint32_t v;
    std::memcpy(&v, bytes, 4);
    return v;
  }
  throw FormatError("PLY: unsupported property type '" + type + "'");
}

struct VertexTable {
  PlyHeader header;
  std::vector<char> data;
  std::vector<int> offsets;
  int stride = 0;

  int column(const std::string& name, const std::string& context) const {
    for (std::size_t i = 0; i < header.properties.size(); ++i)
      if (header.properties[i].name == name) return static_cast<int>(i);
    throw SchemaError(name, context);
  }

  double value(std::size_t row, int col) const {
    return read_value(data.data() + row * stride + offsets[col], header.properties[col].type);
  }
};

VertexTable load_vertex_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path);
  VertexTable table;
  table.header = parse_header(in, path);
  int offset = 0;
  for (const auto& prop : table.header.properties) {
    table.offsets.push_back(offset);
    offset += type_size(prop.type);
  }
  table.stride = offset;
  table.data.resize(table.header.vertex_count * table.stride);
  in.read(table.data.data(), static_cast<std::streamsize>(table.data.size()));
  if (!in) throw FormatError(path + ": truncated vertex data");
  return table;
}

void append_f32(std::vector<char>& buf, double v) {
  const float f = static_cast<float>(v);
  const char* b = reinterpret_cast<const char*>(&f);
  buf.insert(buf.end(), b, b + 4);
}

}  // namespace

void write_ply(const Scene<double>& scene, const std::string& path) {
  if (scene.gaussians.empty()) throw Error("write_ply: empty scene");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  header << "element vertex " << scene.gaussians.size() << "\n";
  auto prop = [&](const std::string& name) { header << "property float " << name << "\n"; };
  prop("x");
  prop("y");
  prop("z");
  for (int i = 0; i < 3; ++i) prop("f_dc_" + std::to_string(i));
  for (int i = 0; i < kRestCount; ++i) prop("f_rest_" + std::to_string(i));
  prop("opacity");
  for (int i = 0; i < 3; ++i) prop("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) prop("rot_" + std::to_string(i));
  header << "end_header\n";
  out << header.str();

  std::vector<char> buf;
  buf.reserve(scene.gaussians.size() * (3 + 3 + kRestCount + 1 + 3 + 4) * 4);
  for (const auto& g : scene.gaussians) {
    const int basis = static_cast<int>(g.sh_coeffs.cols());
    for (int i = 0; i < 3; ++i) append_f32(buf, g.center[i]);
    for (int c = 0; c < 3; ++c) append_f32(buf, basis > 0 ? g.sh_coeffs(c, 0) : 0.0);
    // f_rest is channel-major: 15 R coefficients, then G, then B.
    for (int c = 0; c < 3; ++c)
      for (int b = 1; b < kFullBasis; ++b) append_f32(buf, b < basis ? g.sh_coeffs(c, b) : 0.0);
    append_f32(buf, g.opacity_logit);
    for (int i = 0; i < 3; ++i) append_f32(buf, g.log_scale[i]);
    append_f32(buf, g.rotation.w());
    append_f32(buf, g.rotation.x());
    append_f32(buf, g.rotation.y());
    append_f32(buf, g.rotation.z());
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(path + ": write failed");
}

Scene<double> read_ply(const std::string& path) {
  const VertexTable table = load_vertex_table(path);
  const std::string ctx = path + " is not a Gaussian-scene PLY";

  const int cx = table.column("x", ctx), cy = table.column("y", ctx), cz = table.column("z", ctx);
  int dc[3], rest[kRestCount];
  for (int i = 0; i < 3; ++i) dc[i] = table.column("f_dc_" + std::to_string(i), ctx);
  for (int i = 0; i < kRestCount; ++i) rest[i] = table.column("f_rest_" + std::to_string(i), ctx);
  const int copacity = table.column("opacity", ctx);
  int cscale[3], crot[4];
  for (int i = 0; i < 3; ++i) cscale[i] = table.column("scale_" + std::to_string(i), ctx);
  for (int i = 0; i < 4; ++i) crot[i] = table.column("rot_" + std::to_string(i), ctx);

  Scene<double> scene;
  scene.sh_degree = 3;
  scene.gaussians.resize(table.header.vertex_count);
  for (std::size_t r = 0; r < table.header.vertex_count; ++r) {
    auto& g = scene.gaussians[r];
    g.center = Vec3d(table.value(r, cx), table.value(r, cy), table.value(r, cz));
    g.sh_coeffs.setZero(3, kFullBasis);
    for (int c = 0; c < 3; ++c) g.sh_coeffs(c, 0) = table.value(r, dc[c]);
    for (int c = 0; c < 3; ++c)
      for (int b = 1; b < kFullBasis; ++b)
        g.sh_coeffs(c, b) = table.value(r, rest[c * (kFullBasis - 1) + (b - 1)]);
    g.opacity_logit = table.value(r, copacity);
    for (int i = 0; i < 3; ++i) g.log_scale[i] = table.value(r, cscale[i]);
    g.rotation = Quatd(table.value(r, crot[0]), table.value(r, crot[1]), table.value(r, crot[2]),
                       table.value(r, crot[3]));
  }
  return scene;
}

void write_pointcloud_ply(const PointCloud<double>& cloud, const std::string& path) {
  if (cloud.positions.empty()) throw Error("write_pointcloud_ply: empty cloud");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.positions.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  const bool colored = cloud.has_colors();
  std::vector<char> buf;
  buf.reserve(cloud.positions.size() * 15);
  for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
    for (int k = 0; k < 3; ++k) append_f32(buf, cloud.positions[i][k]);
    for (int k = 0; k < 3; ++k) {
      const double v = colored ? std::clamp(cloud.colors[i][k], 0.0, 1.0) : 0.5;
      buf.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(path + ": write failed");
}

PointCloud<double> read_pointcloud_ply(const std::string& path) {
  const VertexTable table = load_vertex_table(path);
  const std::string ctx = path + " is not a point-cloud PLY";
  const int cx = table.column("x", ctx), cy = table.column("y", ctx), cz = table.column("z", ctx);
  int cr = -1, cg = -1, cb = -1;
  try {
    cr = table.column("red", ctx);
    cg = table.column("green", ctx);
    cb = table.column("blue", ctx);
  } catch (const SchemaError&) {
    // colors are optional
  }
  PointCloud<double> cloud;
  cloud.positions.reserve(table.header.vertex_count);
  for (std::size_t r = 0; r < table.header.vertex_count; ++r) {
    cloud.positions.emplace_back(table.value(r, cx), table.value(r, cy), table.value(r, cz));
    if (cr >= 0) {
      const bool byte_scale = table.header.properties[cr].type == "uchar" ||
                              table.header.properties[cr].type == "uint8";
      const double s = byte_scale ? 1.0 / 255.0 : 1.0;
      cloud.colors.emplace_back(table.value(r, cr) * s, table.value(r, cg) * s,
                                table.value(r, cb) * s);
    }
  }
  return cloud;
}

}  // namespace splat
