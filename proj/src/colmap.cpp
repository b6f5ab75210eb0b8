#include "splatkit/colmap.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "splatkit/errors.hpp"

namespace splat {

namespace fs = std::filesystem;

namespace {

template <class T> T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;  // build targets are little-endian
}

std::string read_null_terminated(std::istream& in) {
  std::string out;
  char c = 0;
  while (in.get(c) && c != '\0') out.push_back(c);
  return out;
}

struct RawCamera {
  std::uint32_t id = 0;
  std::string model;
  int width = 0, height = 0;
  std::vector<double> params;
};

// COLMAP numeric model ids for the binary layout.
const std::map<int, std::pair<std::string, int>> kModelById = {
    {0, {"SIMPLE_PINHOLE", 3}}, {1, {"PINHOLE", 4}},      {2, {"SIMPLE_RADIAL", 4}},
    {3, {"RADIAL", 5}},         {4, {"OPENCV", 8}},       {5, {"OPENCV_FISHEYE", 8}},
    {6, {"FULL_OPENCV", 12}},   {7, {"FOV", 5}},          {8, {"SIMPLE_RADIAL_FISHEYE", 4}},
    {9, {"RADIAL_FISHEYE", 5}}, {10, {"THIN_PRISM_FISHEYE", 12}},
};

CameraModeld convert_camera(const RawCamera& raw, std::vector<std::string>& warnings) {
  CameraModeld cam;
  cam.width = raw.width;
  cam.height = raw.height;
  if (raw.model == "SIMPLE_PINHOLE") {
    cam.focal = Vec2d(raw.params.at(0), raw.params.at(0));
  } else if (raw.model == "PINHOLE") {
    cam.focal = Vec2d(raw.params.at(0), raw.params.at(1));
  } else if (raw.model == "SIMPLE_RADIAL") {
    cam.focal = Vec2d(raw.params.at(0), raw.params.at(0));
    if (raw.params.size() > 3 && raw.params[3] != 0.0)
      warnings.push_back("camera " + std::to_string(raw.id) +
                         ": SIMPLE_RADIAL distortion coefficient dropped");
  } else {
    throw UnsupportedCameraModelError("unsupported camera model '" + raw.model + "'");
  }
  if (cam.focal.minCoeff() <= 0.0 || cam.width < 1 || cam.height < 1)
    throw FormatError("camera " + std::to_string(raw.id) + ": invalid intrinsics");
  return cam;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream stream(line);
  std::vector<std::string> tokens;
  std::string tok;
  while (stream >> tok) tokens.push_back(tok);
  return tokens;
}

bool skip_line(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;  // blank
}

double parse_double(const std::string& tok, const std::string& file, long line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "expected a number, got '" + tok + "'");
  }
}

long parse_long(const std::string& tok, const std::string& file, long line) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "expected an integer, got '" + tok + "'");
  }
}

std::ifstream open_or_throw(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw NotFoundError("missing file " + path.string());
  return in;
}

// ---------------------------------------------------------------------------
// Text readers
// ---------------------------------------------------------------------------

void read_cameras_text(const fs::path& path, std::map<std::uint32_t, RawCamera>& cameras) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    const auto tok = tokenize(line);
    if (tok.size() < 5) throw ParseError(path.string(), lineno, "camera record too short");
    RawCamera cam;
    cam.id = static_cast<std::uint32_t>(parse_long(tok[0], path.string(), lineno));
    cam.model = tok[1];
    cam.width = static_cast<int>(parse_long(tok[2], path.string(), lineno));
    cam.height = static_cast<int>(parse_long(tok[3], path.string(), lineno));
    for (std::size_t i = 4; i < tok.size(); ++i)
      cam.params.push_back(parse_double(tok[i], path.string(), lineno));
    cameras[cam.id] = cam;
  }
}

struct RawImage {
  std::string name;
  std::uint32_t camera_id = 0;
  Vec4d qvec = Vec4d(1, 0, 0, 0);  // (w, x, y, z)
  Vec3d tvec = Vec3d::Zero();
};

void read_images_text(const fs::path& path, std::vector<RawImage>& images) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    const auto tok = tokenize(line);
    if (tok.size() < 10) throw ParseError(path.string(), lineno, "image record too short");
    RawImage img;
    for (int i = 0; i < 4; ++i) img.qvec[i] = parse_double(tok[1 + i], path.string(), lineno);
    for (int i = 0; i < 3; ++i) img.tvec[i] = parse_double(tok[5 + i], path.string(), lineno);
    img.camera_id = static_cast<std::uint32_t>(parse_long(tok[8], path.string(), lineno));
    img.name = tok[9];
    images.push_back(img);
    // Second line per image: 2D observations; not used here.
    if (!std::getline(in, line)) break;
    ++lineno;
  }
}

void read_points_text(const fs::path& path, PointCloudd& points) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    const auto tok = tokenize(line);
    if (tok.size() < 7) throw ParseError(path.string(), lineno, "point record too short");
    Vec3d p, c;
    for (int i = 0; i < 3; ++i) p[i] = parse_double(tok[1 + i], path.string(), lineno);
    for (int i = 0; i < 3; ++i) c[i] = parse_double(tok[4 + i], path.string(), lineno) / 255.0;
    points.positions.push_back(p);
    points.colors.push_back(c);
  }
}

// ---------------------------------------------------------------------------
// Binary readers (COLMAP 3.x layout)
// ---------------------------------------------------------------------------

void read_cameras_binary(const fs::path& path, std::map<std::uint32_t, RawCamera>& cameras) {
  std::ifstream in = open_or_throw(path, std::ios::binary);
  const auto count = read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    RawCamera cam;
    cam.id = read_le<std::uint32_t>(in);
    const int model_id = read_le<std::int32_t>(in);
    cam.width = static_cast<int>(read_le<std::uint64_t>(in));
    cam.height = static_cast<int>(read_le<std::uint64_t>(in));
    const auto it = kModelById.find(model_id);
    if (it == kModelById.end())
      throw UnsupportedCameraModelError("unknown camera model id " + std::to_string(model_id));
    cam.model = it->second.first;
    cam.params.resize(it->second.second);
    for (double& p : cam.params) p = read_le<double>(in);
    if (!in) throw ParseError(path.string(), static_cast<long>(i), "truncated camera record");
    cameras[cam.id] = cam;
  }
}

void read_images_binary(const fs::path& path, std::vector<RawImage>& images) {
  std::ifstream in = open_or_throw(path, std::ios::binary);
  const auto count = read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    RawImage img;
    read_le<std::uint32_t>(in);  // image id, unused
    for (int k = 0; k < 4; ++k) img.qvec[k] = read_le<double>(in);
    for (int k = 0; k < 3; ++k) img.tvec[k] = read_le<double>(in);
    img.camera_id = read_le<std::uint32_t>(in);
    img.name = read_null_terminated(in);
    const auto num_points2d = read_le<std::uint64_t>(in);
    in.seekg(static_cast<std::streamoff>(num_points2d) * (2 * sizeof(double) + sizeof(std::uint64_t)),
             std::ios::cur);
    if (!in) throw ParseError(path.string(), static_cast<long>(i), "truncated image record");
    images.push_back(img);
  }
}

void read_points_binary(const fs::path& path, PointCloudd& points) {
  std::ifstream in = open_or_throw(path, std::ios::binary);
  const auto count = read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    read_le<std::uint64_t>(in);  // point id
    Vec3d p, c;
    for (int k = 0; k < 3; ++k) p[k] = read_le<double>(in);
    for (int k = 0; k < 3; ++k) c[k] = read_le<std::uint8_t>(in) / 255.0;
    read_le<double>(in);  // reprojection error
    const auto track_len = read_le<std::uint64_t>(in);
    in.seekg(static_cast<std::streamoff>(track_len) * (2 * sizeof(std::uint32_t)), std::ios::cur);
    if (!in) throw ParseError(path.string(), static_cast<long>(i), "truncated point record");
    points.positions.push_back(p);
    points.colors.push_back(c);
  }
}

}  // namespace

CameraModeld SfmModel::camera_for(std::size_t record_index) const {
  const ImageRecord& rec = image_records.at(record_index);
  CameraModeld cam = cameras.at(rec.camera_index);
  cam.rotation = rec.rotation;
  cam.translation = rec.translation;
  return cam;
}

SfmModel load_colmap_model(const std::string& directory, ColmapFormat format) {
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) throw NotFoundError("not a directory: " + directory);

  bool binary;
  switch (format) {
    case ColmapFormat::Text: binary = false; break;
    case ColmapFormat::Binary: binary = true; break;
    default: binary = fs::exists(dir / "cameras.bin"); break;
  }
  const char* ext = binary ? ".bin" : ".txt";

  std::map<std::uint32_t, RawCamera> raw_cameras;
  std::vector<RawImage> raw_images;
  SfmModel model;

  if (binary) {
    read_cameras_binary(dir / ("cameras" + std::string(ext)), raw_cameras);
    read_images_binary(dir / ("images" + std::string(ext)), raw_images);
    read_points_binary(dir / ("points3D" + std::string(ext)), model.points);
  } else {
    read_cameras_text(dir / ("cameras" + std::string(ext)), raw_cameras);
    read_images_text(dir / ("images" + std::string(ext)), raw_images);
    read_points_text(dir / ("points3D" + std::string(ext)), model.points);
  }

  std::map<std::uint32_t, int> camera_index;
  for (const auto& [id, raw] : raw_cameras) {
    camera_index[id] = static_cast<int>(model.cameras.size());
    model.cameras.push_back(convert_camera(raw, model.warnings));
  }

  for (const RawImage& raw : raw_images) {
    const auto it = camera_index.find(raw.camera_id);
    if (it == camera_index.end())
      throw FormatError("image '" + raw.name + "' references unknown camera " +
                        std::to_string(raw.camera_id));
    ImageRecord rec;
    rec.name = raw.name;
    rec.camera_index = it->second;
    Quatd q(raw.qvec[0], raw.qvec[1], raw.qvec[2], raw.qvec[3]);
    const double n = q.norm();
    if (n <= 0.0) throw FormatError("image '" + raw.name + "' has a zero quaternion");
    q.coeffs() /= n;
    rec.rotation = q.toRotationMatrix();
    rec.translation = raw.tvec;
    model.image_records.push_back(rec);
  }

  if (model.points.positions.empty())
    model.warnings.push_back("reconstruction has no 3D points");
  return model;
}

}  // namespace splat
