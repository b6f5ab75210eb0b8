#include "colmap_writer.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

namespace splat::testsupport {

namespace {

template <class T> void write_le(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

int model_id_of(const std::string& name) {
  static const std::map<std::string, int> ids = {
      {"SIMPLE_PINHOLE", 0}, {"PINHOLE", 1}, {"SIMPLE_RADIAL", 2}, {"RADIAL", 3}, {"OPENCV", 4}};
  const auto it = ids.find(name);
  if (it == ids.end()) throw std::runtime_error("fixture: unknown model " + name);
  return it->second;
}

}  // namespace

void write_text_model(const FixtureModel& model, const std::string& directory) {
  {
    std::ofstream out(directory + "/cameras.txt");
    out << "# Camera list with one line of data per camera:\n";
    out << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    for (const auto& cam : model.cameras) {
      out << cam.id << " " << cam.model << " " << cam.width << " " << cam.height;
      out.precision(17);
      for (double p : cam.params) out << " " << p;
      out << "\n";
    }
  }
  {
    std::ofstream out(directory + "/images.txt");
    out << "# Image list with two lines of data per image:\n";
    out.precision(17);
    for (const auto& img : model.images) {
      out << img.id << " " << img.qvec[0] << " " << img.qvec[1] << " " << img.qvec[2] << " "
          << img.qvec[3] << " " << img.tvec[0] << " " << img.tvec[1] << " " << img.tvec[2] << " "
          << img.camera_id << " " << img.name << "\n";
      out << "\n";  // no 2D observations
    }
  }
  {
    std::ofstream out(directory + "/points3D.txt");
    out << "# 3D point list with one line of data per point\n";
    out.precision(17);
    for (const auto& p : model.points) {
      out << p.id << " " << p.xyz[0] << " " << p.xyz[1] << " " << p.xyz[2] << " " << int(p.rgb[0])
          << " " << int(p.rgb[1]) << " " << int(p.rgb[2]) << " " << p.error << "\n";
    }
  }
}

void write_binary_model(const FixtureModel& model, const std::string& directory) {
  {
    std::ofstream out(directory + "/cameras.bin", std::ios::binary);
    write_le<std::uint64_t>(out, model.cameras.size());
    for (const auto& cam : model.cameras) {
      write_le<std::uint32_t>(out, cam.id);
      write_le<std::int32_t>(out, model_id_of(cam.model));
      write_le<std::uint64_t>(out, cam.width);
      write_le<std::uint64_t>(out, cam.height);
      for (double p : cam.params) write_le<double>(out, p);
    }
  }
  {
    std::ofstream out(directory + "/images.bin", std::ios::binary);
    write_le<std::uint64_t>(out, model.images.size());
    for (const auto& img : model.images) {
      write_le<std::uint32_t>(out, img.id);
      for (int k = 0; k < 4; ++k) write_le<double>(out, img.qvec[k]);
      for (int k = 0; k < 3; ++k) write_le<double>(out, img.tvec[k]);
      write_le<std::uint32_t>(out, img.camera_id);
      out.write(img.name.c_str(), static_cast<std::streamsize>(img.name.size() + 1));
      write_le<std::uint64_t>(out, 0);  // no 2D observations
    }
  }
  {
    std::ofstream out(directory + "/points3D.bin", std::ios::binary);
    write_le<std::uint64_t>(out, model.points.size());
    for (const auto& p : model.points) {
      write_le<std::uint64_t>(out, p.id);
      for (int k = 0; k < 3; ++k) write_le<double>(out, p.xyz[k]);
      for (int k = 0; k < 3; ++k) write_le<std::uint8_t>(out, p.rgb[k]);
      write_le<double>(out, p.error);
      write_le<std::uint64_t>(out, 0);  // empty track
    }
  }
}

}  // namespace splat::testsupport
