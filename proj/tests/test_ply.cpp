#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "splatkit/errors.hpp"
#include "splatkit/ply.hpp"
#include "splatkit/rng.hpp"

using namespace splat;
namespace fs = std::filesystem;

namespace {

std::string temp_file(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

Scene<double> random_scene(int count, int basis, std::uint64_t seed) {
  Rng rng(seed);
  Scene<double> scene;
  scene.sh_degree = basis == 16 ? 3 : 0;
  scene.gaussians.resize(count);
  for (auto& g : scene.gaussians) {
    g.center = Vec3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    g.rotation = Quatd(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.log_scale = Vec3d(rng.uniform(-3, 0), rng.uniform(-3, 0), rng.uniform(-3, 0));
    g.opacity_logit = rng.uniform(-4, 4);
    g.sh_coeffs.setZero(3, basis);
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < basis; ++b) g.sh_coeffs(c, b) = rng.uniform(-1, 1);
  }
  return scene;
}

double max_field_error(const Scene<double>& a, const Scene<double>& b) {
  REQUIRE(a.gaussians.size() == b.gaussians.size());
  double err = 0.0;
  for (std::size_t i = 0; i < a.gaussians.size(); ++i) {
    const auto& ga = a.gaussians[i];
    const auto& gb = b.gaussians[i];
    err = std::max(err, (ga.center - gb.center).cwiseAbs().maxCoeff());
    err = std::max(err, (ga.rotation.coeffs() - gb.rotation.coeffs()).cwiseAbs().maxCoeff());
    err = std::max(err, (ga.log_scale - gb.log_scale).cwiseAbs().maxCoeff());
    err = std::max(err, std::abs(ga.opacity_logit - gb.opacity_logit));
    const int cols = std::min(ga.sh_coeffs.cols(), gb.sh_coeffs.cols());
    err = std::max(err,
                   (ga.sh_coeffs.leftCols(cols) - gb.sh_coeffs.leftCols(cols)).cwiseAbs().maxCoeff());
  }
  return err;
}

}  // namespace

TEST_CASE("ply: single-gaussian round trip") {
  const Scene<double> scene = random_scene(1, 16, 5);
  const std::string path = temp_file("one.ply");
  write_ply(scene, path);
  const Scene<double> back = read_ply(path);
  CHECK(max_field_error(scene, back) < 1e-6);
}

TEST_CASE("ply: degree-0 scene pads f_rest with zeros") {
  const Scene<double> scene = random_scene(3, 1, 6);
  const std::string path = temp_file("deg0.ply");
  write_ply(scene, path);
  const Scene<double> back = read_ply(path);
  REQUIRE(back.gaussians[0].sh_coeffs.cols() == 16);
  for (const auto& g : back.gaussians)
    CHECK(g.sh_coeffs.rightCols(15).cwiseAbs().maxCoeff() == 0.0);
  CHECK(max_field_error(scene, back) < 1e-6);
}

TEST_CASE("ply: 10k random gaussians round trip within float32 quantization") {
  const Scene<double> scene = random_scene(10000, 16, 7);
  const std::string path = temp_file("big.ply");
  write_ply(scene, path);
  const Scene<double> back = read_ply(path);
  CHECK(max_field_error(scene, back) < 1e-6);
}

TEST_CASE("ply: missing property raises SchemaError naming it") {
  const Scene<double> scene = random_scene(2, 16, 8);
  const std::string path = temp_file("schema.ply");
  write_ply(scene, path);

  // Strip the opacity property from the header and its column from the rows.
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::string needle = "property float opacity\n";
  const auto pos = content.find(needle);
  REQUIRE(pos != std::string::npos);
  content.erase(pos, needle.size());
  const auto header_end = content.find("end_header\n") + 11;
  std::string data = content.substr(header_end);
  std::string stripped;
  const int stride = (3 + 3 + 45 + 1 + 3 + 4) * 4;
  const int opacity_off = (3 + 3 + 45) * 4;
  for (std::size_t row = 0; row * stride < data.size(); ++row) {
    stripped += data.substr(row * stride, opacity_off);
    stripped += data.substr(row * stride + opacity_off + 4, stride - opacity_off - 4);
  }
  std::ofstream out(path, std::ios::binary);
  out << content.substr(0, header_end) << stripped;
  out.close();

  try {
    read_ply(path);
    CHECK(false);
  } catch (const SchemaError& e) {
    CHECK(e.property == "opacity");
  }
}

TEST_CASE("ply: empty scene rejected on write") {
  Scene<double> empty;
  CHECK_THROWS_AS(write_ply(empty, temp_file("empty.ply")), Error);
}

TEST_CASE("pointcloud ply round trip") {
  Rng rng(9);
  PointCloudd cloud;
  for (int i = 0; i < 500; ++i) {
    cloud.positions.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    cloud.colors.emplace_back(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
  }
  const std::string path = temp_file("cloud.ply");
  write_pointcloud_ply(cloud, path);
  const PointCloudd back = read_pointcloud_ply(path);
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back.positions[i] - cloud.positions[i]).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((back.colors[i] - cloud.colors[i]).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-9);
  }
}
