#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "splatkit/covariance.hpp"
#include "splatkit/metrics.hpp"
#include "splatkit/ply.hpp"
#include "splatkit/rasterizer.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/smoothing.hpp"
#include "splatkit/trainer.hpp"
#include "support/scene_fixtures.hpp"

using namespace splat;
using testsupport::look_at_origin;
using testsupport::render_view;

namespace {

constexpr double kC0 = testsupport::kShC0;

Scene<double> toy_scene(int count, Rng& rng) {
  return testsupport::random_blob_scene(count, rng);
}

}  // namespace

TEST_CASE("adamw_step: zero gradients and zero decay leave parameters unchanged") {
  std::vector<double> params = {1.5, -2.0, 0.25};
  std::vector<double> grads(3, 0.0), m(3, 0.0), v(3, 0.0);
  const std::vector<double> before = params;
  for (long t = 1; t <= 10; ++t) adamw_step(params, grads, m, v, t, 1e-2, 0.0);
  for (int i = 0; i < 3; ++i) CHECK(params[i] == before[i]);
}

TEST_CASE("adamw_step: decoupled decay shrinks multiplicatively under zero gradients") {
  std::vector<double> params = {2.0, -4.0};
  std::vector<double> grads(2, 0.0), m(2, 0.0), v(2, 0.0);
  const double lr = 1e-2, wd = 0.1;
  adamw_step(params, grads, m, v, 1, lr, wd);
  CHECK(params[0] == 2.0 * (1.0 - lr * wd));
  CHECK(params[1] == -4.0 * (1.0 - lr * wd));
}

TEST_CASE("adamw_step: single-parameter convergence on a quadratic") {
  std::vector<double> params = {4.0}, m(1, 0.0), v(1, 0.0);
  for (long t = 1; t <= 2000; ++t) {
    const std::vector<double> grads = {2.0 * params[0]};
    adamw_step(params, grads, m, v, t, 1e-2, 0.0);
  }
  CHECK(std::abs(params[0]) < 1e-3);
}

TEST_CASE("init_scene: single point uses the fallback scale") {
  PointCloudd cloud;
  cloud.positions = {Vec3d(1, 2, 3)};
  const Scene<double> scene = init_scene(cloud);
  REQUIRE(scene.size() == 1);
  CHECK(scene.gaussians[0].center.isApprox(Vec3d(1, 2, 3)));
  CHECK(scene.gaussians[0].log_scale[0] == doctest::Approx(std::log(1e-2)));
  CHECK(scene.gaussians[0].opacity() == doctest::Approx(0.1));
}

TEST_CASE("init_scene: regular unit grid gives log(1) = 0 scales") {
  PointCloudd cloud;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z) cloud.positions.emplace_back(x, y, z);
  const Scene<double> scene = init_scene(cloud);
  for (const auto& g : scene.gaussians)
    CHECK(g.log_scale.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("init_scene: scales match a brute-force 3-NN oracle") {
  Rng rng(41);
  PointCloudd cloud;
  for (int i = 0; i < 300; ++i)
    cloud.positions.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  const Scene<double> scene = init_scene(cloud);
  for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < cloud.positions.size(); ++j)
      if (j != i) d.push_back((cloud.positions[i] - cloud.positions[j]).norm());
    std::sort(d.begin(), d.end());
    const double mean3 = (d[0] + d[1] + d[2]) / 3.0;
    CHECK(std::abs(scene.gaussians[i].log_scale[0] - std::log(mean3)) < 1e-9);
  }
}

TEST_CASE("init_scene: degree-0 color encoding") {
  PointCloudd cloud;
  cloud.positions = {Vec3d::Zero(), Vec3d::Ones()};
  cloud.colors = {Vec3d(1, 0.5, 0.25), Vec3d(0, 0, 0)};
  const Scene<double> scene = init_scene(cloud, 3);
  REQUIRE(scene.gaussians[0].sh_coeffs.cols() == 16);
  CHECK(scene.gaussians[0].sh_coeffs(0, 0) == doctest::Approx((1.0 - 0.5) / kC0));
  CHECK(scene.gaussians[0].sh_coeffs(1, 0) == doctest::Approx(0.0));
  CHECK(scene.gaussians[0].sh_coeffs.rightCols(15).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adaptive_density_control: no triggers leave the scene unchanged") {
  Rng rng(42);
  Scene<double> scene = toy_scene(10, rng);
  const std::vector<double> grads(10, 0.0);
  TrainConfig cfg;
  const auto result = adaptive_density_control(scene, grads, cfg, 10.0, {}, {});
  CHECK(scene.size() == 10);
  CHECK(result.cloned == 0);
  CHECK(result.split == 0);
  CHECK(result.pruned == 0);
}

TEST_CASE("adaptive_density_control: one small high-gradient gaussian clones") {
  Rng rng(43);
  Scene<double> scene = toy_scene(5, rng);
  for (auto& g : scene.gaussians) g.log_scale.setConstant(-4.0);  // all small
  std::vector<double> grads(5, 0.0);
  grads[2] = 1.0;  // only this one triggers
  TrainConfig cfg;
  const auto result = adaptive_density_control(scene, grads, cfg, 10.0, {}, {});
  CHECK(result.cloned == 1);
  CHECK(scene.size() == 6);
  CHECK(scene.gaussians[5].center == scene.gaussians[2].center);
}

TEST_CASE("adaptive_density_control: mixed triggers match a scripted rule replay") {
  Rng rng(44);
  Scene<double> scene = toy_scene(30, rng);
  const double extent = 10.0;
  TrainConfig cfg;  // grad_threshold 2e-4, min_opacity 0.005, percentile 0.01

  std::vector<double> grads(30, 0.0);
  for (int i = 0; i < 30; ++i) {
    if (i % 3 == 0) grads[i] = 1e-3;  // triggers
    if (i % 5 == 0) scene.gaussians[i].opacity_logit = logit(0.001);  // pruned
    if (i % 6 == 0) scene.gaussians[i].log_scale.setConstant(std::log(0.5));  // large: split
  }
  Scene<double> replical = scene;

  MomentState mom;
  mom.ensure(30, 2);
  for (std::size_t i = 0; i < mom.m.size(); ++i) mom.m[i] = static_cast<double>(i);
  const auto result = adaptive_density_control(scene, grads, cfg, extent, {&mom}, {2});

  // Independent replay of the written rules.
  std::vector<GaussianPrimitived> expected;
  std::vector<GaussianPrimitived> appended;
  long clones = 0, splits = 0, prunes = 0;
  for (int i = 0; i < 30; ++i) {
    const auto& g = replical.gaussians[i];
    if (g.opacity() < cfg.min_opacity) {
      ++prunes;
      continue;
    }
    const bool trigger = grads[i] > cfg.grad_threshold;
    const bool large = g.scale().maxCoeff() >= cfg.size_percentile * extent;
    if (trigger && large) {
      GaussianPrimitived child = g;
      child.log_scale.array() -= std::log(cfg.split_scale_shrink);
      child.opacity_logit = logit(1.0 - std::sqrt(1.0 - g.opacity()));
      appended.push_back(child);
      appended.push_back(child);
      ++splits;
      continue;
    }
    expected.push_back(g);
    if (trigger) {
      appended.push_back(g);
      ++clones;
    }
  }
  for (const auto& g : appended) expected.push_back(g);

  CHECK(result.cloned == clones);
  CHECK(result.split == splits);
  CHECK(result.pruned == prunes);
  REQUIRE(scene.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(scene.gaussians[i].center == expected[i].center);
    CHECK(scene.gaussians[i].log_scale == expected[i].log_scale);
    CHECK(scene.gaussians[i].opacity_logit == expected[i].opacity_logit);
  }
  CHECK(mom.m.size() == 2 * expected.size());
}

TEST_CASE("adaptive_density_control: pruning spares opacity >= min_opacity") {
  Rng rng(45);
  Scene<double> scene = toy_scene(8, rng);
  for (auto& g : scene.gaussians) g.opacity_logit = logit(0.005);
  const std::vector<double> grads(8, 0.0);
  TrainConfig cfg;
  adaptive_density_control(scene, grads, cfg, 10.0, {}, {});
  CHECK(scene.size() == 8);
}

TEST_CASE("split preserves the rendered image within a small perturbation") {
  Rng rng(46);
  Scene<double> scene = toy_scene(1, rng);
  scene.gaussians[0].center = Vec3d(0, 0, 0);
  scene.gaussians[0].log_scale.setConstant(std::log(0.12));
  const CameraModeld cam = look_at_origin(Vec3d(0, 0, -3), 60, 64, 64);
  RenderSettings settings;
  settings.apply_smoothing = false;
  settings.background = Vec3d(0.5, 0.5, 0.5);
  const RenderOutput before = render(scene, cam, settings);

  std::vector<double> grads = {1.0};
  TrainConfig cfg;
  const auto result = adaptive_density_control(scene, grads, cfg, 1.0, {}, {});
  CHECK(result.split == 1);
  REQUIRE(scene.size() == 2);
  CHECK(scene.gaussians[0].center == scene.gaussians[1].center);

  const RenderOutput after = render(scene, cam, settings);
  double l1_change = 0.0, l1_base = 0.0;
  for (int c = 0; c < 3; ++c) {
    l1_change += (before.color.channel(c) - after.color.channel(c)).abs().sum();
    l1_base += before.color.channel(c).abs().sum();
  }
  CHECK(l1_change / l1_base <= 0.05);
}

TEST_CASE("interpolate_pose: endpoints and a single-axis midpoint") {
  const CameraModeld a = look_at_origin(Vec3d(0, 0, -3), 50, 32, 32);
  CameraModeld b = a;
  const Mat3d delta = Eigen::AngleAxisd(20.0 * M_PI / 180.0, Vec3d::UnitY()).toRotationMatrix();
  b.rotation = a.rotation * delta;
  b.translation = -(b.rotation * (a.position() + Vec3d(1, 0, 0)));

  const CameraModeld at0 = interpolate_pose(a, b, 0.0);
  CHECK((at0.rotation - a.rotation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((at0.position() - a.position()).norm() < 1e-12);

  const CameraModeld mid = interpolate_pose(a, b, 0.5);
  const Mat3d half = a.rotation.transpose() * mid.rotation;
  const double angle = Eigen::AngleAxisd(half).angle();
  CHECK(angle == doctest::Approx(10.0 * M_PI / 180.0).epsilon(1e-9));
  CHECK((mid.position() - (a.position() + Vec3d(0.5, 0, 0))).norm() < 1e-12);
}

TEST_CASE("sample_novel_view: orthonormal rotations and bounded jitter") {
  std::vector<CameraModeld> cams;
  for (int i = 0; i < 6; ++i) {
    const double angle = 2.0 * M_PI * i / 6.0;
    cams.push_back(look_at_origin(Vec3d(3 * std::cos(angle), 3 * std::sin(angle), -1.0), 50, 32, 32));
  }
  const double extent = 2.0;
  Rng rng(47);
  for (int trial = 0; trial < 10000; ++trial) {
    const CameraModeld cam = sample_novel_view(cams, extent, 5.0, 0.02, rng);
    CHECK(cam.rotation_orthonormal(1e-6));

    // The un-jittered center lies on a segment between some camera pair;
    // the jitter adds at most 2% of the extent per axis.
    double best = 1e9;
    for (std::size_t i = 0; i < cams.size(); ++i) {
      for (std::size_t j = 0; j < cams.size(); ++j) {
        if (i == j) continue;
        const Vec3d a = cams[i].position(), b = cams[j].position();
        const Vec3d d = b - a;
        const double u = std::clamp((cam.position() - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (cam.position() - (a + u * d)).norm());
      }
    }
    CHECK(best <= std::sqrt(3.0) * 0.02 * extent + 1e-9);
  }
  CHECK_THROWS_AS(sample_novel_view({cams[0]}, extent, 5.0, 0.02, rng), Error);
}

TEST_CASE("trainer: single-view self-consistency fit drives rgb loss down") {
  Rng rng(48);
  const Scene<double> gt = toy_scene(5, rng);
  const CameraModeld cam = look_at_origin(Vec3d(0, 0, -2.5), 55, 48, 48);

  SmoothingConfig smoothing;
  RenderSettings settings;
  settings.threads = 2;
  const TrainView view = render_view(gt, cam, smoothing, settings, "train0");

  // Perturbed copy of the generating scene as the starting point.
  Scene<double> init = gt;
  Rng jitter(49);
  for (auto& g : init.gaussians) {
    g.center += 0.04 * Vec3d(jitter.normal(), jitter.normal(), jitter.normal());
    g.opacity_logit += 0.3 * jitter.normal();
    g.sh_coeffs.col(0) += 0.2 * Vec3d(jitter.normal(), jitter.normal(), jitter.normal());
  }

  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.densify_interval = 0;  // isolate the optimizer
  cfg.sh_growth_interval = 0;
  cfg.max_sh_degree = 0;
  cfg.checkpoint_interval = 0;
  LossWeights weights;
  weights.lambda_sds = 0.0;

  Trainer trainer({view}, init, cfg, weights, MaskConfig{}, smoothing, settings);
  const IterationStats first = trainer.step();
  std::vector<double> rgb_curve = {first.losses.rgb};
  while (trainer.iteration() < cfg.iterations)
    rgb_curve.push_back(trainer.step().losses.rgb);

  const auto [final_rgb, final_render] = [&] {
    Scene<double> s = trainer.scene();
    refresh_smoothing_state(s, {cam}, smoothing);
    const RenderOutput out = render(s, cam, settings);
    return std::make_pair(rgb_loss(out.color, view.image, weights.dssim_mix), out);
  }();
  CHECK(final_rgb < first.losses.rgb);
  CHECK(final_rgb < 0.01);

  // Training loss is non-increasing across 100-iteration windows (the toy
  // fit has no stochasticity, so allow at most one up-tick).
  std::vector<double> window_means;
  for (std::size_t start = 0; start + 100 <= rgb_curve.size(); start += 100) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + 100; ++i) acc += rgb_curve[i];
    window_means.push_back(acc / 100.0);
  }
  int decreases = 0;
  for (std::size_t i = 1; i < window_means.size(); ++i)
    if (window_means[i] <= window_means[i - 1]) ++decreases;
  CHECK(decreases >= static_cast<int>(window_means.size()) - 2);

  // A converged toy fit scores well above 30 dB on its own training view.
  ColorImaged rendered = final_render.color;
  ColorImaged reference = view.image;
  for (int c = 0; c < 3; ++c) {
    rendered.channel(c) = rendered.channel(c).min(1.0).max(0.0);
    reference.channel(c) = reference.channel(c).min(1.0).max(0.0);
  }
  CHECK(capped_db(psnr(rendered, reference)) > 30.0);
}

TEST_CASE("trainer: one iteration, one checkpoint, bitwise determinism") {
  namespace fs = std::filesystem;
  Rng rng(50);
  const Scene<double> gt = toy_scene(4, rng);
  const CameraModeld cam_a = look_at_origin(Vec3d(0, 0, -2.5), 40, 32, 32);
  const CameraModeld cam_b = look_at_origin(Vec3d(0.6, 0, -2.4), 40, 32, 32);

  SmoothingConfig smoothing;
  RenderSettings settings;
  const std::vector<TrainView> views = {render_view(gt, cam_a, smoothing, settings, "a"),
                                        render_view(gt, cam_b, smoothing, settings, "b")};

  Scene<double> init = gt;
  init.gaussians[0].center += Vec3d(0.05, 0, 0);

  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.checkpoint_interval = 1;
  cfg.densify_interval = 0;
  LossWeights weights;
  weights.lambda_sds = 0.0;

  const fs::path dir = fs::temp_directory_path() / "splatkit_train_one";
  fs::remove_all(dir);
  Trainer one(views, init, cfg, weights, MaskConfig{}, smoothing, settings);
  one.train(dir.string());
  CHECK(one.iteration() == 1);
  CHECK(fs::exists(dir / "ckpt_1.ply"));
  CHECK(fs::exists(dir / "ckpt_1.json"));
  CHECK(fs::exists(dir / "metrics.csv"));

  // Same seed, two runs: bitwise-identical final scenes.
  TrainConfig cfg30 = cfg;
  cfg30.iterations = 30;
  cfg30.checkpoint_interval = 0;
  Trainer run1(views, init, cfg30, weights, MaskConfig{}, smoothing, settings);
  Trainer run2(views, init, cfg30, weights, MaskConfig{}, smoothing, settings);
  run1.train();
  run2.train();

  const auto ply_bytes = [](const Scene<double>& scene, const std::string& name) {
    const fs::path path = fs::temp_directory_path() / name;
    write_ply(scene, path.string());
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(ply_bytes(run1.scene(), "det_a.ply") == ply_bytes(run2.scene(), "det_b.ply"));
  REQUIRE(run1.scene().size() == run2.scene().size());
  for (std::size_t i = 0; i < run1.scene().size(); ++i) {
    const auto& a = run1.scene().gaussians[i];
    const auto& b = run2.scene().gaussians[i];
    CHECK(a.center == b.center);
    CHECK(a.rotation.coeffs() == b.rotation.coeffs());
    CHECK(a.log_scale == b.log_scale);
    CHECK(a.opacity_logit == b.opacity_logit);
    CHECK(a.sh_coeffs == b.sh_coeffs);
  }
}

TEST_CASE("trainer: quaternions stay unit after every step") {
  Rng rng(51);
  const Scene<double> gt = toy_scene(6, rng);
  const CameraModeld cam = look_at_origin(Vec3d(0, 0, -2.5), 40, 32, 32);
  SmoothingConfig smoothing;
  RenderSettings settings;
  const TrainView view = render_view(gt, cam, smoothing, settings, "v");

  Scene<double> init = gt;
  init.gaussians[0].center += Vec3d(0.05, 0.02, 0);
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.densify_interval = 0;
  cfg.checkpoint_interval = 0;
  LossWeights weights;
  weights.lambda_sds = 0.0;
  Trainer trainer({view}, init, cfg, weights, MaskConfig{}, smoothing, settings);
  while (trainer.iteration() < cfg.iterations) {
    trainer.step();
    for (const auto& g : trainer.scene().gaussians)
      CHECK(std::abs(g.rotation.norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("trainer: non-finite loss aborts with a diagnostic dump") {
  namespace fs = std::filesystem;
  Rng rng(52);
  const Scene<double> gt = toy_scene(3, rng);
  const CameraModeld cam = look_at_origin(Vec3d(0, 0, -2.5), 40, 24, 24);
  SmoothingConfig smoothing;
  RenderSettings settings;
  TrainView view = render_view(gt, cam, smoothing, settings, "bad");
  view.image.r(5, 5) = std::numeric_limits<double>::infinity();  // poisoned reference

  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.densify_interval = 0;
  cfg.checkpoint_interval = 0;
  LossWeights weights;
  weights.lambda_sds = 0.0;

  const fs::path dir = fs::temp_directory_path() / "splatkit_diverge";
  fs::remove_all(dir);
  Trainer trainer({view}, gt, cfg, weights, MaskConfig{}, smoothing, settings);
  CHECK_THROWS_AS(trainer.train(dir.string()), TrainingDivergedError);
  CHECK(fs::exists(dir / "diverged_1.json"));
}
