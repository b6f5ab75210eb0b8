#include <doctest.h>

#include <cmath>

#include "splatkit/covariance.hpp"
#include "splatkit/rasterizer.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/sh.hpp"
#include "splatkit/smoothing.hpp"

using namespace splat;

namespace {

constexpr double kC0 = 0.28209479177387814;

CameraModeld make_camera(double f, int w, int h) {
  CameraModeld cam;
  cam.focal = Vec2d(f, f);
  cam.width = w;
  cam.height = h;
  return cam;
}

GaussianPrimitived make_gaussian(const Vec3d& center, double scale, double opacity,
                                 const Vec3d& color) {
  GaussianPrimitived g;
  g.center = center;
  g.log_scale.setConstant(std::log(scale));
  g.opacity_logit = logit(opacity);
  g.sh_coeffs.setZero(3, 1);
  for (int c = 0; c < 3; ++c) g.sh_coeffs(c, 0) = (color[c] - 0.5) / kC0;
  return g;
}

Scene<double> random_scene(int count, Rng& rng, int basis = 4) {
  Scene<double> scene;
  scene.sh_degree = sh_degree_from_basis(basis);
  for (int i = 0; i < count; ++i) {
    GaussianPrimitived g;
    g.center = Vec3d(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(2.2, 4.0));
    g.rotation = Quatd(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.log_scale = Vec3d(rng.uniform(-3.2, -1.8), rng.uniform(-3.2, -1.8), rng.uniform(-3.2, -1.8));
    g.opacity_logit = rng.uniform(-2.0, 1.0);
    g.sh_coeffs.setZero(3, basis);
    for (int c = 0; c < 3; ++c) {
      g.sh_coeffs(c, 0) = rng.uniform(0.3, 1.4);  // keeps the color clamp inactive
      for (int b = 1; b < basis; ++b) g.sh_coeffs(c, b) = rng.uniform(-0.08, 0.08);
    }
    scene.gaussians.push_back(g);
  }
  scene.smoothing_state.assign(count, 25.0);
  return scene;
}

double output_diff(const RenderOutput& a, const RenderOutput& b) {
  double err = 0.0;
  for (int c = 0; c < 3; ++c)
    err = std::max(err, (a.color.channel(c) - b.color.channel(c)).abs().maxCoeff());
  err = std::max(err, (a.depth - b.depth).abs().maxCoeff());
  err = std::max(err, (a.alpha - b.alpha).abs().maxCoeff());
  return err;
}

}  // namespace

TEST_CASE("project_gaussian: on-axis isotropic covariance") {
  const CameraModeld cam = make_camera(100, 64, 64);
  RenderSettings settings;
  settings.dilation = 0.0;
  const double sigma = 0.05, z = 2.0;
  const auto splat = project_gaussian(Vec3d(0, 0, z), sigma * sigma * Mat3d::Identity(), 0.8,
                                      Vec3d(1, 0, 0), cam, settings);
  REQUIRE(splat.has_value());
  const double expected = std::pow(100 * sigma / z, 2);
  CHECK(splat->cov2d(0, 0) == doctest::Approx(expected).epsilon(1e-2));
  CHECK(splat->cov2d(1, 1) == doctest::Approx(expected).epsilon(1e-2));
  CHECK(std::abs(splat->cov2d(0, 1)) < 1e-9);
  CHECK(splat->depth == doctest::Approx(z));
  CHECK(splat->mean2d.isApprox(Vec2d(32, 32)));
}

TEST_CASE("project_gaussian: behind-camera and far-off-screen culls") {
  const CameraModeld cam = make_camera(100, 64, 64);
  RenderSettings settings;
  CHECK(!project_gaussian(Vec3d(0, 0, -1), 0.01 * Mat3d::Identity(), 0.8, Vec3d::Ones(), cam,
                          settings)
             .has_value());
  CHECK(!project_gaussian(Vec3d(50, 0, 2), 0.0001 * Mat3d::Identity(), 0.8, Vec3d::Ones(), cam,
                          settings)
             .has_value());
}

TEST_CASE("project_gaussian: cov2d matches a finite-difference Jacobian oracle") {
  Rng rng(55);
  RenderSettings settings;
  settings.dilation = 0.0;
  settings.viewport_margin = 1e6;  // keep everything, we test the math not the cull
  const double h = 1e-5;
  for (int trial = 0; trial < 60; ++trial) {
    CameraModeld cam = make_camera(rng.uniform(60, 300), 64, 48);
    cam.focal.y() = rng.uniform(60, 300);
    Quatd q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    cam.rotation = q.toRotationMatrix();
    cam.translation = Vec3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(2.5, 4.0));

    const Vec3d center(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
    Quatd gq(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    if (gq.coeffs().norm() < 1e-6) gq = Quatd::Identity();
    const Mat3d cov3 = build_covariance<double>(
        gq, Vec3d(std::exp(rng.uniform(-3, -1.5)), std::exp(rng.uniform(-3, -1.5)),
                  std::exp(rng.uniform(-3, -1.5))));

    const auto splat = project_gaussian(center, cov3, 0.7, Vec3d::Ones(), cam, settings);
    if (!splat.has_value()) continue;

    // Numerical Jacobian of the world -> screen map at the center.
    Eigen::Matrix<double, 2, 3> jac;
    for (int axis = 0; axis < 3; ++axis) {
      Vec3d plus = center, minus = center;
      plus[axis] += h;
      minus[axis] -= h;
      const auto sp = camera_transform(plus, cam);
      const auto sm = camera_transform(minus, cam);
      REQUIRE(sp.in_front);
      REQUIRE(sm.in_front);
      jac.col(axis) = (sp.screen - sm.screen) / (2 * h);
    }
    const Mat2d expected = jac * cov3 * jac.transpose();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(std::abs(splat->cov2d(i, j) - expected(i, j)) <
              1e-4 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("render: single gaussian over a pixel center") {
  // Screen position lands exactly on the center of pixel (3, 3) of an 8x8
  // image: x/z * f + 4 = 3.5.
  const CameraModeld cam = make_camera(10, 8, 8);
  Scene<double> scene;
  scene.gaussians.push_back(make_gaussian(Vec3d(-0.1, -0.1, 2.0), 0.05, 0.9, Vec3d(1, 0, 0)));
  RenderSettings settings;
  settings.apply_smoothing = false;
  settings.background = Vec3d::Zero();

  const RenderOutput out = render(scene, cam, settings);
  CHECK(out.color.r(3, 3) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(out.color.g(3, 3) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(out.depth(3, 3) == doctest::Approx(0.9 * 2.0).epsilon(1e-9));
  CHECK(out.alpha(3, 3) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(out.contrib_count(3, 3) == 1);
}

TEST_CASE("render: two stacked splats composite per the telescoping product") {
  const CameraModeld cam = make_camera(10, 8, 8);
  Scene<double> scene;
  // Same screen point (x/z fixed), different depths, opacity exactly 0.5.
  scene.gaussians.push_back(make_gaussian(Vec3d(-0.1, -0.1, 2.0), 0.05, 0.5, Vec3d(1, 0, 0)));
  scene.gaussians.push_back(make_gaussian(Vec3d(-0.15, -0.15, 3.0), 0.075, 0.5, Vec3d(0, 1, 0)));
  RenderSettings settings;
  settings.apply_smoothing = false;
  settings.background = Vec3d(0.2, 0.2, 0.2);

  const RenderOutput out = render(scene, cam, settings);
  CHECK(out.color.r(3, 3) == doctest::Approx(0.5 * 1.0 + 0.25 * 0.0 + 0.25 * 0.2).epsilon(1e-9));
  CHECK(out.color.g(3, 3) == doctest::Approx(0.25 * 1.0 + 0.25 * 0.2).epsilon(1e-9));
  CHECK(out.color.b(3, 3) == doctest::Approx(0.25 * 0.2).epsilon(1e-9));
  CHECK(out.depth(3, 3) == doctest::Approx(0.5 * 2.0 + 0.25 * 3.0).epsilon(1e-9));
  CHECK(out.alpha(3, 3) == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("render: empty scene gives background only") {
  const CameraModeld cam = make_camera(10, 8, 8);
  Scene<double> scene;
  RenderSettings settings;
  settings.apply_smoothing = false;
  settings.background = Vec3d(0.3, 0.5, 0.7);
  const RenderOutput out = render(scene, cam, settings);
  CHECK(out.color.r(0, 0) == 0.3);
  CHECK(out.color.g(4, 5) == 0.5);
  CHECK(out.depth.abs().maxCoeff() == 0.0);
  CHECK(out.alpha.abs().maxCoeff() == 0.0);
}

TEST_CASE("render: tiled renderer matches the brute-force compositor") {
  Rng rng(66);
  const CameraModeld cam = make_camera(60, 64, 64);
  for (int trial = 0; trial < 10; ++trial) {
    const Scene<double> scene = random_scene(150, rng);
    RenderSettings settings;
    settings.background = Vec3d(0.1, 0.2, 0.3);
    settings.transmittance_min = 0.0;  // oracle composites without early stop
    settings.threads = 2;
    const RenderOutput tiled = render(scene, cam, settings);
    const RenderOutput reference = render_reference(scene, cam, settings);
    CHECK(output_diff(tiled, reference) <= 1e-6);
  }
}

TEST_CASE("render: deterministic across thread counts") {
  Rng rng(67);
  const Scene<double> scene = random_scene(120, rng);
  const CameraModeld cam = make_camera(60, 64, 64);
  RenderSettings settings;
  settings.threads = 1;
  const RenderOutput a = render(scene, cam, settings);
  settings.threads = 4;
  const RenderOutput b = render(scene, cam, settings);
  CHECK(output_diff(a, b) == 0.0);
}

TEST_CASE("render: transmittance telescoping, alpha + product(1 - sigma) = 1") {
  Rng rng(68);
  const Scene<double> scene = random_scene(80, rng);
  const CameraModeld cam = make_camera(60, 32, 32);
  RenderSettings settings;
  settings.transmittance_min = 0.0;
  const RenderOutput out = render(scene, cam, settings);

  // Independent per-pixel recomputation from the splat list.
  auto splats = build_splats(scene, cam, settings);
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.source_index < b.source_index;
  });
  for (int py = 0; py < 32; py += 5) {
    for (int px = 0; px < 32; px += 5) {
      const Vec2d pix(px + 0.5, py + 0.5);
      double alpha_sum = 0.0, product = 1.0;
      for (const auto& s : splats) {
        const Vec2d d = pix - s.mean2d;
        const double mahal = d.dot(s.cov2d.inverse() * d);
        if (mahal > settings.mahal_cutoff_sq) continue;
        const double sigma = std::min(settings.sigma_clamp, s.opacity * std::exp(-0.5 * mahal));
        alpha_sum += sigma * product;
        product *= 1.0 - sigma;
      }
      CHECK(std::abs(alpha_sum + product - 1.0) < 1e-6);
      CHECK(std::abs(out.alpha(py, px) - alpha_sum) < 1e-9);
    }
  }
}

TEST_CASE("render: depth invariant to SH color parameters") {
  Rng rng(69);
  Scene<double> scene = random_scene(40, rng);
  const CameraModeld cam = make_camera(60, 32, 32);
  RenderSettings settings;
  const RenderOutput before = render(scene, cam, settings);
  for (auto& g : scene.gaussians) g.sh_coeffs.array() += 0.05;
  const RenderOutput after = render(scene, cam, settings);
  CHECK((before.depth - after.depth).abs().maxCoeff() == 0.0);
  double color_change = 0.0;
  for (int c = 0; c < 3; ++c)
    color_change =
        std::max(color_change, (before.color.channel(c) - after.color.channel(c)).abs().maxCoeff());
  CHECK(color_change > 0.0);
}

TEST_CASE("render_backward: zero upstream gradients give zero parameter gradients") {
  Rng rng(70);
  const Scene<double> scene = random_scene(30, rng);
  const CameraModeld cam = make_camera(60, 32, 32);
  RenderSettings settings;
  const ColorImaged zero_color(32, 32);
  const Planed zero_depth = Planed::Zero(32, 32);
  const SceneGrads grads = render_backward(scene, cam, settings, zero_color, zero_depth);
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    CHECK(grads.d_center[i].norm() == 0.0);
    CHECK(grads.d_rotation[i].norm() == 0.0);
    CHECK(grads.d_log_scale[i].norm() == 0.0);
    CHECK(grads.d_opacity_logit[i] == 0.0);
    CHECK(grads.d_sh[i].norm() == 0.0);
  }
}

TEST_CASE("render_backward: single-gaussian opacity gradient is G2D * color") {
  const CameraModeld cam = make_camera(10, 8, 8);
  Scene<double> scene;
  const double alpha = 0.6;
  scene.gaussians.push_back(make_gaussian(Vec3d(-0.1, -0.1, 2.0), 0.05, alpha, Vec3d(1, 0, 0)));
  RenderSettings settings;
  settings.apply_smoothing = false;

  ColorImaged grad_color(8, 8);
  grad_color.r(3, 3) = 1.0;  // upstream dL/dC_red at the covered pixel
  const Planed grad_depth = Planed::Zero(8, 8);
  const SceneGrads grads = render_backward(scene, cam, settings, grad_color, grad_depth);

  // dC_red/dopacity_logit = g2d * color_red * alpha * (1 - alpha); g2d = 1 at
  // the pixel center.
  const double expected = 1.0 * 1.0 * alpha * (1.0 - alpha);
  CHECK(grads.d_opacity_logit[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("render_backward: finite-difference gradient check over all parameters") {
  Rng rng(71);
  Scene<double> scene = random_scene(12, rng, 4);
  const CameraModeld cam = make_camera(40, 24, 24);

  RenderSettings settings;
  settings.apply_smoothing = true;
  settings.smoothing_s = 0.2;
  settings.mahal_cutoff_sq = 0.0;   // disable hard truncation: smooth loss
  settings.transmittance_min = 0.0; // disable early stop
  settings.background = Vec3d(0.2, 0.1, 0.4);

  // Fixed random weight images define the scalar loss
  // L = sum(w_c . color) + sum(w_d . depth).
  ColorImaged wc(24, 24);
  Planed wd(24, 24);
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 24; ++j) {
      wc.r(i, j) = rng.uniform(-1, 1);
      wc.g(i, j) = rng.uniform(-1, 1);
      wc.b(i, j) = rng.uniform(-1, 1);
      wd(i, j) = rng.uniform(-0.5, 0.5);
    }

  const auto loss = [&](const Scene<double>& s) {
    const RenderOutput out = render(s, cam, settings);
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) acc += (out.color.channel(c) * wc.channel(c)).sum();
    acc += (out.depth * wd).sum();
    return acc;
  };

  const SceneGrads grads = render_backward(scene, cam, settings, wc, wd);

  const double h = 1e-5;
  int checked = 0;
  const auto check_param = [&](double* p, double analytic) {
    const double orig = *p;
    *p = orig + h;
    const double lp = loss(scene);
    *p = orig - h;
    const double lm = loss(scene);
    *p = orig;
    const double fd = (lp - lm) / (2 * h);
    const double tol = 1e-3 * std::max({std::abs(fd), std::abs(analytic), 1e-3});
    CHECK(std::abs(fd - analytic) <= tol);
    ++checked;
  };

  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    auto& g = scene.gaussians[i];
    for (int k = 0; k < 3; ++k) check_param(&g.center[k], grads.d_center[i][k]);
    for (int k = 0; k < 4; ++k) check_param(&g.rotation.coeffs()[k], grads.d_rotation[i][k]);
    for (int k = 0; k < 3; ++k) check_param(&g.log_scale[k], grads.d_log_scale[i][k]);
    check_param(&g.opacity_logit, grads.d_opacity_logit[i]);
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < g.sh_coeffs.cols(); ++b)
        check_param(&g.sh_coeffs(c, b), grads.d_sh[i](c, b));
  }
  CHECK(checked == 12 * (3 + 4 + 3 + 1 + 12));
}

TEST_CASE("render_backward: gradient image size mismatch") {
  Rng rng(72);
  const Scene<double> scene = random_scene(5, rng);
  const CameraModeld cam = make_camera(40, 24, 24);
  RenderSettings settings;
  CHECK_THROWS_AS(
      render_backward(scene, cam, settings, ColorImaged(10, 10), Planed::Zero(10, 10)),
      SizeMismatchError);
}

TEST_CASE("render: back-to-front compositing agrees with front-to-back") {
  Rng rng(73);
  const Scene<double> scene = random_scene(100, rng);
  const CameraModeld cam = make_camera(60, 48, 48);
  RenderSettings settings;
  settings.background = Vec3d(0.15, 0.3, 0.45);
  settings.transmittance_min = 0.0;
  const RenderOutput front = render(scene, cam, settings);

  // Independent back-to-front route: C <- c_i s_i + (1 - s_i) C walking the
  // splats far to near, seeded with the background.
  auto splats = build_splats(scene, cam, settings);
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth != b.depth ? a.depth > b.depth : a.source_index > b.source_index;
  });
  double worst = 0.0;
  for (int py = 0; py < 48; ++py) {
    for (int px = 0; px < 48; ++px) {
      const Vec2d pix(px + 0.5, py + 0.5);
      Vec3d color = settings.background;
      double depth = 0.0;
      for (const auto& s : splats) {
        const Vec2d d = pix - s.mean2d;
        const double mahal = d.dot(s.cov2d.inverse() * d);
        if (mahal > settings.mahal_cutoff_sq) continue;
        const double sigma = std::min(settings.sigma_clamp, s.opacity * std::exp(-0.5 * mahal));
        color = s.color * sigma + (1.0 - sigma) * color;
        depth = s.depth * sigma + (1.0 - sigma) * depth;
      }
      worst = std::max(worst, std::abs(front.color.r(py, px) - color.x()));
      worst = std::max(worst, std::abs(front.color.g(py, px) - color.y()));
      worst = std::max(worst, std::abs(front.color.b(py, px) - color.z()));
      worst = std::max(worst, std::abs(front.depth(py, px) - depth));
    }
  }
  CHECK(worst <= 1e-6);
}
