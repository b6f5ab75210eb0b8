#pragma once

// Shared synthetic-scene helpers for trainer/metric/acceptance tests.

#include <cmath>

#include "splatkit/rasterizer.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/smoothing.hpp"
#include "splatkit/trainer.hpp"
#include "splatkit/types.hpp"

namespace splat::testsupport {

inline constexpr double kShC0 = 0.28209479177387814;

/// Proper (det +1) world-to-camera rotation looking from `position` at the
/// origin, with the camera x axis roughly horizontal.
inline CameraModeld look_at_origin(const Vec3d& position, double f, int w, int h) {
  CameraModeld cam;
  cam.focal = Vec2d(f, f);
  cam.width = w;
  cam.height = h;
  const Vec3d forward = (-position).normalized();
  const Vec3d up_hint = std::abs(forward.z()) > 0.95 ? Vec3d::UnitY() : Vec3d::UnitZ();
  const Vec3d right = up_hint.cross(forward).normalized();
  const Vec3d up = forward.cross(right);
  Mat3d r;
  r.row(0) = right.transpose();
  r.row(1) = up.transpose();
  r.row(2) = forward.transpose();
  cam.rotation = r;
  cam.translation = -(r * position);
  return cam;
}

inline Scene<double> random_blob_scene(int count, Rng& rng, double extent = 0.5,
                                       double scale_lo = -2.6, double scale_hi = -1.8) {
  Scene<double> scene;
  scene.sh_degree = 0;
  for (int i = 0; i < count; ++i) {
    GaussianPrimitived g;
    g.center = Vec3d(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                     rng.uniform(-extent * 0.6, extent * 0.6));
    g.rotation = Quatd(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation.normalize();
    g.log_scale = Vec3d(rng.uniform(scale_lo, scale_hi), rng.uniform(scale_lo, scale_hi),
                        rng.uniform(scale_lo, scale_hi));
    g.opacity_logit = logit(rng.uniform(0.5, 0.9));
    g.sh_coeffs.setZero(3, 1);
    for (int c = 0; c < 3; ++c) g.sh_coeffs(c, 0) = (rng.uniform(0.2, 0.9) - 0.5) / kShC0;
    scene.gaussians.push_back(g);
  }
  return scene;
}

/// Renders a ground-truth scene into a TrainView (image + normalized depth).
inline TrainView render_view(const Scene<double>& gt, const CameraModeld& cam,
                             const SmoothingConfig& smoothing, const RenderSettings& settings,
                             const std::string& name) {
  Scene<double> scene = gt;
  refresh_smoothing_state(scene, {cam}, smoothing);
  const RenderOutput out = render(scene, cam, settings);
  TrainView view;
  view.name = name;
  view.camera = cam;
  view.image = out.color;
  const double lo = out.depth.minCoeff(), hi = out.depth.maxCoeff();
  view.depth.values = hi - lo > 1e-12 ? Planed((out.depth - lo) / (hi - lo))
                                      : Planed(Planed::Zero(out.depth.rows(), out.depth.cols()));
  view.depth.normalized = true;
  return view;
}

}  // namespace splat::testsupport
