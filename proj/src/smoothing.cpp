#include "splatkit/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include "splatkit/errors.hpp"

namespace splat {

double max_frequency_of_point(const Vec3d& center, const std::vector<CameraModeld>& cameras,
                              const SmoothingConfig& cfg, int* visible_count) {
  double best = 0.0;
  int visible = 0;
  for (const auto& cam : cameras) {
    const auto proj = camera_transform(center, cam);
    if (!proj.in_front) continue;
    if (!in_extended_viewport(proj.screen, cam, cfg.alpha_margin)) continue;
    best = std::max(best, cam.focal.maxCoeff() / proj.cam.z());
    ++visible;
  }
  if (visible == 0) {
    double max_focal = 1.0;
    for (const auto& cam : cameras) max_focal = std::max(max_focal, cam.focal.maxCoeff());
    best = max_focal / cfg.fallback_far;
  }
  if (visible_count) *visible_count = visible;
  return best;
}

FrequencyTable compute_max_frequency(const Scene<double>& scene,
                                     const std::vector<CameraModeld>& cameras,
                                     const SmoothingConfig& cfg) {
  if (cameras.empty()) throw Error("compute_max_frequency: no cameras");
  FrequencyTable table;
  table.zeta.resize(scene.gaussians.size());
  table.visible_count.resize(scene.gaussians.size());
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    table.zeta[i] = max_frequency_of_point(scene.gaussians[i].center, cameras, cfg,
                                           &table.visible_count[i]);
  }
  return table;
}

std::pair<Mat3d, double> apply_smoothing_filter(const Mat3d& cov, double opacity, double zeta,
                                                double s) {
  if (zeta <= 0.0 || s <= 0.0) throw Error("apply_smoothing_filter: zeta and s must be positive");
  Mat3d cov_s = cov;
  cov_s.diagonal().array() += s / (zeta * zeta);
  const double ratio = std::sqrt(cov.determinant() / cov_s.determinant());
  return {cov_s, opacity * ratio};
}

void refresh_smoothing_state(Scene<double>& scene, const std::vector<CameraModeld>& cameras,
                             const SmoothingConfig& cfg) {
  const FrequencyTable table = compute_max_frequency(scene, cameras, cfg);
  scene.smoothing_state = table.zeta;
}

}  // namespace splat
