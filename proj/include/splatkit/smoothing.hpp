#pragma once

#include <utility>
#include <vector>

#include "splatkit/camera.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// 3D smoothing-filter parameters. `fallback_far` is the far distance used
/// to derive a frequency for Gaussians no camera sees.
struct SmoothingConfig {
  double s_filter = 0.2;
  double alpha_margin = 0.15;
  double fallback_far = 100.0;
};

/// Per-Gaussian maximum observed sampling frequency.
struct FrequencyTable {
  std::vector<double> zeta;
  std::vector<int> visible_count;
};

/// zeta_k = max over qualifying cameras of max(f_x, f_y) / z_e, where a
/// camera qualifies when the center projects in front of it and inside the
/// alpha-extended viewport. Gaussians with no qualifying camera get the
/// fallback frequency max_i(max focal) / fallback_far.
FrequencyTable compute_max_frequency(const Scene<double>& scene,
                                     const std::vector<CameraModeld>& cameras,
                                     const SmoothingConfig& cfg);

/// Frequency for a single center (shared by the table builder and tests).
double max_frequency_of_point(const Vec3d& center, const std::vector<CameraModeld>& cameras,
                              const SmoothingConfig& cfg, int* visible_count = nullptr);

/// 3D smoothing filter: cov_s = cov + (s / zeta^2) I and
/// opacity_s = opacity * sqrt(det cov / det cov_s). The amplitude factor is
/// folded into opacity so the rasterizer needs no changes.
std::pair<Mat3d, double> apply_smoothing_filter(const Mat3d& cov, double opacity, double zeta,
                                                double s);

/// Recomputes scene.smoothing_state from the camera set.
void refresh_smoothing_state(Scene<double>& scene, const std::vector<CameraModeld>& cameras,
                             const SmoothingConfig& cfg);

}  // namespace splat
