#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splatkit/denoiser.hpp"
#include "splatkit/losses.hpp"
#include "splatkit/optimizer.hpp"
#include "splatkit/rasterizer.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/smoothing.hpp"
#include "splatkit/types.hpp"

namespace splat {

struct TrainConfig {
  long iterations = 30000;

  double lr_center = 1.6e-4;
  double lr_center_final = 1.6e-6;  // exponential decay target at `iterations`
  double lr_rotation = 1e-3;
  double lr_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_sh = 2.5e-3;
  double weight_decay = 0.0;

  // Adaptive density control.
  double grad_threshold = 2e-4;
  double min_opacity = 0.005;
  long densify_interval = 100;  // 0 disables
  long densify_from = 500;
  long densify_until = 15000;
  double size_percentile = 0.01;  // clone/split boundary, fraction of scene extent
  double split_scale_shrink = 1.6;

  long smoothing_refresh_interval = 100;
  long sds_interval = 10;
  long sh_growth_interval = 1000;
  int max_sh_degree = 3;
  long checkpoint_interval = 5000;  // 0 disables

  double novel_jitter_deg = 5.0;
  double novel_jitter_frac = 0.02;  // of scene extent
  double novel_view_scale = 0.5;    // SDS renders at this resolution factor

  std::uint64_t rng_seed = 0;
};

/// One supervised view: camera, reference image, normalized reference depth.
struct TrainView {
  std::string name;
  CameraModeld camera;
  ColorImaged image;
  DepthMap depth;
};

struct IterationStats {
  long iteration = 0;
  LossReport losses;
  std::size_t gaussian_count = 0;
  double wall_ms = 0.0;
};

/// Gaussians from a point cloud: per-point scale from the mean distance to
/// the 3 nearest neighbors, identity rotation, opacity 0.1, degree-0 SH from
/// the point color (coefficients allocated for max_sh_degree).
Scene<double> init_scene(const PointCloudd& cloud, int max_sh_degree = 3);

/// Pose interpolation between two cameras: slerp on the rotation, linear on
/// the camera center; intrinsics copied from `a`.
CameraModeld interpolate_pose(const CameraModeld& a, const CameraModeld& b, double u);

/// Novel view between a random camera and its nearest neighbor, with
/// bounded rotation/center jitter.
CameraModeld sample_novel_view(const std::vector<CameraModeld>& cameras, double scene_extent,
                               double jitter_deg, double jitter_frac, Rng& rng);

/// Clone/split/prune decisions, separated from the trainer so tests can
/// replay the rules independently.
struct DensityControlResult {
  long cloned = 0, split = 0, pruned = 0;
};

DensityControlResult adaptive_density_control(Scene<double>& scene,
                                              const std::vector<double>& mean_grad_norm,
                                              const TrainConfig& cfg, double scene_extent,
                                              std::vector<MomentState*> moments,
                                              const std::vector<std::size_t>& widths);

class Trainer {
 public:
  Trainer(std::vector<TrainView> views, Scene<double> initial_scene, TrainConfig cfg,
          LossWeights weights, MaskConfig mask_cfg, SmoothingConfig smoothing,
          RenderSettings render_settings, std::unique_ptr<Denoiser> denoiser = nullptr);

  /// Runs the full loop. `out_dir` may be empty (no checkpoints / CSV).
  Scene<double>& train(const std::string& out_dir = "");

  /// One iteration; exposed for step-level tests.
  IterationStats step();

  const Scene<double>& scene() const { return scene_; }
  Scene<double>& scene() { return scene_; }
  long iteration() const { return iteration_; }
  const std::vector<IterationStats>& history() const { return history_; }

 private:
  void refresh_smoothing();
  void optimizer_step(const SceneGrads& grads);
  void run_density_control();
  void checkpoint(const std::string& out_dir) const;
  double scene_extent() const;
  double center_lr() const;

  std::vector<TrainView> views_;
  std::vector<CameraModeld> cameras_;
  Scene<double> scene_;
  TrainConfig cfg_;
  LossWeights weights_;
  MaskConfig mask_cfg_;
  SmoothingConfig smoothing_;
  RenderSettings render_settings_;
  std::unique_ptr<Denoiser> denoiser_;
  Rng rng_;

  MomentState mom_center_, mom_rotation_, mom_scale_, mom_opacity_, mom_sh_;
  std::vector<double> grad_norm_accum_;
  std::vector<long> grad_visit_count_;
  long iteration_ = 0;
  std::vector<IterationStats> history_;
};

}  // namespace splat
