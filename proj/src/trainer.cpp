#include "splatkit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "splatkit/errors.hpp"
#include "splatkit/kdtree.hpp"
#include "splatkit/ply.hpp"

namespace splat {

namespace {

double cloud_extent(const std::vector<Vec3d>& positions) {
  if (positions.empty()) return 0.0;
  Vec3d lo = positions.front(), hi = lo;
  for (const auto& p : positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

}  // namespace

Scene<double> init_scene(const PointCloudd& cloud, int max_sh_degree) {
  if (cloud.positions.empty()) throw Error("init_scene: empty point cloud");
  const int basis = sh_basis_size(max_sh_degree);
  const double extent = cloud_extent(cloud.positions);
  const double fallback_scale = extent > 0.0 ? extent / 100.0 : 1e-2;

  Scene<double> scene;
  scene.sh_degree = 0;
  scene.gaussians.resize(cloud.positions.size());

  std::unique_ptr<KdTreed> tree;
  if (cloud.positions.size() > 1) tree = std::make_unique<KdTreed>(cloud.positions);

  const bool colored = cloud.has_colors();
  constexpr double kC0 = 0.28209479177387814;
  for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
    auto& g = scene.gaussians[i];
    g.center = cloud.positions[i];
    g.rotation = Quatd::Identity();
    g.opacity_logit = logit(0.1);
    g.sh_coeffs.setZero(3, basis);
    if (colored)
      for (int c = 0; c < 3; ++c) g.sh_coeffs(c, 0) = (cloud.colors[i][c] - 0.5) / kC0;

    double mean_dist = 0.0;
    if (tree) {
      const auto nn = tree->knn(cloud.positions[i], std::min<int>(4, tree->size()));
      int cnt = 0;
      for (const auto& nb : nn) {
        if (nb.index == static_cast<int>(i)) continue;
        mean_dist += std::sqrt(nb.dist_sq);
        if (++cnt == 3) break;
      }
      if (cnt > 0) mean_dist /= cnt;
    }
    if (mean_dist <= 0.0) mean_dist = fallback_scale;
    g.log_scale.setConstant(std::log(mean_dist));
  }
  return scene;
}

CameraModeld interpolate_pose(const CameraModeld& a, const CameraModeld& b, double u) {
  CameraModeld out = a;
  const Quatd qa(a.rotation), qb(b.rotation);
  const Quatd q = qa.slerp(u, qb);
  const Vec3d center = (1.0 - u) * a.position() + u * b.position();
  out.rotation = q.toRotationMatrix();
  out.translation = -(out.rotation * center);
  return out;
}

CameraModeld sample_novel_view(const std::vector<CameraModeld>& cameras, double scene_extent,
                               double jitter_deg, double jitter_frac, Rng& rng) {
  if (cameras.size() < 2) throw Error("sample_novel_view: need at least two cameras");
  const std::size_t i = rng.uniform_index(cameras.size());

  // Nearest camera by center distance, as the "adjacent" pose.
  std::size_t j = i == 0 ? 1 : 0;
  double best = (cameras[i].position() - cameras[j].position()).squaredNorm();
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    if (k == i) continue;
    const double d = (cameras[i].position() - cameras[k].position()).squaredNorm();
    if (d < best) {
      best = d;
      j = k;
    }
  }

  CameraModeld cam = interpolate_pose(cameras[i], cameras[j], rng.uniform());

  // Rotation jitter about a random axis, bounded by jitter_deg.
  Vec3d axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-12) axis = Vec3d::UnitZ();
  axis.normalize();
  const double angle = rng.uniform(-1.0, 1.0) * jitter_deg * M_PI / 180.0;
  const Mat3d jitter = Eigen::AngleAxisd(angle, axis).toRotationMatrix();

  Vec3d center = cam.position();
  const double shift = scene_extent * jitter_frac;
  for (int k = 0; k < 3; ++k) center[k] += rng.uniform(-1.0, 1.0) * shift;

  cam.rotation = cam.rotation * jitter;
  cam.translation = -(cam.rotation * center);
  return cam;
}

DensityControlResult adaptive_density_control(Scene<double>& scene,
                                              const std::vector<double>& mean_grad_norm,
                                              const TrainConfig& cfg, double scene_extent,
                                              std::vector<MomentState*> moments,
                                              const std::vector<std::size_t>& widths) {
  if (mean_grad_norm.size() != scene.gaussians.size())
    throw SizeMismatchError("adaptive_density_control: gradient accumulator size mismatch");

  DensityControlResult result;
  const double size_limit = cfg.size_percentile * scene_extent;
  const std::size_t n = scene.gaussians.size();
  std::vector<std::uint8_t> keep(n, 1);
  std::vector<GaussianPrimitived> appended;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = scene.gaussians[i];
    if (g.opacity() < cfg.min_opacity) {
      keep[i] = 0;
      ++result.pruned;
      continue;
    }
    if (mean_grad_norm[i] <= cfg.grad_threshold) continue;
    const double max_scale = g.scale().maxCoeff();
    if (max_scale < size_limit) {
      appended.push_back(g);  // clone; copies diverge through fresh moments
      ++result.cloned;
    } else {
      // Both children keep the parent center; compositing two of them peaks
      // at 1-(1-a')^2, so a' = 1-sqrt(1-a) keeps the rendered peak intact.
      GaussianPrimitived child = g;
      child.log_scale.array() -= std::log(cfg.split_scale_shrink);
      child.opacity_logit = logit(1.0 - std::sqrt(1.0 - g.opacity()));
      keep[i] = 0;
      appended.push_back(child);
      appended.push_back(child);
      ++result.split;
    }
  }

  std::vector<GaussianPrimitived> survivors;
  survivors.reserve(n + appended.size());
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) survivors.push_back(std::move(scene.gaussians[i]));
  for (auto& g : appended) survivors.push_back(std::move(g));
  scene.gaussians = std::move(survivors);
  scene.smoothing_state.clear();  // stale after any resize

  for (std::size_t k = 0; k < moments.size(); ++k) {
    moments[k]->filter(keep, widths[k]);
    moments[k]->append_zero(appended.size(), widths[k]);
  }
  return result;
}

Trainer::Trainer(std::vector<TrainView> views, Scene<double> initial_scene, TrainConfig cfg,
                 LossWeights weights, MaskConfig mask_cfg, SmoothingConfig smoothing,
                 RenderSettings render_settings, std::unique_ptr<Denoiser> denoiser)
    : views_(std::move(views)),
      scene_(std::move(initial_scene)),
      cfg_(cfg),
      weights_(weights),
      mask_cfg_(mask_cfg),
      smoothing_(smoothing),
      render_settings_(render_settings),
      denoiser_(std::move(denoiser)),
      rng_(cfg.rng_seed) {
  if (views_.empty()) throw Error("Trainer: no training views");
  if (scene_.gaussians.empty()) throw Error("Trainer: empty initial scene");
  for (const auto& v : views_) cameras_.push_back(v.camera);
  render_settings_.smoothing_s = smoothing_.s_filter;

  const std::size_t n = scene_.gaussians.size();
  const std::size_t basis = scene_.gaussians.front().sh_coeffs.cols();
  mom_center_.ensure(n, 3);
  mom_rotation_.ensure(n, 4);
  mom_scale_.ensure(n, 3);
  mom_opacity_.ensure(n, 1);
  mom_sh_.ensure(n, 3 * basis);
  grad_norm_accum_.assign(n, 0.0);
  grad_visit_count_.assign(n, 0);
}

double Trainer::scene_extent() const {
  Vec3d lo = scene_.gaussians.front().center, hi = lo;
  for (const auto& g : scene_.gaussians) {
    lo = lo.cwiseMin(g.center);
    hi = hi.cwiseMax(g.center);
  }
  const double extent = (hi - lo).norm();
  return extent > 0.0 ? extent : 1.0;
}

double Trainer::center_lr() const {
  const double frac =
      std::clamp(static_cast<double>(iteration_) / static_cast<double>(cfg_.iterations), 0.0, 1.0);
  return cfg_.lr_center * std::pow(cfg_.lr_center_final / cfg_.lr_center, frac);
}

void Trainer::refresh_smoothing() {
  if (render_settings_.apply_smoothing)
    refresh_smoothing_state(scene_, cameras_, smoothing_);
}

void Trainer::optimizer_step(const SceneGrads& grads) {
  const long t = iteration_;
  const double lr_center = center_lr();
  for (std::size_t i = 0; i < scene_.gaussians.size(); ++i) {
    auto& g = scene_.gaussians[i];
    const std::size_t basis = g.sh_coeffs.cols();
    adamw_step({g.center.data(), 3}, {grads.d_center[i].data(), 3},
               {mom_center_.m.data() + 3 * i, 3}, {mom_center_.v.data() + 3 * i, 3}, t, lr_center,
               cfg_.weight_decay);
    adamw_step({g.rotation.coeffs().data(), 4}, {grads.d_rotation[i].data(), 4},
               {mom_rotation_.m.data() + 4 * i, 4}, {mom_rotation_.v.data() + 4 * i, 4}, t,
               cfg_.lr_rotation, cfg_.weight_decay);
    adamw_step({g.log_scale.data(), 3}, {grads.d_log_scale[i].data(), 3},
               {mom_scale_.m.data() + 3 * i, 3}, {mom_scale_.v.data() + 3 * i, 3}, t, cfg_.lr_scale,
               cfg_.weight_decay);
    adamw_step({&g.opacity_logit, 1}, {&grads.d_opacity_logit[i], 1},
               {mom_opacity_.m.data() + i, 1}, {mom_opacity_.v.data() + i, 1}, t, cfg_.lr_opacity,
               cfg_.weight_decay);
    adamw_step({g.sh_coeffs.data(), 3 * basis}, {grads.d_sh[i].data(), 3 * basis},
               {mom_sh_.m.data() + 3 * basis * i, 3 * basis},
               {mom_sh_.v.data() + 3 * basis * i, 3 * basis}, t, cfg_.lr_sh, cfg_.weight_decay);

    const double qn = g.rotation.norm();
    if (qn > 0.0)
      g.rotation.coeffs() /= qn;
    else
      g.rotation = Quatd::Identity();
  }
}

void Trainer::run_density_control() {
  std::vector<double> mean_grad(scene_.gaussians.size(), 0.0);
  for (std::size_t i = 0; i < mean_grad.size(); ++i)
    if (grad_visit_count_[i] > 0) mean_grad[i] = grad_norm_accum_[i] / grad_visit_count_[i];

  const std::size_t basis = scene_.gaussians.front().sh_coeffs.cols();
  const auto result = adaptive_density_control(
      scene_, mean_grad, cfg_, scene_extent(),
      {&mom_center_, &mom_rotation_, &mom_scale_, &mom_opacity_, &mom_sh_}, {3, 4, 3, 1, 3 * basis});
  if (result.cloned || result.split || result.pruned)
    std::cerr << "[splatkit] iteration " << iteration_ << ": density control cloned "
              << result.cloned << ", split " << result.split << ", pruned " << result.pruned
              << ", population " << scene_.gaussians.size() << "\n";

  grad_norm_accum_.assign(scene_.gaussians.size(), 0.0);
  grad_visit_count_.assign(scene_.gaussians.size(), 0);
}

IterationStats Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  ++iteration_;
  IterationStats stats;
  stats.iteration = iteration_;

  if (render_settings_.apply_smoothing &&
      (scene_.smoothing_state.size() != scene_.gaussians.size() ||
       (cfg_.smoothing_refresh_interval > 0 &&
        (iteration_ - 1) % cfg_.smoothing_refresh_interval == 0)))
    refresh_smoothing();

  RenderSettings settings = render_settings_;
  if (cfg_.sh_growth_interval > 0)
    settings.sh_degree = static_cast<int>(
        std::min<long>(cfg_.max_sh_degree, iteration_ / cfg_.sh_growth_interval));
  else
    settings.sh_degree = cfg_.max_sh_degree;
  scene_.sh_degree = settings.sh_degree;

  const TrainView& view = views_[(iteration_ - 1) % views_.size()];
  const RenderOutput out = render(scene_, view.camera, settings);

  // Depth supervision happens in normalized space: min/max of the rendered
  // map are treated as constants for the backward pass.
  RenderOutput scaled = out;
  const double lo = out.depth.minCoeff(), hi = out.depth.maxCoeff();
  const double range = hi - lo;
  if (range > 1e-12)
    scaled.depth = (out.depth - lo) / range;
  else
    scaled.depth.setZero();

  KnownViewLosses kv = known_view_losses(scaled, view.image, view.depth, mask_cfg_, weights_);
  if (range > 1e-12)
    kv.grad_depth /= range;
  else
    kv.grad_depth.setZero();

  SceneGrads grads = render_backward(scene_, view.camera, settings, kv.grad_color, kv.grad_depth);
  stats.losses = kv.report;

  // Novel-view SDS guidance every sds_interval iterations.
  if (denoiser_ && weights_.lambda_sds > 0.0 && cfg_.sds_interval > 0 &&
      iteration_ % cfg_.sds_interval == 0 && cameras_.size() >= 2) {
    const CameraModeld novel = sample_novel_view(cameras_, scene_extent(), cfg_.novel_jitter_deg,
                                                 cfg_.novel_jitter_frac, rng_);
    const CameraModeld novel_cam = scaled_camera(novel, cfg_.novel_view_scale);
    const RenderOutput novel_out = render(scene_, novel_cam, settings);

    const double nlo = novel_out.depth.minCoeff(), nhi = novel_out.depth.maxCoeff();
    const double nrange = nhi - nlo;
    Planed novel_depth_n = nrange > 1e-12
                               ? Planed(((novel_out.depth - nlo) / nrange))
                               : Planed(Planed::Zero(novel_out.depth.rows(), novel_out.depth.cols()));

    const SdsGradient sds = sds_gradient(novel_out.color, novel_depth_n, *denoiser_, weights_, rng_);
    if (sds.applied) {
      ColorImaged gi = sds.grad_image;
      for (int c = 0; c < 3; ++c) gi.channel(c) *= weights_.lambda_sds;
      Planed gd = sds.grad_depth * weights_.lambda_sds;
      if (nrange > 1e-12)
        gd /= nrange;
      else
        gd.setZero();
      const SceneGrads novel_grads = render_backward(scene_, novel_cam, settings, gi, gd);
      for (std::size_t i = 0; i < scene_.gaussians.size(); ++i) {
        grads.d_center[i] += novel_grads.d_center[i];
        grads.d_rotation[i] += novel_grads.d_rotation[i];
        grads.d_log_scale[i] += novel_grads.d_log_scale[i];
        grads.d_opacity_logit[i] += novel_grads.d_opacity_logit[i];
        grads.d_sh[i] += novel_grads.d_sh[i];
      }
      stats.losses.sds_norm = weights_.lambda_sds * sds.norm;
    }
  }

  if (!std::isfinite(stats.losses.total))
    throw TrainingDivergedError(iteration_, "non-finite loss");

  for (std::size_t i = 0; i < scene_.gaussians.size(); ++i) {
    if (!grads.visible[i]) continue;
    grad_norm_accum_[i] += grads.d_center[i].norm();
    ++grad_visit_count_[i];
  }

  optimizer_step(grads);

  for (const auto& g : scene_.gaussians) {
    if (!g.center.allFinite() || !g.log_scale.allFinite() || !std::isfinite(g.opacity_logit) ||
        !g.rotation.coeffs().allFinite() || !g.sh_coeffs.allFinite())
      throw TrainingDivergedError(iteration_, "non-finite parameter after optimizer step");
  }

  if (cfg_.densify_interval > 0 && iteration_ >= cfg_.densify_from &&
      iteration_ <= cfg_.densify_until && iteration_ % cfg_.densify_interval == 0)
    run_density_control();

  stats.gaussian_count = scene_.gaussians.size();
  stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

void Trainer::checkpoint(const std::string& out_dir) const {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  const std::string stem = "ckpt_" + std::to_string(iteration_);
  write_ply(scene_, (dir / (stem + ".ply")).string());
  nlohmann::json meta;
  meta["iteration"] = iteration_;
  meta["gaussians"] = scene_.gaussians.size();
  meta["config"] = {{"iterations", cfg_.iterations},
                    {"lr_center", cfg_.lr_center},
                    {"lr_center_final", cfg_.lr_center_final},
                    {"lr_rotation", cfg_.lr_rotation},
                    {"lr_scale", cfg_.lr_scale},
                    {"lr_opacity", cfg_.lr_opacity},
                    {"lr_sh", cfg_.lr_sh},
                    {"weight_decay", cfg_.weight_decay},
                    {"grad_threshold", cfg_.grad_threshold},
                    {"min_opacity", cfg_.min_opacity},
                    {"densify_interval", cfg_.densify_interval},
                    {"densify_from", cfg_.densify_from},
                    {"densify_until", cfg_.densify_until},
                    {"size_percentile", cfg_.size_percentile},
                    {"smoothing_refresh_interval", cfg_.smoothing_refresh_interval},
                    {"sds_interval", cfg_.sds_interval},
                    {"sh_growth_interval", cfg_.sh_growth_interval},
                    {"max_sh_degree", cfg_.max_sh_degree},
                    {"checkpoint_interval", cfg_.checkpoint_interval},
                    {"rng_seed", cfg_.rng_seed},
                    {"lambda_depth", weights_.lambda_depth},
                    {"lambda_sds", weights_.lambda_sds},
                    {"lambda_dgpp", weights_.lambda_dgpp},
                    {"dssim_mix", weights_.dssim_mix}};
  std::ofstream js(dir / (stem + ".json"));
  js << meta.dump(2) << "\n";
}

Scene<double>& Trainer::train(const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv.open(fs::path(out_dir) / "metrics.csv");
    csv << "iteration,rgb,depth,dgpp,sds_norm,total,gaussians,wall_ms\n";
  }

  while (iteration_ < cfg_.iterations) {
    IterationStats stats;
    try {
      stats = step();
    } catch (const TrainingDivergedError& e) {
      if (!out_dir.empty()) {
        nlohmann::json dump;
        dump["iteration"] = e.iteration;
        dump["error"] = e.what();
        dump["gaussians"] = scene_.gaussians.size();
        if (!history_.empty()) {
          dump["last_total"] = history_.back().losses.total;
          dump["last_rgb"] = history_.back().losses.rgb;
        }
        std::ofstream js(fs::path(out_dir) / ("diverged_" + std::to_string(e.iteration) + ".json"));
        js << dump.dump(2) << "\n";
      }
      throw;
    }
    history_.push_back(stats);
    if (csv.is_open()) {
      csv << stats.iteration << "," << stats.losses.rgb << "," << stats.losses.depth << ","
          << stats.losses.dgpp << "," << stats.losses.sds_norm << "," << stats.losses.total << ","
          << stats.gaussian_count << "," << stats.wall_ms << "\n";
    }
    if (!out_dir.empty() && cfg_.checkpoint_interval > 0 &&
        iteration_ % cfg_.checkpoint_interval == 0)
      checkpoint(out_dir);
  }
  if (!out_dir.empty() &&
      (cfg_.checkpoint_interval <= 0 || iteration_ % cfg_.checkpoint_interval != 0))
    checkpoint(out_dir);
  return scene_;
}

}  // namespace splat
