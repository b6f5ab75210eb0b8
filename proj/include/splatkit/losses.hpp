#pragma once

#include <cstdint>

#include "splatkit/denoiser.hpp"
#include "splatkit/image_ops.hpp"
#include "splatkit/rasterizer.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// Dynamic depth-mask parameters: retained quantile is
/// q_f = q_b + (std/(std+mean)) * delta_q, clamped to [0,1].
struct MaskConfig {
  double q_base = 0.9;
  double delta_q = 0.08;
};

struct LossWeights {
  double lambda_depth = 0.1;
  double lambda_sds = 0.05;
  double lambda_dgpp = 0.5;
  double lambda_image = 1.0;  // lambda_1, SDS image branch
  double lambda_depth_sds = 0.5;  // lambda_2, SDS depth branch
  double dssim_mix = 0.2;
  double t_min = 0.02;
  double t_max = 0.5;
  double w_t = 1.0;
};

struct LossReport {
  double rgb = 0.0;
  double depth = 0.0;
  double dgpp = 0.0;
  double sds_norm = 0.0;
  double total = 0.0;
};

struct DepthMaskResult {
  DepthMask mask;
  double threshold = 0.0;  // T_f
  double quantile = 0.0;   // q_f
  double mean = 0.0;       // alpha_D
  double stddev = 0.0;     // beta_D (population)
};

/// (1-m) L1 + m (1 - SSIM)/2 between two RGB images, with the exact gradient
/// with respect to `rendered`.
double rgb_loss(const ColorImaged& rendered, const ColorImaged& reference, double dssim_mix,
                ColorImaged* grad = nullptr);

/// Mask = 1 where D <= Quantile(D, q_f); see MaskConfig. D must be
/// normalized and finite.
DepthMaskResult compute_depth_mask(const DepthMap& depth, const MaskConfig& cfg);

/// Mean |rendered - reference| over mask=1 pixels; gradient is exactly zero
/// elsewhere. An all-zero mask yields loss 0 with a stderr warning.
double masked_depth_loss(const Planed& rendered, const Planed& reference, const DepthMask& mask,
                         Planed* grad = nullptr);

/// Mean L1 distance between the gradient fields (central differences,
/// one-sided at borders) of two already-masked depth maps.
double dgpp_loss(const Planed& rendered_masked, const Planed& reference_masked,
                 Planed* grad = nullptr);

struct SdsGradient {
  ColorImaged grad_image;
  Planed grad_depth;
  double norm = 0.0;    // L2 norm of the injected gradients
  double t = 0.0;       // sampled diffusion time
  bool applied = false; // false when the denoiser call failed
};

/// Score-distillation gradient for one novel view: samples t and Gaussian
/// noise, noises the rendered image/depth with the denoiser's schedule and
/// returns w_t (eps_phi - eps) per branch, scaled by lambda_1 / lambda_2.
/// This is injected into the backward pass; it is never a scalar loss.
/// Denoiser failures are downgraded to applied=false with a warning.
SdsGradient sds_gradient(const ColorImaged& image, const Planed& depth, Denoiser& denoiser,
                         const LossWeights& weights, Rng& rng);

/// Known-view objective: rgb + lambda_depth * (masked depth + lambda_dgpp *
/// dgpp), evaluated on a render output against references, with combined
/// gradient images ready for render_backward. The reference depth drives the
/// mask; the rendered depth is expected on the same scale as the reference.
struct KnownViewLosses {
  LossReport report;  // sds_norm left 0 here
  ColorImaged grad_color;
  Planed grad_depth;
  DepthMaskResult mask;
};

KnownViewLosses known_view_losses(const RenderOutput& rendered, const ColorImaged& ref_image,
                                  const DepthMap& ref_depth, const MaskConfig& mask_cfg,
                                  const LossWeights& weights);

}  // namespace splat
