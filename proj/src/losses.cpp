#include "splatkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

#include "splatkit/errors.hpp"

namespace splat {

double rgb_loss(const ColorImaged& rendered, const ColorImaged& reference, double dssim_mix,
                ColorImaged* grad) {
  if (rendered.rows() != reference.rows() || rendered.cols() != reference.cols())
    throw SizeMismatchError("rgb_loss: image size mismatch");
  const double n = static_cast<double>(rendered.rows() * rendered.cols() * 3);

  double l1 = 0.0;
  for (int c = 0; c < 3; ++c) l1 += (rendered.channel(c) - reference.channel(c)).abs().sum();
  l1 /= n;

  double loss = (1.0 - dssim_mix) * l1;
  if (grad) {
    grad->resize(rendered.rows(), rendered.cols());
    for (int c = 0; c < 3; ++c)
      grad->channel(c) = (1.0 - dssim_mix) / n * (rendered.channel(c) - reference.channel(c)).sign();
  }

  if (dssim_mix > 0.0) {
    double ssim_acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      ssim_acc += ssim_plane(rendered.channel(c), reference.channel(c));
      if (grad) {
        // d/dx of m*(1 - ssim)/2 averaged over channels.
        grad->channel(c) += ssim_backward_plane(rendered.channel(c), reference.channel(c),
                                                -dssim_mix / 6.0);
      }
    }
    loss += dssim_mix * (1.0 - ssim_acc / 3.0) / 2.0;
  }
  return loss;
}

DepthMaskResult compute_depth_mask(const DepthMap& depth, const MaskConfig& cfg) {
  const Planed& d = depth.values;
  if (d.size() == 0) throw InvalidDepthError("compute_depth_mask: empty depth map");
  if (!d.isFinite().all()) throw InvalidDepthError("compute_depth_mask: NaN/Inf in depth map");
  if (cfg.q_base < 0.0 || cfg.q_base > 1.0 || cfg.delta_q < 0.0 || cfg.q_base + cfg.delta_q > 1.0)
    throw Error("compute_depth_mask: require 0 <= q_base and q_base + delta_q <= 1");

  DepthMaskResult out;
  // Sequential accumulation: the stated contract is exact agreement with a
  // sort-based oracle, so the summation order must be defined.
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) sum += d.data()[i];
  out.mean = sum / static_cast<double>(d.size());
  double var = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double delta = d.data()[i] - out.mean;
    var += delta * delta;
  }
  out.stddev = std::sqrt(var / static_cast<double>(d.size()));

  const double denom = out.stddev + out.mean;
  const double factor = denom > 0.0 ? out.stddev / denom : 0.0;
  out.quantile = std::clamp(cfg.q_base + factor * cfg.delta_q, 0.0, 1.0);

  // Linear-interpolation quantile of the flattened map.
  std::vector<double> sorted(d.data(), d.data() + d.size());
  std::sort(sorted.begin(), sorted.end());
  const double pos = out.quantile * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  out.threshold = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

  out.mask = (d <= out.threshold).cast<std::uint8_t>();
  return out;
}

double masked_depth_loss(const Planed& rendered, const Planed& reference, const DepthMask& mask,
                         Planed* grad) {
  if (rendered.rows() != reference.rows() || rendered.cols() != reference.cols() ||
      rendered.rows() != mask.rows() || rendered.cols() != mask.cols())
    throw SizeMismatchError("masked_depth_loss: size mismatch");

  const double count = static_cast<double>((mask > std::uint8_t(0)).count());
  if (grad) grad->setZero(rendered.rows(), rendered.cols());
  if (count == 0.0) {
    std::cerr << "[splatkit] warning: depth mask is empty, no supervised pixels\n";
    return 0.0;
  }
  const Planed masked = mask.cast<double>();
  const Planed diff = (rendered - reference) * masked;
  if (grad) *grad = diff.sign() * masked / count;
  return diff.abs().sum() / count;
}

double dgpp_loss(const Planed& rendered_masked, const Planed& reference_masked, Planed* grad) {
  if (rendered_masked.rows() != reference_masked.rows() ||
      rendered_masked.cols() != reference_masked.cols())
    throw SizeMismatchError("dgpp_loss: size mismatch");

  Planed gx_r, gy_r, gx_t, gy_t;
  image_gradients(rendered_masked, gx_r, gy_r);
  image_gradients(reference_masked, gx_t, gy_t);
  const Planed dx = gx_r - gx_t;
  const Planed dy = gy_r - gy_t;
  const double n = static_cast<double>(rendered_masked.size());
  const double loss = (dx.abs().sum() + dy.abs().sum()) / n;
  if (grad) *grad = image_gradients_adjoint((dx.sign() / n).eval(), (dy.sign() / n).eval());
  return loss;
}

SdsGradient sds_gradient(const ColorImaged& image, const Planed& depth, Denoiser& denoiser,
                         const LossWeights& weights, Rng& rng) {
  SdsGradient out;
  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  out.grad_image.resize(h, w);
  out.grad_depth.setZero(depth.rows(), depth.cols());
  out.t = rng.uniform(weights.t_min, weights.t_max);
  const std::uint64_t seed_image = rng.next_u64();
  const std::uint64_t seed_depth = rng.next_u64();

  const double ab = denoiser.alpha_bar(out.t);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(std::max(0.0, 1.0 - ab));

  try {
    double norm_sq = 0.0;
    if (weights.lambda_image > 0.0) {
      std::vector<float> noise = standard_normal_f32(seed_image, static_cast<std::size_t>(h) * w * 3);
      std::vector<float> x_t(noise.size());
      std::size_t idx = 0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          for (int c = 0; c < 3; ++c, ++idx)
            x_t[idx] = static_cast<float>(sqrt_ab * image.channel(c)(i, j) +
                                          sqrt_1mab * noise[idx]);
      const auto eps = denoiser.predict_noise(DenoiseKind::Image, x_t, h, w, 3, out.t, seed_image);
      if (eps.size() != x_t.size()) throw FormatError("denoiser returned wrong image shape");
      idx = 0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          for (int c = 0; c < 3; ++c, ++idx) {
            const double g = weights.lambda_image * weights.w_t *
                             (static_cast<double>(eps[idx]) - static_cast<double>(noise[idx]));
            out.grad_image.channel(c)(i, j) = g;
            norm_sq += g * g;
          }
    }
    if (weights.lambda_depth_sds > 0.0) {
      const int dh = static_cast<int>(depth.rows()), dw = static_cast<int>(depth.cols());
      std::vector<float> noise = standard_normal_f32(seed_depth, static_cast<std::size_t>(dh) * dw);
      std::vector<float> x_t(noise.size());
      std::size_t idx = 0;
      for (int i = 0; i < dh; ++i)
        for (int j = 0; j < dw; ++j, ++idx)
          x_t[idx] = static_cast<float>(sqrt_ab * depth(i, j) + sqrt_1mab * noise[idx]);
      const auto eps = denoiser.predict_noise(DenoiseKind::Depth, x_t, dh, dw, 1, out.t, seed_depth);
      if (eps.size() != x_t.size()) throw FormatError("denoiser returned wrong depth shape");
      idx = 0;
      for (int i = 0; i < dh; ++i)
        for (int j = 0; j < dw; ++j, ++idx) {
          const double g = weights.lambda_depth_sds * weights.w_t *
                           (static_cast<double>(eps[idx]) - static_cast<double>(noise[idx]));
          out.grad_depth(i, j) = g;
          norm_sq += g * g;
        }
    }
    out.norm = std::sqrt(norm_sq);
    out.applied = true;
  } catch (const std::exception& e) {
    std::cerr << "[splatkit] warning: SDS denoiser call failed (" << e.what()
              << "); skipping SDS for this step\n";
    out.grad_image.resize(h, w);
    out.grad_depth.setZero(depth.rows(), depth.cols());
    out.norm = 0.0;
    out.applied = false;
  }
  return out;
}

KnownViewLosses known_view_losses(const RenderOutput& rendered, const ColorImaged& ref_image,
                                  const DepthMap& ref_depth, const MaskConfig& mask_cfg,
                                  const LossWeights& weights) {
  KnownViewLosses out;
  out.report.rgb = rgb_loss(rendered.color, ref_image, weights.dssim_mix, &out.grad_color);
  out.mask = compute_depth_mask(ref_depth, mask_cfg);

  Planed grad_masked_l1;
  out.report.depth =
      masked_depth_loss(rendered.depth, ref_depth.values, out.mask.mask, &grad_masked_l1);

  const Planed maskd = out.mask.mask.cast<double>();
  Planed grad_dgpp_masked;
  out.report.dgpp = dgpp_loss((rendered.depth * maskd).eval(), (ref_depth.values * maskd).eval(),
                              &grad_dgpp_masked);

  // Chain dgpp through the masking (element-wise product) and combine.
  out.grad_depth = weights.lambda_depth * (grad_masked_l1 + weights.lambda_dgpp * grad_dgpp_masked * maskd);
  out.report.total =
      out.report.rgb + weights.lambda_depth * (out.report.depth + weights.lambda_dgpp * out.report.dgpp);
  return out;
}

}  // namespace splat
