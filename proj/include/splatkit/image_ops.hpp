#pragma once

#include <cmath>
#include <vector>

#include "splatkit/errors.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// Normalized 1D Gaussian kernel of odd length.
std::vector<double> gaussian_kernel(int length, double sigma);

/// Separable same-size convolution with zero padding. The kernel is
/// symmetric, so this operator is its own adjoint.
Planed conv_separable(const Planed& img, const std::vector<double>& kernel);

/// Image gradients via central differences, one-sided at the borders.
void image_gradients(const Planed& img, Planed& gx, Planed& gy);

/// Adjoint of image_gradients: accumulates the stencil transpose of
/// (gx_bar, gy_bar) into an image-sized gradient.
Planed image_gradients_adjoint(const Planed& gx_bar, const Planed& gy_bar);

/// Bilinear resample to (rows, cols), sampling pixel centers.
Planed resample_bilinear(const Planed& img, Eigen::Index rows, Eigen::Index cols);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over pixels of two single-channel images in [0,1].
double ssim_plane(const Planed& a, const Planed& b, const SsimOptions& opts = {});

/// Mean SSIM averaged over RGB channels.
double ssim(const ColorImaged& a, const ColorImaged& b, const SsimOptions& opts = {});

/// d(mean SSIM)/da for a single channel, scaled by `upstream`.
Planed ssim_backward_plane(const Planed& a, const Planed& b, double upstream,
                           const SsimOptions& opts = {});

}  // namespace splat
