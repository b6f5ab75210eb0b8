#include "splatkit/image_ops.hpp"

namespace splat {

std::vector<double> gaussian_kernel(int length, double sigma) {
  if (length < 1 || length % 2 == 0) throw Error("gaussian_kernel: length must be odd and positive");
  std::vector<double> k(length);
  const int half = length / 2;
  double sum = 0.0;
  for (int i = 0; i < length; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

Planed conv_separable(const Planed& img, const std::vector<double>& kernel) {
  const Eigen::Index h = img.rows(), w = img.cols();
  const int half = static_cast<int>(kernel.size()) / 2;
  Planed tmp = Planed::Zero(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      double acc = 0.0;
      const Eigen::Index lo = std::max<Eigen::Index>(0, j - half);
      const Eigen::Index hi = std::min<Eigen::Index>(w - 1, j + half);
      for (Eigen::Index jj = lo; jj <= hi; ++jj) acc += kernel[jj - j + half] * img(i, jj);
      tmp(i, j) = acc;
    }
  }
  Planed out = Planed::Zero(h, w);
  for (Eigen::Index j = 0; j < w; ++j) {
    for (Eigen::Index i = 0; i < h; ++i) {
      double acc = 0.0;
      const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
      const Eigen::Index hi = std::min<Eigen::Index>(h - 1, i + half);
      for (Eigen::Index ii = lo; ii <= hi; ++ii) acc += kernel[ii - i + half] * tmp(ii, j);
      out(i, j) = acc;
    }
  }
  return out;
}

void image_gradients(const Planed& img, Planed& gx, Planed& gy) {
  const Eigen::Index h = img.rows(), w = img.cols();
  gx.setZero(h, w);
  gy.setZero(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      if (w > 1) {
        if (j == 0)
          gx(i, j) = img(i, 1) - img(i, 0);
        else if (j == w - 1)
          gx(i, j) = img(i, w - 1) - img(i, w - 2);
        else
          gx(i, j) = 0.5 * (img(i, j + 1) - img(i, j - 1));
      }
      if (h > 1) {
        if (i == 0)
          gy(i, j) = img(1, j) - img(0, j);
        else if (i == h - 1)
          gy(i, j) = img(h - 1, j) - img(h - 2, j);
        else
          gy(i, j) = 0.5 * (img(i + 1, j) - img(i - 1, j));
      }
    }
  }
}

Planed image_gradients_adjoint(const Planed& gx_bar, const Planed& gy_bar) {
  const Eigen::Index h = gx_bar.rows(), w = gx_bar.cols();
  if (gy_bar.rows() != h || gy_bar.cols() != w)
    throw SizeMismatchError("image_gradients_adjoint: gx/gy size mismatch");
  Planed out = Planed::Zero(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      const double sx = gx_bar(i, j);
      if (w > 1 && sx != 0.0) {
        if (j == 0) {
          out(i, 1) += sx;
          out(i, 0) -= sx;
        } else if (j == w - 1) {
          out(i, w - 1) += sx;
          out(i, w - 2) -= sx;
        } else {
          out(i, j + 1) += 0.5 * sx;
          out(i, j - 1) -= 0.5 * sx;
        }
      }
      const double sy = gy_bar(i, j);
      if (h > 1 && sy != 0.0) {
        if (i == 0) {
          out(1, j) += sy;
          out(0, j) -= sy;
        } else if (i == h - 1) {
          out(h - 1, j) += sy;
          out(h - 2, j) -= sy;
        } else {
          out(i + 1, j) += 0.5 * sy;
          out(i - 1, j) -= 0.5 * sy;
        }
      }
    }
  }
  return out;
}

Planed resample_bilinear(const Planed& img, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw Error("resample_bilinear: target size must be positive");
  const Eigen::Index h = img.rows(), w = img.cols();
  if (rows == h && cols == w) return img;
  Planed out(rows, cols);
  const double sy = static_cast<double>(h) / static_cast<double>(rows);
  const double sx = static_cast<double>(w) / static_cast<double>(cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    // Map the target pixel center into source pixel-center coordinates.
    double fy = (i + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const Eigen::Index y0 = static_cast<Eigen::Index>(fy);
    const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      double fx = (j + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const Eigen::Index x0 = static_cast<Eigen::Index>(fx);
      const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
      const double wx = fx - x0;
      out(i, j) = (1.0 - wy) * ((1.0 - wx) * img(y0, x0) + wx * img(y0, x1)) +
                  wy * ((1.0 - wx) * img(y1, x0) + wx * img(y1, x1));
    }
  }
  return out;
}

namespace {

struct SsimFields {
  Planed ux, uy, pxx, pyy, pxy, a1, a2, b1, b2, s;
};

SsimFields ssim_fields(const Planed& a, const Planed& b, const SsimOptions& opts) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw SizeMismatchError("ssim: size mismatch");
  if (a.rows() < opts.window || a.cols() < opts.window)
    throw Error("ssim: image smaller than the window");
  const auto k = gaussian_kernel(opts.window, opts.sigma);
  SsimFields f;
  f.ux = conv_separable(a, k);
  f.uy = conv_separable(b, k);
  f.pxx = conv_separable((a * a).eval(), k);
  f.pyy = conv_separable((b * b).eval(), k);
  f.pxy = conv_separable((a * b).eval(), k);
  const double c1 = opts.k1 * opts.k1;
  const double c2 = opts.k2 * opts.k2;
  const Planed sxx = f.pxx - f.ux * f.ux;
  const Planed syy = f.pyy - f.uy * f.uy;
  const Planed sxy = f.pxy - f.ux * f.uy;
  f.a1 = 2.0 * f.ux * f.uy + c1;
  f.a2 = 2.0 * sxy + c2;
  f.b1 = f.ux * f.ux + f.uy * f.uy + c1;
  f.b2 = sxx + syy + c2;
  f.s = (f.a1 * f.a2) / (f.b1 * f.b2);
  return f;
}

}  // namespace

double ssim_plane(const Planed& a, const Planed& b, const SsimOptions& opts) {
  return ssim_fields(a, b, opts).s.mean();
}

double ssim(const ColorImaged& a, const ColorImaged& b, const SsimOptions& opts) {
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) acc += ssim_plane(a.channel(c), b.channel(c), opts);
  return acc / 3.0;
}

Planed ssim_backward_plane(const Planed& a, const Planed& b, double upstream,
                           const SsimOptions& opts) {
  const SsimFields f = ssim_fields(a, b, opts);
  const auto k = gaussian_kernel(opts.window, opts.sigma);
  const double scale = upstream / static_cast<double>(a.size());

  // Pixelwise partials of S = A1*A2/(B1*B2) with respect to ux, pxx, pxy
  // (uy, pyy are constants here). sxx = pxx - ux^2, sxy = pxy - ux*uy.
  const Planed inv_b1b2 = 1.0 / (f.b1 * f.b2);
  const Planed d_ux = (2.0 * f.uy * f.a2 - 2.0 * f.uy * f.a1) * inv_b1b2 -
                      f.s * (2.0 * f.ux / f.b1 - 2.0 * f.ux / f.b2);
  const Planed d_pxx = -f.s / f.b2;
  const Planed d_pxy = 2.0 * f.a1 * inv_b1b2;

  // Adjoint of the smoothing convolutions (kernel is symmetric).
  const Planed g_ux = conv_separable((scale * d_ux).eval(), k);
  const Planed g_pxx = conv_separable((scale * d_pxx).eval(), k);
  const Planed g_pxy = conv_separable((scale * d_pxy).eval(), k);
  return g_ux + 2.0 * a * g_pxx + b * g_pxy;
}

}  // namespace splat
