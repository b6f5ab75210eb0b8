#pragma once

#include <array>

#include "splatkit/errors.hpp"
#include "splatkit/types.hpp"

namespace splat {

// Real SH basis constants (graphics sign convention, bands 0..3).
namespace sh_detail {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                  -1.0925484305920792, 0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                                  0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                  -0.5900435899266435};
}  // namespace sh_detail

inline int sh_degree_from_basis(int basis) {
  switch (basis) {
    case 1: return 0;
    case 4: return 1;
    case 9: return 2;
    case 16: return 3;
    default: throw Error("unsupported SH basis size " + std::to_string(basis));
  }
}

/// Basis values Y_b(dir) for bands 0..degree. dir must be unit length.
template <class S>
void sh_basis(const Vec3<S>& dir, int degree, std::array<S, 16>& out) {
  using namespace sh_detail;
  const S x = dir.x(), y = dir.y(), z = dir.z();
  out.fill(S(0));
  out[0] = S(kC0);
  if (degree < 1) return;
  out[1] = S(-kC1) * y;
  out[2] = S(kC1) * z;
  out[3] = S(-kC1) * x;
  if (degree < 2) return;
  const S xx = x * x, yy = y * y, zz = z * z;
  const S xy = x * y, yz = y * z, xz = x * z;
  out[4] = S(kC2[0]) * xy;
  out[5] = S(kC2[1]) * yz;
  out[6] = S(kC2[2]) * (S(2) * zz - xx - yy);
  out[7] = S(kC2[3]) * xz;
  out[8] = S(kC2[4]) * (xx - yy);
  if (degree < 3) return;
  out[9] = S(kC3[0]) * y * (S(3) * xx - yy);
  out[10] = S(kC3[1]) * xy * z;
  out[11] = S(kC3[2]) * y * (S(4) * zz - xx - yy);
  out[12] = S(kC3[3]) * z * (S(2) * zz - S(3) * xx - S(3) * yy);
  out[13] = S(kC3[4]) * x * (S(4) * zz - xx - yy);
  out[14] = S(kC3[5]) * z * (xx - yy);
  out[15] = S(kC3[6]) * x * (xx - S(3) * yy);
}

/// Basis gradients d Y_b / d dir as polynomials in the components. Radial
/// parts are irrelevant after projection onto the sphere's tangent space.
template <class S>
void sh_basis_grad(const Vec3<S>& dir, int degree, std::array<Vec3<S>, 16>& grad) {
  using namespace sh_detail;
  const S x = dir.x(), y = dir.y(), z = dir.z();
  for (auto& g : grad) g.setZero();
  if (degree < 1) return;
  grad[1] = Vec3<S>(S(0), S(-kC1), S(0));
  grad[2] = Vec3<S>(S(0), S(0), S(kC1));
  grad[3] = Vec3<S>(S(-kC1), S(0), S(0));
  if (degree < 2) return;
  grad[4] = S(kC2[0]) * Vec3<S>(y, x, S(0));
  grad[5] = S(kC2[1]) * Vec3<S>(S(0), z, y);
  grad[6] = S(kC2[2]) * Vec3<S>(S(-2) * x, S(-2) * y, S(4) * z);
  grad[7] = S(kC2[3]) * Vec3<S>(z, S(0), x);
  grad[8] = S(kC2[4]) * Vec3<S>(S(2) * x, S(-2) * y, S(0));
  if (degree < 3) return;
  const S xx = x * x, yy = y * y, zz = z * z;
  grad[9] = S(kC3[0]) * Vec3<S>(S(6) * x * y, S(3) * xx - S(3) * yy, S(0));
  grad[10] = S(kC3[1]) * Vec3<S>(y * z, x * z, x * y);
  grad[11] = S(kC3[2]) * Vec3<S>(S(-2) * x * y, S(4) * zz - xx - S(3) * yy, S(8) * y * z);
  grad[12] = S(kC3[3]) * Vec3<S>(S(-6) * x * z, S(-6) * y * z, S(6) * zz - S(3) * xx - S(3) * yy);
  grad[13] = S(kC3[4]) * Vec3<S>(S(4) * zz - S(3) * xx - yy, S(-2) * x * y, S(8) * x * z);
  grad[14] = S(kC3[5]) * Vec3<S>(S(2) * x * z, S(-2) * y * z, xx - yy);
  grad[15] = S(kC3[6]) * Vec3<S>(S(3) * xx - S(3) * yy, S(-6) * x * y, S(0));
}

/// Decoded RGB: clamp(0.5 + sum_b Y_b(dir) coeff_b, 0). The +0.5 offset and
/// zero clamp follow the common splatting PLY convention so exported scenes
/// stay interoperable.
template <class S>
Vec3<S> eval_sh(const ShCoeffs<S>& coeffs, const Vec3<S>& view_dir) {
  const int basis = static_cast<int>(coeffs.cols());
  const int degree = sh_degree_from_basis(basis);
  std::array<S, 16> y{};
  sh_basis<S>(view_dir, degree, y);
  Vec3<S> rgb = Vec3<S>::Constant(S(0.5));
  for (int b = 0; b < basis; ++b) rgb += coeffs.col(b) * y[b];
  return rgb.cwiseMax(S(0));
}

/// eval_sh restricted to the first (degree+1)^2 columns of a larger
/// coefficient matrix (used while the active degree is still growing).
template <class S>
Vec3<S> eval_sh_degree(const ShCoeffs<S>& coeffs, const Vec3<S>& view_dir, int degree) {
  const int basis = sh_basis_size(degree);
  if (coeffs.cols() < basis) throw Error("SH coefficient matrix smaller than requested degree");
  std::array<S, 16> y{};
  sh_basis<S>(view_dir, degree, y);
  Vec3<S> rgb = Vec3<S>::Constant(S(0.5));
  for (int b = 0; b < basis; ++b) rgb += coeffs.col(b) * y[b];
  return rgb.cwiseMax(S(0));
}

}  // namespace splat
