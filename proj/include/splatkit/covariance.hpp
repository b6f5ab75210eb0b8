#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "splatkit/errors.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// Rotation matrix from a (not necessarily normalized) quaternion.
/// Throws InvalidRotationError on a zero quaternion.
template <class S> Mat3<S> rotation_from_quaternion(const Quat<S>& q) {
  const S n2 = q.coeffs().squaredNorm();
  if (!(n2 > S(0))) throw InvalidRotationError("zero quaternion has no rotation");
  Quat<S> unit = q;
  unit.coeffs() /= std::sqrt(n2);
  return unit.toRotationMatrix();
}

/// Sigma = R * diag(scale^2) * R^T. Symmetric PSD for any valid input.
template <class S> Mat3<S> build_covariance(const Quat<S>& rotation, const Vec3<S>& scale) {
  const Mat3<S> r = rotation_from_quaternion(rotation);
  const Mat3<S> rs = r * scale.asDiagonal();
  Mat3<S> cov = rs * rs.transpose();
  // Exact symmetry despite rounding; callers rely on it.
  cov = S(0.5) * (cov + cov.transpose()).eval();
  return cov;
}

template <class S> Mat3<S> covariance_of(const GaussianPrimitive<S>& g) {
  return build_covariance<S>(g.rotation, g.scale());
}

/// Unnormalized Gaussian density exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)).
/// Ill-conditioned covariances are regularized with eps = 1e-9 * trace/3 on
/// the diagonal; a covariance that stays singular afterwards throws.
template <class S>
S gaussian_value(const Vec3<S>& x, const Vec3<S>& center, const Mat3<S>& cov) {
  const Vec3<S> d = x - center;
  Eigen::LDLT<Mat3<S>> solver(cov);
  if (solver.info() != Eigen::Success || !solver.isPositive() ||
      solver.vectorD().minCoeff() <= S(0)) {
    Mat3<S> reg = cov;
    const S eps = S(1e-9) * cov.trace() / S(3);
    reg.diagonal().array() += (eps > S(0) ? eps : S(1e-12));
    solver.compute(reg);
    if (solver.info() != Eigen::Success || solver.vectorD().minCoeff() <= S(0))
      throw DegenerateCovarianceError("covariance not invertible after regularization");
  }
  const S quad = d.dot(solver.solve(d));
  return std::exp(S(-0.5) * quad);
}

}  // namespace splat
