#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace splat {

template <class S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <class S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <class S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <class S> using Mat4 = Eigen::Matrix<S, 4, 4>;
template <class S> using Quat = Eigen::Quaternion<S>;

// Row-major image plane, indexed (row, col).
template <class S> using Plane = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Spherical-harmonics coefficients, one row per color channel, one column
// per basis function (B = (degree+1)^2).
template <class S> using ShCoeffs = Eigen::Matrix<S, 3, Eigen::Dynamic>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec4d = Vec4<double>;
using Mat2d = Mat2<double>;
using Mat3d = Mat3<double>;
using Quatd = Quat<double>;
using Planed = Plane<double>;
using PlaneI = Plane<int>;
using PlaneU8 = Plane<std::uint8_t>;

template <class S> S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

template <class S> S logit(S p) { return std::log(p / (S(1) - p)); }

inline int sh_basis_size(int degree) { return (degree + 1) * (degree + 1); }

/// One anisotropic 3D Gaussian. Scale is stored in log-space and opacity in
/// logit-space so optimizer steps stay unconstrained; the decoded values are
/// strictly positive / in (0,1) by construction.
template <class S> struct GaussianPrimitive {
  Vec3<S> center = Vec3<S>::Zero();
  Quat<S> rotation = Quat<S>::Identity();
  Vec3<S> log_scale = Vec3<S>::Zero();
  S opacity_logit = S(0);
  ShCoeffs<S> sh_coeffs;  // 3 x B

  Vec3<S> scale() const { return log_scale.array().exp().matrix(); }
  S opacity() const { return sigmoid(opacity_logit); }
};

/// Pinhole camera. `rotation`/`translation` map world points into the camera
/// frame as e = rotation * o + translation (z looks down the optical axis).
/// The principal point is assumed at the image center.
template <class S> struct CameraModel {
  Mat3<S> rotation = Mat3<S>::Identity();
  Vec3<S> translation = Vec3<S>::Zero();
  Vec2<S> focal = Vec2<S>(S(1), S(1));
  int width = 1;
  int height = 1;

  Vec3<S> position() const { return -(rotation.transpose() * translation); }

  bool rotation_orthonormal(S tol = S(1e-6)) const {
    return (rotation.transpose() * rotation - Mat3<S>::Identity()).cwiseAbs().maxCoeff() <= tol;
  }
};

/// Gaussian scene. `smoothing_state` holds the per-Gaussian maximum sampling
/// frequency used by the 3D smoothing filter; empty means not yet computed.
template <class S> struct Scene {
  std::vector<GaussianPrimitive<S>> gaussians;
  std::vector<S> smoothing_state;
  int sh_degree = 0;

  std::size_t size() const { return gaussians.size(); }
  bool has_smoothing_state() const { return smoothing_state.size() == gaussians.size() && !gaussians.empty(); }
};

template <class S> struct PointCloud {
  std::vector<Vec3<S>> positions;
  std::vector<Vec3<S>> colors;  // empty, or one RGB in [0,1] per position

  std::size_t size() const { return positions.size(); }
  bool has_colors() const { return colors.size() == positions.size() && !positions.empty(); }
};

/// Planar RGB image, each channel an H x W plane in [0,1] (rendered values
/// may exceed 1 before tone handling; metrics clamp on use).
template <class S> struct ColorImage {
  Plane<S> r, g, b;

  ColorImage() = default;
  ColorImage(Eigen::Index h, Eigen::Index w) { resize(h, w); }

  void resize(Eigen::Index h, Eigen::Index w) {
    r.setZero(h, w);
    g.setZero(h, w);
    b.setZero(h, w);
  }
  Eigen::Index rows() const { return r.rows(); }
  Eigen::Index cols() const { return r.cols(); }
  Plane<S>& channel(int c) { return c == 0 ? r : (c == 1 ? g : b); }
  const Plane<S>& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

using ColorImaged = ColorImage<double>;

/// Per-pixel depth. `normalized` marks values min-max mapped into [0,1].
struct DepthMap {
  Planed values;
  bool normalized = false;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

using DepthMask = PlaneU8;  // 1 = supervised pixel, 0 = masked out

using GaussianPrimitived = GaussianPrimitive<double>;
using CameraModeld = CameraModel<double>;
using Scened = Scene<double>;
using PointCloudd = PointCloud<double>;

}  // namespace splat
