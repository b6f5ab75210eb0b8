#pragma once

#include "splatkit/types.hpp"

namespace splat {

inline constexpr double kNearClip = 1e-4;

/// World point expressed in the camera frame plus its screen projection.
/// `screen` is only meaningful when `in_front` is true; callers filter on it
/// rather than catching an exception (points behind the camera are a normal
/// outcome during frequency sweeps and culling).
template <class S> struct CameraPoint {
  Vec3<S> cam;
  Vec2<S> screen;
  bool in_front = false;
};

template <class S>
CameraPoint<S> camera_transform(const Vec3<S>& world, const CameraModel<S>& cam,
                                S near_clip = S(kNearClip)) {
  CameraPoint<S> out;
  out.cam = cam.rotation * world + cam.translation;
  const S z = out.cam.z();
  if (z > near_clip) {
    out.in_front = true;
    out.screen.x() = out.cam.x() / z * cam.focal.x() + S(cam.width) / S(2);
    out.screen.y() = out.cam.y() / z * cam.focal.y() + S(cam.height) / S(2);
  } else {
    out.screen.setZero();
  }
  return out;
}

/// True if a screen position lies inside the viewport extended by
/// `margin` * size on every side.
template <class S>
bool in_extended_viewport(const Vec2<S>& screen, const CameraModel<S>& cam, S margin) {
  const S w = S(cam.width), h = S(cam.height);
  return screen.x() >= -margin * w && screen.x() <= (S(1) + margin) * w &&
         screen.y() >= -margin * h && screen.y() <= (S(1) + margin) * h;
}

/// Camera with focal and image size scaled by `factor` (e.g. half-resolution
/// novel-view rendering). Extrinsics are unchanged.
template <class S>
CameraModel<S> scaled_camera(const CameraModel<S>& cam, double factor) {
  CameraModel<S> out = cam;
  out.width = std::max(1, static_cast<int>(std::lround(cam.width * factor)));
  out.height = std::max(1, static_cast<int>(std::lround(cam.height * factor)));
  out.focal.x() = cam.focal.x() * S(out.width) / S(cam.width);
  out.focal.y() = cam.focal.y() * S(out.height) / S(cam.height);
  return out;
}

}  // namespace splat
