#pragma once

#include <optional>
#include <vector>

#include "splatkit/camera.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// Rasterization parameters. Defaults are the production values; tests that
/// compare against finite differences disable the footprint truncation and
/// the early-termination threshold to keep the loss smooth.
struct RenderSettings {
  Vec3d background = Vec3d::Zero();
  int tile_size = 16;
  double near_clip = 1e-4;
  double viewport_margin = 0.15;    // cull viewport extension, fraction of size
  double dilation = 0.3;            // px^2 added to the 2D covariance diagonal
  double sigma_clamp = 0.999;
  double transmittance_min = 1e-4;  // early stop; 0 disables
  double mahal_cutoff_sq = 9.0;     // footprint truncation (3 sigma); <=0 disables
  bool apply_smoothing = true;
  double smoothing_s = 0.2;
  int sh_degree = -1;  // -1: use the full coefficient matrix
  int threads = 1;
};

/// A projected Gaussian ready for compositing. The footprint is truncated at
/// mahal_cutoff_sq in both the tiled and the reference compositor.
struct Splat2D {
  Vec2d mean2d = Vec2d::Zero();
  Mat2d cov2d = Mat2d::Identity();
  double depth = 0.0;  // camera-space z of the center
  Vec3d color = Vec3d::Zero();
  double opacity = 0.0;  // after the smoothing amplitude factor
  int source_index = -1;
};

struct RenderOutput {
  ColorImaged color;
  Planed depth;
  Planed alpha;
  PlaneI contrib_count;
};

/// Per-Gaussian parameter gradients; layouts mirror GaussianPrimitive.
/// d_rotation is in Eigen quaternion coefficient order (x, y, z, w) and is
/// taken with respect to the raw (unnormalized) quaternion.
struct SceneGrads {
  std::vector<Vec3d> d_center;
  std::vector<Vec4d> d_rotation;
  std::vector<Vec3d> d_log_scale;
  std::vector<double> d_opacity_logit;
  std::vector<ShCoeffs<double>> d_sh;
  std::vector<std::uint8_t> visible;  // gaussian produced a splat this render

  void resize(const Scene<double>& scene);
};

/// Projects one covariance-level Gaussian: camera transform, perspective
/// Jacobian, 2D covariance J W Sigma (J W)^T plus dilation. Returns nullopt
/// when culled (behind the near plane, or the 3-sigma screen ellipse misses
/// the margin-extended viewport).
std::optional<Splat2D> project_gaussian(const Vec3d& center, const Mat3d& cov3d, double opacity,
                                        const Vec3d& rgb, const CameraModeld& cam,
                                        const RenderSettings& settings, int source_index = -1);

/// Builds the splat list for a scene (smoothing filter, SH color decode,
/// projection), in Gaussian order.
std::vector<Splat2D> build_splats(const Scene<double>& scene, const CameraModeld& cam,
                                  const RenderSettings& settings);

/// Tile-based forward render: front-to-back alpha compositing of color and
/// depth, 16x16 tiles, deterministic across thread counts.
RenderOutput render(const Scene<double>& scene, const CameraModeld& cam,
                    const RenderSettings& settings);

/// Reference compositor: every pixel against every splat in global depth
/// order, no tiles, no early termination. Test oracle for the tiled path.
RenderOutput render_reference(const Scene<double>& scene, const CameraModeld& cam,
                              const RenderSettings& settings);

/// Exact reverse-mode gradients of the composited color and depth with
/// respect to all optimized parameters, including the projection Jacobian,
/// the smoothing filter terms and the SH view-direction dependence. The
/// forward state is recomputed (checkpointing) rather than stored.
SceneGrads render_backward(const Scene<double>& scene, const CameraModeld& cam,
                           const RenderSettings& settings, const ColorImaged& grad_color,
                           const Planed& grad_depth);

}  // namespace splat
