#include "splatkit/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "splatkit/covariance.hpp"
#include "splatkit/errors.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/sh.hpp"

namespace splat {

void SceneGrads::resize(const Scene<double>& scene) {
  const std::size_t n = scene.gaussians.size();
  d_center.assign(n, Vec3d::Zero());
  d_rotation.assign(n, Vec4d::Zero());
  d_log_scale.assign(n, Vec3d::Zero());
  d_opacity_logit.assign(n, 0.0);
  d_sh.resize(n);
  visible.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    d_sh[i].setZero(3, scene.gaussians[i].sh_coeffs.cols());
}

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

int active_basis(const GaussianPrimitived& g, const RenderSettings& settings) {
  const int cols = static_cast<int>(g.sh_coeffs.cols());
  if (settings.sh_degree < 0) return cols;
  return std::min(cols, sh_basis_size(settings.sh_degree));
}

/// Everything the backward pass needs about one Gaussian's forward chain.
struct GaussianFrame {
  bool projected = false;
  int splat_index = -1;  // into the splat vector
  Vec3d e = Vec3d::Zero();
  Mat23 M = Mat23::Zero();  // J * R_cam
  Mat3d cov3 = Mat3d::Zero();
  Mat3d cov3s = Mat3d::Zero();
  double ratio = 1.0;  // smoothing amplitude sqrt(det cov3 / det cov3s)
  double alpha = 0.0;  // sigmoid(opacity_logit)
  Mat3d rot = Mat3d::Identity();  // from the normalized quaternion
  Quatd unit_quat = Quatd::Identity();
  double quat_norm = 1.0;
  Vec3d scale = Vec3d::Ones();
  Vec3d dir = Vec3d::UnitZ();
  double dir_norm = 1.0;
  Vec3d pre_color = Vec3d::Zero();  // before the zero clamp
  int basis_n = 1;
  std::array<double, 16> basis{};
};

Mat23 perspective_jacobian(const Vec3d& e, const Vec2d& focal) {
  const double z = e.z(), inv_z = 1.0 / z;
  Mat23 j;
  j << focal.x() * inv_z, 0.0, -focal.x() * e.x() * inv_z * inv_z,
       0.0, focal.y() * inv_z, -focal.y() * e.y() * inv_z * inv_z;
  return j;
}

bool ellipse_in_viewport(const Vec2d& mean2d, const Mat2d& cov2d, const CameraModeld& cam,
                         double margin) {
  const double rx = 3.0 * std::sqrt(std::max(0.0, cov2d(0, 0)));
  const double ry = 3.0 * std::sqrt(std::max(0.0, cov2d(1, 1)));
  const double w = cam.width, h = cam.height;
  return mean2d.x() + rx >= -margin * w && mean2d.x() - rx <= (1.0 + margin) * w &&
         mean2d.y() + ry >= -margin * h && mean2d.y() - ry <= (1.0 + margin) * h;
}

/// Frame + splat for one Gaussian; shared by forward and backward.
bool project_frame(const GaussianPrimitived& g, double zeta, const CameraModeld& cam,
                   const RenderSettings& settings, int index, GaussianFrame& frame,
                   Splat2D& splat) {
  frame.e = cam.rotation * g.center + cam.translation;
  const double z = frame.e.z();
  if (z <= settings.near_clip) return false;

  frame.quat_norm = g.rotation.norm();
  if (!(frame.quat_norm > 0.0)) throw InvalidRotationError("gaussian has a zero quaternion");
  frame.unit_quat = g.rotation;
  frame.unit_quat.coeffs() /= frame.quat_norm;
  frame.rot = frame.unit_quat.toRotationMatrix();
  frame.scale = g.scale();
  const Mat3d rs = frame.rot * frame.scale.asDiagonal();
  frame.cov3 = rs * rs.transpose();

  frame.alpha = g.opacity();
  double opacity_splat = frame.alpha;
  if (settings.apply_smoothing) {
    frame.cov3s = frame.cov3;
    frame.cov3s.diagonal().array() += settings.smoothing_s / (zeta * zeta);
    frame.ratio = std::sqrt(frame.cov3.determinant() / frame.cov3s.determinant());
    opacity_splat *= frame.ratio;
  } else {
    frame.cov3s = frame.cov3;
    frame.ratio = 1.0;
  }

  const Mat23 j = perspective_jacobian(frame.e, cam.focal);
  frame.M = j * cam.rotation;
  Mat2d cov2d = frame.M * frame.cov3s * frame.M.transpose();
  cov2d(0, 0) += settings.dilation;
  cov2d(1, 1) += settings.dilation;
  cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));

  const Vec2d mean2d(frame.e.x() / z * cam.focal.x() + cam.width / 2.0,
                     frame.e.y() / z * cam.focal.y() + cam.height / 2.0);
  if (!ellipse_in_viewport(mean2d, cov2d, cam, settings.viewport_margin)) return false;

  // View-dependent color from the camera position toward the center.
  Vec3d v = g.center - cam.position();
  frame.dir_norm = v.norm();
  frame.dir = frame.dir_norm > 1e-12 ? Vec3d(v / frame.dir_norm) : Vec3d::UnitZ();
  frame.basis_n = active_basis(g, settings);
  sh_basis(frame.dir, sh_degree_from_basis(frame.basis_n), frame.basis);
  frame.pre_color = Vec3d::Constant(0.5);
  for (int b = 0; b < frame.basis_n; ++b) frame.pre_color += g.sh_coeffs.col(b) * frame.basis[b];

  splat.mean2d = mean2d;
  splat.cov2d = cov2d;
  splat.depth = z;
  splat.color = frame.pre_color.cwiseMax(0.0);
  splat.opacity = opacity_splat;
  splat.source_index = index;
  frame.projected = true;
  return true;
}

double zeta_for(const Scene<double>& scene, const RenderSettings& settings, std::size_t i) {
  if (!settings.apply_smoothing) return 1.0;
  if (scene.smoothing_state.size() != scene.gaussians.size())
    throw Error("render: smoothing enabled but smoothing_state not computed");
  return scene.smoothing_state[i];
}

struct Prepared {
  std::vector<Splat2D> splats;        // culled out, gaussian order
  std::vector<GaussianFrame> frames;  // one per gaussian
  std::vector<int> order;             // splat indices sorted front to back
  std::vector<Mat2d> inv2d;           // per splat
};

Prepared prepare(const Scene<double>& scene, const CameraModeld& cam,
                 const RenderSettings& settings, bool keep_frames) {
  Prepared prep;
  prep.frames.resize(keep_frames ? scene.gaussians.size() : 0);
  GaussianFrame scratch;
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    GaussianFrame& frame = keep_frames ? prep.frames[i] : scratch;
    frame = GaussianFrame{};
    Splat2D splat;
    if (!project_frame(scene.gaussians[i], zeta_for(scene, settings, i), cam, settings,
                       static_cast<int>(i), frame, splat))
      continue;
    frame.splat_index = static_cast<int>(prep.splats.size());
    prep.splats.push_back(splat);
  }
  prep.order.resize(prep.splats.size());
  std::iota(prep.order.begin(), prep.order.end(), 0);
  std::sort(prep.order.begin(), prep.order.end(), [&](int a, int b) {
    const auto& sa = prep.splats[a];
    const auto& sb = prep.splats[b];
    return sa.depth != sb.depth ? sa.depth < sb.depth : sa.source_index < sb.source_index;
  });
  prep.inv2d.resize(prep.splats.size());
  for (std::size_t s = 0; s < prep.splats.size(); ++s) {
    const Mat2d& c = prep.splats[s].cov2d;
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    if (det <= 0.0) throw DegenerateCovarianceError("2D covariance not positive definite");
    Mat2d inv;
    inv << c(1, 1), -c(0, 1), -c(1, 0), c(0, 0);
    prep.inv2d[s] = inv / det;
  }
  return prep;
}

struct TileGrid {
  int tiles_x = 0, tiles_y = 0, tile = 16;
  std::vector<std::vector<int>> lists;  // splat ids per tile, front-to-back
};

TileGrid build_tiles(const Prepared& prep, const CameraModeld& cam, const RenderSettings& settings) {
  TileGrid grid;
  grid.tile = std::max(1, settings.tile_size);
  grid.tiles_x = (cam.width + grid.tile - 1) / grid.tile;
  grid.tiles_y = (cam.height + grid.tile - 1) / grid.tile;
  grid.lists.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);
  const double cutoff = settings.mahal_cutoff_sq;
  for (int ord : prep.order) {
    const Splat2D& s = prep.splats[ord];
    int tx0 = 0, tx1 = grid.tiles_x - 1, ty0 = 0, ty1 = grid.tiles_y - 1;
    if (cutoff > 0.0) {
      // Tight axis-aligned bound of the truncated footprint, +1px slack.
      const double rx = std::sqrt(cutoff * std::max(0.0, s.cov2d(0, 0))) + 1.0;
      const double ry = std::sqrt(cutoff * std::max(0.0, s.cov2d(1, 1))) + 1.0;
      tx0 = std::clamp(static_cast<int>(std::floor((s.mean2d.x() - rx) / grid.tile)), 0,
                       grid.tiles_x - 1);
      tx1 = std::clamp(static_cast<int>(std::floor((s.mean2d.x() + rx) / grid.tile)), 0,
                       grid.tiles_x - 1);
      ty0 = std::clamp(static_cast<int>(std::floor((s.mean2d.y() - ry) / grid.tile)), 0,
                       grid.tiles_y - 1);
      ty1 = std::clamp(static_cast<int>(std::floor((s.mean2d.y() + ry) / grid.tile)), 0,
                       grid.tiles_y - 1);
      if (s.mean2d.x() + rx < 0.0 || s.mean2d.x() - rx > cam.width ||
          s.mean2d.y() + ry < 0.0 || s.mean2d.y() - ry > cam.height)
        continue;
    }
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        grid.lists[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(ord);
  }
  return grid;
}

RenderOutput make_output(const CameraModeld& cam) {
  RenderOutput out;
  out.color.resize(cam.height, cam.width);
  out.depth = Planed::Zero(cam.height, cam.width);
  out.alpha = Planed::Zero(cam.height, cam.width);
  out.contrib_count = PlaneI::Zero(cam.height, cam.width);
  return out;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const Vec3d& center, const Mat3d& cov3d, double opacity,
                                        const Vec3d& rgb, const CameraModeld& cam,
                                        const RenderSettings& settings, int source_index) {
  const Vec3d e = cam.rotation * center + cam.translation;
  if (e.z() <= settings.near_clip) return std::nullopt;
  const Mat23 j = perspective_jacobian(e, cam.focal);
  const Mat23 m = j * cam.rotation;
  Mat2d cov2d = m * cov3d * m.transpose();
  cov2d(0, 0) += settings.dilation;
  cov2d(1, 1) += settings.dilation;
  cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
  const Vec2d mean2d(e.x() / e.z() * cam.focal.x() + cam.width / 2.0,
                     e.y() / e.z() * cam.focal.y() + cam.height / 2.0);
  if (!ellipse_in_viewport(mean2d, cov2d, cam, settings.viewport_margin)) return std::nullopt;
  Splat2D splat;
  splat.mean2d = mean2d;
  splat.cov2d = cov2d;
  splat.depth = e.z();
  splat.color = rgb;
  splat.opacity = opacity;
  splat.source_index = source_index;
  return splat;
}

std::vector<Splat2D> build_splats(const Scene<double>& scene, const CameraModeld& cam,
                                  const RenderSettings& settings) {
  return prepare(scene, cam, settings, false).splats;
}

RenderOutput render(const Scene<double>& scene, const CameraModeld& cam,
                    const RenderSettings& settings) {
  const Prepared prep = prepare(scene, cam, settings, false);
  const TileGrid grid = build_tiles(prep, cam, settings);
  RenderOutput out = make_output(cam);
  const double cutoff = settings.mahal_cutoff_sq;

  parallel_for(static_cast<int>(grid.lists.size()), settings.threads, [&](int t) {
    const int ty = t / grid.tiles_x, tx = t % grid.tiles_x;
    const auto& list = grid.lists[t];
    const int y0 = ty * grid.tile, y1 = std::min(cam.height, y0 + grid.tile);
    const int x0 = tx * grid.tile, x1 = std::min(cam.width, x0 + grid.tile);
    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        const Vec2d pix(px + 0.5, py + 0.5);
        double transmittance = 1.0;
        Vec3d color = Vec3d::Zero();
        double depth = 0.0;
        int contrib = 0;
        for (int sid : list) {
          const Splat2D& s = prep.splats[sid];
          const Vec2d d = pix - s.mean2d;
          const double mahal = d.dot(prep.inv2d[sid] * d);
          if (cutoff > 0.0 && mahal > cutoff) continue;
          const double sigma = std::min(settings.sigma_clamp, s.opacity * std::exp(-0.5 * mahal));
          if (sigma <= 0.0) continue;
          color += s.color * (sigma * transmittance);
          depth += s.depth * (sigma * transmittance);
          ++contrib;
          transmittance *= 1.0 - sigma;
          if (settings.transmittance_min > 0.0 && transmittance < settings.transmittance_min) break;
        }
        color += settings.background * transmittance;
        out.color.r(py, px) = color.x();
        out.color.g(py, px) = color.y();
        out.color.b(py, px) = color.z();
        out.depth(py, px) = depth;
        out.alpha(py, px) = 1.0 - transmittance;
        out.contrib_count(py, px) = contrib;
      }
    }
  });
  return out;
}

RenderOutput render_reference(const Scene<double>& scene, const CameraModeld& cam,
                              const RenderSettings& settings) {
  const Prepared prep = prepare(scene, cam, settings, false);
  RenderOutput out = make_output(cam);
  const double cutoff = settings.mahal_cutoff_sq;
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      const Vec2d pix(px + 0.5, py + 0.5);
      double transmittance = 1.0;
      Vec3d color = Vec3d::Zero();
      double depth = 0.0;
      int contrib = 0;
      for (int sid : prep.order) {
        const Splat2D& s = prep.splats[sid];
        const Vec2d d = pix - s.mean2d;
        const double mahal = d.dot(prep.inv2d[sid] * d);
        if (cutoff > 0.0 && mahal > cutoff) continue;
        const double sigma = std::min(settings.sigma_clamp, s.opacity * std::exp(-0.5 * mahal));
        if (sigma <= 0.0) continue;
        color += s.color * (sigma * transmittance);
        depth += s.depth * (sigma * transmittance);
        ++contrib;
        transmittance *= 1.0 - sigma;
      }
      color += settings.background * transmittance;
      out.color.r(py, px) = color.x();
      out.color.g(py, px) = color.y();
      out.color.b(py, px) = color.z();
      out.depth(py, px) = depth;
      out.alpha(py, px) = 1.0 - transmittance;
      out.contrib_count(py, px) = contrib;
    }
  }
  return out;
}

namespace {

/// Pixel-level gradient sums for one splat.
struct SplatGradAccum {
  Vec2d mean2d = Vec2d::Zero();
  Mat2d inv2d = Mat2d::Zero();
  Vec3d color = Vec3d::Zero();
  double opacity = 0.0;
  double depth = 0.0;

  void add(const SplatGradAccum& o) {
    mean2d += o.mean2d;
    inv2d += o.inv2d;
    color += o.color;
    opacity += o.opacity;
    depth += o.depth;
  }
};

struct PixelContribution {
  int list_pos;
  double sigma;
  double gaussian;  // exp(-mahal/2)
  double transmittance;  // before this splat
  Vec2d delta;
  bool clamped;
};

// d(R)/d(quaternion component) for a normalized quaternion (w, x, y, z).
void quat_rotation_grads(const Quatd& q, Mat3d dr[4]) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  dr[0] << 0, -z, y, z, 0, -x, -y, x, 0;            // d/dw
  dr[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;    // d/dx
  dr[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;    // d/dy
  dr[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;    // d/dz
  for (int i = 0; i < 4; ++i) dr[i] *= 2.0;
}

}  // namespace

SceneGrads render_backward(const Scene<double>& scene, const CameraModeld& cam,
                           const RenderSettings& settings, const ColorImaged& grad_color,
                           const Planed& grad_depth) {
  if (grad_color.rows() != cam.height || grad_color.cols() != cam.width ||
      grad_depth.rows() != cam.height || grad_depth.cols() != cam.width)
    throw SizeMismatchError("render_backward: gradient image size mismatch");

  const Prepared prep = prepare(scene, cam, settings, true);
  const TileGrid grid = build_tiles(prep, cam, settings);
  const double cutoff = settings.mahal_cutoff_sq;

  // Per-tile pixel-level gradients; merged in tile order after the parallel
  // section so results do not depend on the thread count.
  std::vector<std::vector<SplatGradAccum>> tile_grads(grid.lists.size());

  parallel_for(static_cast<int>(grid.lists.size()), settings.threads, [&](int t) {
    const auto& list = grid.lists[t];
    if (list.empty()) return;
    auto& local = tile_grads[t];
    local.assign(list.size(), SplatGradAccum{});
    const int ty = t / grid.tiles_x, tx = t % grid.tiles_x;
    const int y0 = ty * grid.tile, y1 = std::min(cam.height, y0 + grid.tile);
    const int x0 = tx * grid.tile, x1 = std::min(cam.width, x0 + grid.tile);
    std::vector<PixelContribution> stack;
    stack.reserve(list.size());

    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        const Vec3d gc(grad_color.r(py, px), grad_color.g(py, px), grad_color.b(py, px));
        const double gd = grad_depth(py, px);
        if (gc.isZero(0.0) && gd == 0.0) continue;

        // Recompute the forward walk for this pixel (checkpointing).
        const Vec2d pix(px + 0.5, py + 0.5);
        stack.clear();
        double transmittance = 1.0;
        for (std::size_t pos = 0; pos < list.size(); ++pos) {
          const Splat2D& s = prep.splats[list[pos]];
          const Vec2d d = pix - s.mean2d;
          const double mahal = d.dot(prep.inv2d[list[pos]] * d);
          if (cutoff > 0.0 && mahal > cutoff) continue;
          const double g = std::exp(-0.5 * mahal);
          const double raw = s.opacity * g;
          const double sigma = std::min(settings.sigma_clamp, raw);
          if (sigma <= 0.0) continue;
          stack.push_back({static_cast<int>(pos), sigma, g, transmittance, d,
                           raw >= settings.sigma_clamp});
          transmittance *= 1.0 - sigma;
          if (settings.transmittance_min > 0.0 && transmittance < settings.transmittance_min) break;
        }

        // Reverse sweep with suffix sums; S starts at the background term.
        Vec3d suffix_color = settings.background * transmittance;
        double suffix_depth = 0.0;
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
          const PixelContribution& c = *it;
          const Splat2D& s = prep.splats[list[c.list_pos]];
          const double w = c.sigma * c.transmittance;

          SplatGradAccum& acc = local[c.list_pos];
          acc.color += gc * w;
          acc.depth += gd * w;

          const double one_minus = 1.0 - c.sigma;
          double d_sigma = gc.dot(s.color * c.transmittance - suffix_color / one_minus);
          d_sigma += gd * (s.depth * c.transmittance - suffix_depth / one_minus);

          suffix_color += s.color * w;
          suffix_depth += s.depth * w;

          if (c.clamped) continue;  // sigma pinned at the clamp: zero local grad
          acc.opacity += d_sigma * c.gaussian;
          const double d_g = d_sigma * s.opacity;
          const double d_mahal = -0.5 * c.gaussian * d_g;
          const Vec2d a_delta = prep.inv2d[list[c.list_pos]] * c.delta;
          acc.mean2d += -2.0 * d_mahal * a_delta;
          acc.inv2d += d_mahal * (c.delta * c.delta.transpose());
        }
      }
    }
  });

  // Merge tiles in index order, then run the per-Gaussian geometry chain.
  std::vector<SplatGradAccum> per_splat(prep.splats.size());
  for (std::size_t t = 0; t < grid.lists.size(); ++t) {
    const auto& list = grid.lists[t];
    const auto& local = tile_grads[t];
    for (std::size_t p = 0; p < local.size(); ++p) per_splat[list[p]].add(local[p]);
  }

  SceneGrads grads;
  grads.resize(scene);

  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    const GaussianFrame& frame = prep.frames[i];
    if (!frame.projected) continue;
    grads.visible[i] = 1;
    const SplatGradAccum& acc = per_splat[frame.splat_index];
    const GaussianPrimitived& g = scene.gaussians[i];

    // inv2d -> cov2d (A = C^-1 => dL/dC = -A dL/dA A).
    const Mat2d& inv2d = prep.inv2d[frame.splat_index];
    const Mat2d g_cov2d = -inv2d * acc.inv2d * inv2d;

    // cov2d = M cov3s M^T (+ dilation I): both factors.
    const Mat23& M = frame.M;
    const Mat23 g_M = 2.0 * g_cov2d * M * frame.cov3s;
    Mat3d g_cov3s = M.transpose() * g_cov2d * M;

    // M = J * R_cam: gradient into J, then into e through the Jacobian
    // entries. R_cam is a constant.
    const Mat23 g_J = g_M * cam.rotation.transpose();
    const double x = frame.e.x(), y = frame.e.y(), z = frame.e.z();
    const double fx = cam.focal.x(), fy = cam.focal.y();
    const double inv_z = 1.0 / z, inv_z2 = inv_z * inv_z, inv_z3 = inv_z2 * inv_z;
    Vec3d g_e = Vec3d::Zero();
    g_e.x() += g_J(0, 2) * (-fx * inv_z2);
    g_e.y() += g_J(1, 2) * (-fy * inv_z2);
    g_e.z() += g_J(0, 0) * (-fx * inv_z2) + g_J(1, 1) * (-fy * inv_z2) +
               g_J(0, 2) * (2.0 * fx * x * inv_z3) + g_J(1, 2) * (2.0 * fy * y * inv_z3);

    // Screen mean and blended depth.
    g_e.x() += acc.mean2d.x() * fx * inv_z;
    g_e.y() += acc.mean2d.y() * fy * inv_z;
    g_e.z() += -acc.mean2d.x() * fx * x * inv_z2 - acc.mean2d.y() * fy * y * inv_z2;
    g_e.z() += acc.depth;

    Vec3d g_center = cam.rotation.transpose() * g_e;

    // Opacity: splat opacity = sigmoid(logit) * ratio.
    const double g_alpha = acc.opacity * frame.ratio;
    grads.d_opacity_logit[i] = g_alpha * frame.alpha * (1.0 - frame.alpha);

    Mat3d g_cov3 = g_cov3s;  // cov3s = cov3 + const * I
    if (settings.apply_smoothing) {
      const double g_ratio = acc.opacity * frame.alpha;
      g_cov3 += (0.5 * g_ratio * frame.ratio) *
                (frame.cov3.inverse() - frame.cov3s.inverse());
    }

    // cov3 = N N^T with N = R S.
    const Mat3d n = frame.rot * frame.scale.asDiagonal();
    const Mat3d g_n = 2.0 * g_cov3 * n;
    Mat3d g_rot = Mat3d::Zero();
    for (int col = 0; col < 3; ++col) {
      const double g_s = g_n.col(col).dot(frame.rot.col(col));
      grads.d_log_scale[i][col] = g_s * frame.scale[col];
      g_rot.col(col) = g_n.col(col) * frame.scale[col];
    }

    // Rotation matrix -> raw quaternion (through the normalization).
    Mat3d dr[4];
    quat_rotation_grads(frame.unit_quat, dr);
    Vec4d g_unit;  // (w, x, y, z)
    for (int k = 0; k < 4; ++k) g_unit[k] = (g_rot.array() * dr[k].array()).sum();
    // Reorder to Eigen coeffs (x, y, z, w) and project out the radial part.
    Vec4d g_unit_coeffs(g_unit[1], g_unit[2], g_unit[3], g_unit[0]);
    const Vec4d uq = frame.unit_quat.coeffs();
    grads.d_rotation[i] = (g_unit_coeffs - uq * uq.dot(g_unit_coeffs)) / frame.quat_norm;

    // Color: clamp mask, SH coefficients, and the view-direction path.
    Vec3d g_dir = Vec3d::Zero();
    std::array<Vec3d, 16> basis_grad{};
    bool need_dir = false;
    for (int ch = 0; ch < 3; ++ch) {
      if (frame.pre_color[ch] <= 0.0) continue;  // clamped channel
      const double gch = acc.color[ch];
      if (gch == 0.0) continue;
      for (int b = 0; b < frame.basis_n; ++b) grads.d_sh[i](ch, b) += gch * frame.basis[b];
      need_dir = true;
    }
    if (need_dir && frame.basis_n > 1) {
      sh_basis_grad(frame.dir, sh_degree_from_basis(frame.basis_n), basis_grad);
      for (int ch = 0; ch < 3; ++ch) {
        if (frame.pre_color[ch] <= 0.0) continue;
        const double gch = acc.color[ch];
        for (int b = 1; b < frame.basis_n; ++b) g_dir += gch * g.sh_coeffs(ch, b) * basis_grad[b];
      }
      // dir = v / |v|: project onto the tangent space.
      g_center += (g_dir - frame.dir * frame.dir.dot(g_dir)) / frame.dir_norm;
    }

    grads.d_center[i] = g_center;
  }
  return grads;
}

}  // namespace splat
