#pragma once

#include <string>

#include "splatkit/types.hpp"

namespace splat {

/// Gaussian scene as binary-little-endian PLY with the splatting-ecosystem
/// vertex layout: x,y,z, f_dc_0..2, f_rest_0..44, opacity, scale_0..2,
/// rot_0..3 (quaternion w,x,y,z; scale in log-space, opacity in logit-space).
/// SH coefficients beyond the scene's degree are written as zeros.
void write_ply(const Scene<double>& scene, const std::string& path);

/// Inverse of write_ply. Properties are located by name, so files carrying
/// extra fields (normals etc.) load fine; a missing required property raises
/// SchemaError naming it.
Scene<double> read_ply(const std::string& path);

/// Plain point clouds (x,y,z + uchar red,green,blue), for densify in/out.
void write_pointcloud_ply(const PointCloud<double>& cloud, const std::string& path);
PointCloud<double> read_pointcloud_ply(const std::string& path);

}  // namespace splat
