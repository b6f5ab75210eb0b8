#pragma once

#include <string>

#include "splatkit/types.hpp"

namespace splat {

/// 8-bit RGB PNG or JPEG, decoded to linear [0,1] floats by /255.
ColorImaged load_color_image(const std::string& path);

/// 8-bit RGB PNG; values are clamped to [0,1] and quantized by round(v*255).
void save_png_rgb8(const std::string& path, const ColorImaged& image);

/// 16-bit grayscale PNG (e.g. quantized depth), values mapped to [0,1] by /65535.
Planed load_png_gray16(const std::string& path);
void save_png_gray16(const std::string& path, const Planed& values01);

/// Grayscale PFM ("Pf"), float32, bottom-to-top scanlines, little-endian.
Planed load_pfm_gray(const std::string& path);
void save_pfm_gray(const std::string& path, const Planed& values);

/// Depth-map ingestion: reads a 16-bit grayscale PNG or a PFM, resamples
/// bilinearly to width x height (pass 0,0 to keep the native size) and
/// min-max normalizes to [0,1]. A constant map normalizes to all zeros.
DepthMap load_depth_map(const std::string& path, int width = 0, int height = 0);

/// Min-max normalization shared by the loader and the training loop;
/// idempotent, and safe on constant maps (result is all zeros).
DepthMap normalize_depth(const Planed& values);

}  // namespace splat
