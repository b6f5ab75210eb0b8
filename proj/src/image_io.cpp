#include "splatkit/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <vector>

#include "splatkit/errors.hpp"
#include "splatkit/image_ops.hpp"

namespace splat {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw FormatError("cannot open " + path);
  return f;
}

bool has_png_signature(std::FILE* f) {
  unsigned char sig[8] = {};
  const size_t n = std::fread(sig, 1, 8, f);
  std::rewind(f);
  return n == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

struct PngImage {
  int width = 0, height = 0, bit_depth = 0, channels = 0;
  std::vector<std::uint16_t> pixels;  // interleaved, 8-bit data widened
};

PngImage read_png(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  if (!has_png_signature(f.get())) throw FormatError(path + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": PNG decode failed");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // PNG is big-endian on disk
  png_read_update_info(png, info);

  PngImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.bit_depth = png_get_bit_depth(png, info);
  img.channels = png_get_channels(png, info);

  const size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raw(row_bytes * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int i = 0; i < img.height; ++i) rows[i] = raw.data() + i * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const size_t count = static_cast<size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(count);
  if (img.bit_depth == 16) {
    std::memcpy(img.pixels.data(), raw.data(), count * 2);
  } else {
    for (size_t i = 0; i < count; ++i) img.pixels[i] = raw[i];
  }
  return img;
}

void write_png(const std::string& path, int width, int height, int bit_depth, int color_type,
               const std::uint8_t* data, size_t row_bytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path + ": PNG encode failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  std::vector<png_bytep> rows(height);
  for (int i = 0; i < height; ++i) rows[i] = const_cast<png_bytep>(data) + i * row_bytes;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  longjmp(mgr->jump, 1);
}

ColorImaged read_jpeg(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(path + ": JPEG decode failed");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  const int w = cinfo.output_width, h = cinfo.output_height;
  ColorImaged img(h, w);
  std::vector<JSAMPLE> row(static_cast<size_t>(w) * cinfo.output_components);
  JSAMPROW rows[1] = {row.data()};
  for (int i = 0; i < h; ++i) {
    jpeg_read_scanlines(&cinfo, rows, 1);
    for (int j = 0; j < w; ++j) {
      img.r(i, j) = row[3 * j + 0] / 255.0;
      img.g(i, j) = row[3 * j + 1] / 255.0;
      img.b(i, j) = row[3 * j + 2] / 255.0;
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

bool ends_with_ci(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (size_t i = 0; i < suffix.size(); ++i) {
    if (std::tolower(s[s.size() - suffix.size() + i]) != std::tolower(suffix[i])) return false;
  }
  return true;
}

}  // namespace

ColorImaged load_color_image(const std::string& path) {
  if (ends_with_ci(path, ".jpg") || ends_with_ci(path, ".jpeg")) return read_jpeg(path);
  const PngImage png = read_png(path);
  const double denom = png.bit_depth == 16 ? 65535.0 : 255.0;
  ColorImaged img(png.height, png.width);
  for (int i = 0; i < png.height; ++i) {
    for (int j = 0; j < png.width; ++j) {
      const size_t base = (static_cast<size_t>(i) * png.width + j) * png.channels;
      if (png.channels >= 3) {
        img.r(i, j) = png.pixels[base + 0] / denom;
        img.g(i, j) = png.pixels[base + 1] / denom;
        img.b(i, j) = png.pixels[base + 2] / denom;
      } else {
        const double v = png.pixels[base] / denom;
        img.r(i, j) = img.g(i, j) = img.b(i, j) = v;
      }
    }
  }
  return img;
}

void save_png_rgb8(const std::string& path, const ColorImaged& image) {
  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  std::vector<std::uint8_t> data(static_cast<size_t>(h) * w * 3);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.channel(c)(i, j), 0.0, 1.0);
        data[(static_cast<size_t>(i) * w + j) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  write_png(path, w, h, 8, PNG_COLOR_TYPE_RGB, data.data(), static_cast<size_t>(w) * 3);
}

Planed load_png_gray16(const std::string& path) {
  const PngImage png = read_png(path);
  const double denom = png.bit_depth == 16 ? 65535.0 : 255.0;
  Planed out(png.height, png.width);
  for (int i = 0; i < png.height; ++i) {
    for (int j = 0; j < png.width; ++j) {
      const size_t base = (static_cast<size_t>(i) * png.width + j) * png.channels;
      out(i, j) = png.pixels[base] / denom;  // first channel of gray or rgb
    }
  }
  return out;
}

void save_png_gray16(const std::string& path, const Planed& values01) {
  const int h = static_cast<int>(values01.rows()), w = static_cast<int>(values01.cols());
  std::vector<std::uint16_t> data(static_cast<size_t>(h) * w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double v = std::clamp(values01(i, j), 0.0, 1.0);
      data[static_cast<size_t>(i) * w + j] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  }
  write_png(path, w, h, 16, PNG_COLOR_TYPE_GRAY,
            reinterpret_cast<const std::uint8_t*>(data.data()), static_cast<size_t>(w) * 2);
}

Planed load_pfm_gray(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "Pf" && magic != "PF") throw FormatError(path + ": not a PFM file");
  int w = 0, h = 0;
  double scale = 0.0;
  in >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0 || scale == 0.0) throw FormatError(path + ": malformed PFM header");
  in.get();  // single whitespace after the header
  const int channels = magic == "PF" ? 3 : 1;
  std::vector<float> row(static_cast<size_t>(w) * channels);
  Planed out(h, w);
  // Scanlines are stored bottom-to-top.
  for (int i = h - 1; i >= 0; --i) {
    in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!in) throw FormatError(path + ": truncated PFM data");
    if (scale > 0.0) {
      for (float& v : row) {
        char* b = reinterpret_cast<char*>(&v);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
    }
    for (int j = 0; j < w; ++j) out(i, j) = row[static_cast<size_t>(j) * channels];
  }
  if (std::abs(scale) != 1.0) out *= std::abs(scale);
  return out;
}

void save_pfm_gray(const std::string& path, const Planed& values) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw FormatError("cannot open " + path + " for writing");
  outf << "Pf\n" << values.cols() << " " << values.rows() << "\n-1.0\n";
  std::vector<float> row(values.cols());
  for (Eigen::Index i = values.rows() - 1; i >= 0; --i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) row[j] = static_cast<float>(values(i, j));
    outf.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
  if (!outf) throw FormatError(path + ": PFM write failed");
}

DepthMap normalize_depth(const Planed& values) {
  if (values.size() == 0) throw InvalidDepthError("empty depth map");
  if (!values.isFinite().all()) {
    if (!(values.isFinite().any())) throw InvalidDepthError("depth map contains no finite values");
    throw InvalidDepthError("depth map contains NaN or Inf");
  }
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  DepthMap out;
  out.normalized = true;
  if (hi - lo <= 0.0) {
    out.values = Planed::Zero(values.rows(), values.cols());
  } else {
    out.values = (values - lo) / (hi - lo);
  }
  return out;
}

DepthMap load_depth_map(const std::string& path, int width, int height) {
  Planed raw;
  if (ends_with_ci(path, ".pfm")) {
    raw = load_pfm_gray(path);
  } else {
    raw = load_png_gray16(path);
  }
  if (!raw.isFinite().all()) {
    if (!raw.isFinite().any()) throw InvalidDepthError(path + ": all-NaN depth map");
    // Patch isolated NaNs to the finite minimum before normalization.
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      for (Eigen::Index j = 0; j < raw.cols(); ++j)
        if (std::isfinite(raw(i, j))) lo = std::min(lo, raw(i, j));
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      for (Eigen::Index j = 0; j < raw.cols(); ++j)
        if (!std::isfinite(raw(i, j))) raw(i, j) = lo;
  }
  if (width > 0 && height > 0) raw = resample_bilinear(raw, height, width);
  return normalize_depth(raw);
}

}  // namespace splat
