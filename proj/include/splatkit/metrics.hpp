#pragma once

#include <functional>
#include <string>
#include <vector>

#include "splatkit/colmap.hpp"
#include "splatkit/image_ops.hpp"
#include "splatkit/rasterizer.hpp"
#include "splatkit/types.hpp"

namespace splat {

/// 10 log10(1 / MSE) for images in [0,1]. Identical images return +inf;
/// use capped_db for table output.
double psnr(const ColorImaged& a, const ColorImaged& b);

/// +inf (and anything above) capped at 99 dB for reporting.
double capped_db(double value);

struct EvalReport {
  std::vector<std::string> names;
  std::vector<double> psnr_db;    // capped
  std::vector<double> ssim_value;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  bool has_means = false;  // false for an empty view list
  std::size_t view_count = 0;
};

using ImageLoader = std::function<ColorImaged(const std::string& image_name)>;

/// Renders each named held-out view of the model and scores it against the
/// reference image supplied by `loader`. Unknown names raise NotFoundError
/// listing the available ones.
EvalReport evaluate(const Scene<double>& scene, const SfmModel& model,
                    const std::vector<std::string>& view_names, const ImageLoader& loader,
                    const RenderSettings& settings);

void write_eval_csv(const EvalReport& report, const std::string& path);
void write_eval_json(const EvalReport& report, const std::string& path);

}  // namespace splat
