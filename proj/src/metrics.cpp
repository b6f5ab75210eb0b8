#include "splatkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "splatkit/errors.hpp"
#include "splatkit/smoothing.hpp"

namespace splat {

double psnr(const ColorImaged& a, const ColorImaged& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw SizeMismatchError("psnr: image size mismatch");
  double mse = 0.0;
  for (int c = 0; c < 3; ++c) mse += (a.channel(c) - b.channel(c)).square().sum();
  mse /= static_cast<double>(a.rows() * a.cols() * 3);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double capped_db(double value) { return std::min(value, 99.0); }

EvalReport evaluate(const Scene<double>& scene, const SfmModel& model,
                    const std::vector<std::string>& view_names, const ImageLoader& loader,
                    const RenderSettings& settings) {
  EvalReport report;
  report.view_count = view_names.size();
  if (view_names.empty()) return report;

  Scene<double> working = scene;
  std::vector<CameraModeld> cameras;
  for (std::size_t i = 0; i < model.image_records.size(); ++i)
    cameras.push_back(model.camera_for(i));
  if (settings.apply_smoothing && !cameras.empty())
    refresh_smoothing_state(working, cameras, SmoothingConfig{});

  for (const auto& name : view_names) {
    int index = -1;
    for (std::size_t i = 0; i < model.image_records.size(); ++i)
      if (model.image_records[i].name == name) index = static_cast<int>(i);
    if (index < 0) {
      std::string available;
      for (const auto& rec : model.image_records) available += " " + rec.name;
      throw NotFoundError("unknown view '" + name + "'; available:" + available);
    }
    const CameraModeld cam = model.camera_for(index);
    const RenderOutput out = render(working, cam, settings);
    ColorImaged rendered = out.color;
    for (int c = 0; c < 3; ++c)
      rendered.channel(c) = rendered.channel(c).min(1.0).max(0.0);
    const ColorImaged reference = loader(name);
    report.names.push_back(name);
    report.psnr_db.push_back(capped_db(psnr(rendered, reference)));
    report.ssim_value.push_back(ssim(rendered, reference));
  }
  report.mean_psnr =
      std::accumulate(report.psnr_db.begin(), report.psnr_db.end(), 0.0) / report.psnr_db.size();
  report.mean_ssim = std::accumulate(report.ssim_value.begin(), report.ssim_value.end(), 0.0) /
                     report.ssim_value.size();
  report.has_means = true;
  return report;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "view,psnr_db,ssim\n";
  for (std::size_t i = 0; i < report.names.size(); ++i)
    out << report.names[i] << "," << report.psnr_db[i] << "," << report.ssim_value[i] << "\n";
  if (report.has_means) out << "mean," << report.mean_psnr << "," << report.mean_ssim << "\n";
}

void write_eval_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["view_count"] = report.view_count;
  j["views"] = nlohmann::json::array();
  for (std::size_t i = 0; i < report.names.size(); ++i)
    j["views"].push_back({{"name", report.names[i]},
                          {"psnr_db", report.psnr_db[i]},
                          {"ssim", report.ssim_value[i]}});
  if (report.has_means) {
    j["mean_psnr_db"] = report.mean_psnr;
    j["mean_ssim"] = report.mean_ssim;
  } else {
    j["means_undefined"] = true;
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace splat
