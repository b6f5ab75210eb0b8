#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "splatkit/colmap.hpp"
#include "splatkit/config.hpp"
#include "splatkit/densify.hpp"
#include "splatkit/image_io.hpp"
#include "splatkit/metrics.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/ply.hpp"
#include "splatkit/smoothing.hpp"
#include "splatkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace splat;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  std::string config_path;
};

RunConfig resolve_config(const GlobalOpts& global) {
  RunConfig cfg;
  if (!global.config_path.empty()) cfg = load_run_config_file(global.config_path);
  if (global.seed_set) {
    cfg.train.rng_seed = global.seed;
    cfg.density.rng_seed = global.seed;
  }
  if (global.threads > 0)
    cfg.render.threads = global.threads;
  else if (cfg.render.threads <= 0)
    cfg.render.threads = default_thread_count();
  return cfg;
}

PointCloudd load_input_cloud(const std::string& input) {
  if (fs::is_directory(input)) return load_colmap_model(input).points;
  return read_pointcloud_ply(input);
}

Vec3d parse_rgb(const std::string& text) {
  Vec3d rgb = Vec3d::Zero();
  std::istringstream stream(text);
  std::string item;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(stream, item, ',')) throw Error("expected R,G,B, got '" + text + "'");
    rgb[i] = std::stod(item);
  }
  return rgb;
}

std::vector<TrainView> assemble_views(const SfmModel& model, const std::string& images_dir,
                                      const std::string& depths_dir) {
  std::vector<TrainView> views;
  for (std::size_t i = 0; i < model.image_records.size(); ++i) {
    const auto& rec = model.image_records[i];
    TrainView view;
    view.name = rec.name;
    view.camera = model.camera_for(i);

    const fs::path image_path = fs::path(images_dir) / rec.name;
    if (!fs::exists(image_path)) {
      std::cerr << "[splatkit] skipping view " << rec.name << " (no image at " << image_path
                << ")\n";
      continue;
    }
    view.image = load_color_image(image_path.string());

    // Depth file: image stem + .png / .pfm inside depths_dir.
    const std::string stem = fs::path(rec.name).stem().string();
    fs::path depth_path = fs::path(depths_dir) / (stem + ".png");
    if (!fs::exists(depth_path)) depth_path = fs::path(depths_dir) / (stem + ".pfm");
    if (!fs::exists(depth_path))
      throw NotFoundError("no depth map for view " + rec.name + " in " + depths_dir);
    view.depth = load_depth_map(depth_path.string(), view.camera.width, view.camera.height);

    views.push_back(std::move(view));
  }
  if (views.empty()) throw Error("no usable training views");
  return views;
}

int run_densify(const GlobalOpts& global, const std::string& input, const std::string& output,
                long k, long regions, long local_budget, long global_budget) {
  RunConfig cfg = resolve_config(global);
  if (k > 0) cfg.density.k_neighbors = static_cast<int>(k);
  if (regions > 0) cfg.density.regions = static_cast<int>(regions);
  if (local_budget >= 0) cfg.density.retention_budget_local = local_budget;
  if (global_budget >= 0) cfg.density.retention_budget_global = global_budget;

  const PointCloudd cloud = load_input_cloud(input);
  const PointCloudd dense = densify_pointcloud(cloud, cfg.density);
  write_pointcloud_ply(dense, output);
  std::cout << "densified " << cloud.size() << " -> " << dense.size() << " points, wrote "
            << output << "\n";
  return 0;
}

int run_train(const GlobalOpts& global, const std::string& colmap_dir,
              const std::string& images_dir, const std::string& depths_dir,
              const std::string& out_dir, const std::string& denoiser_spec) {
  RunConfig cfg = resolve_config(global);
  if (!denoiser_spec.empty()) cfg.denoiser = denoiser_spec;

  const SfmModel model = load_colmap_model(colmap_dir);
  for (const auto& w : model.warnings) std::cerr << "[splatkit] warning: " << w << "\n";
  auto views = assemble_views(model, images_dir, depths_dir);

  PointCloudd cloud = model.points;
  if (cloud.positions.empty()) throw Error("COLMAP model has no 3D points to initialize from");
  if (cfg.densify_init) {
    const std::size_t before = cloud.size();
    cloud = densify_pointcloud(cloud, cfg.density);
    std::cout << "densified initialization: " << before << " -> " << cloud.size() << " points\n";
  }

  Scene<double> scene = init_scene(cloud, cfg.train.max_sh_degree);
  Trainer trainer(std::move(views), std::move(scene), cfg.train, cfg.weights, cfg.mask,
                  cfg.smoothing, cfg.render,
                  cfg.weights.lambda_sds > 0.0 ? make_denoiser(cfg.denoiser) : nullptr);
  trainer.train(out_dir);

  const auto& history = trainer.history();
  if (!history.empty())
    std::cout << "finished " << history.size() << " iterations, final total loss "
              << history.back().losses.total << ", " << trainer.scene().gaussians.size()
              << " gaussians\n";
  std::cout << "outputs in " << out_dir << "\n";
  return 0;
}

int run_render(const GlobalOpts& global, const std::string& scene_path,
               const std::string& colmap_dir, const std::string& view_name,
               const std::string& out_image, const std::string& out_depth,
               const std::string& background) {
  RunConfig cfg = resolve_config(global);
  cfg.render.background = parse_rgb(background);

  Scene<double> scene = read_ply(scene_path);
  const SfmModel model = load_colmap_model(colmap_dir);

  int index = -1;
  for (std::size_t i = 0; i < model.image_records.size(); ++i)
    if (model.image_records[i].name == view_name) index = static_cast<int>(i);
  if (index < 0) {
    std::string available;
    for (const auto& rec : model.image_records) available += " " + rec.name;
    throw NotFoundError("unknown view '" + view_name + "'; available:" + available);
  }

  std::vector<CameraModeld> cameras;
  for (std::size_t i = 0; i < model.image_records.size(); ++i)
    cameras.push_back(model.camera_for(i));
  if (cfg.render.apply_smoothing) refresh_smoothing_state(scene, cameras, cfg.smoothing);

  const RenderOutput out = render(scene, cameras[index], cfg.render);
  save_png_rgb8(out_image, out.color);
  std::cout << "wrote " << out_image << "\n";
  if (!out_depth.empty()) {
    save_pfm_gray(out_depth, out.depth);
    std::cout << "wrote " << out_depth << "\n";
  }
  return 0;
}

int run_eval(const GlobalOpts& global, const std::string& scene_path,
             const std::string& colmap_dir, const std::string& views_file,
             const std::string& images_dir, const std::string& out_json) {
  RunConfig cfg = resolve_config(global);
  const Scene<double> scene = read_ply(scene_path);
  const SfmModel model = load_colmap_model(colmap_dir);

  std::vector<std::string> names;
  std::ifstream in(views_file);
  if (!in) throw NotFoundError("cannot open view list " + views_file);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }

  const std::string img_dir = images_dir.empty()
                                  ? (fs::path(colmap_dir).parent_path() / "images").string()
                                  : images_dir;
  const EvalReport report = evaluate(scene, model, names,
                                     [&](const std::string& name) {
                                       return load_color_image((fs::path(img_dir) / name).string());
                                     },
                                     cfg.render);
  write_eval_json(report, out_json);
  const fs::path csv = fs::path(out_json).replace_extension(".csv");
  write_eval_csv(report, csv.string());
  if (report.has_means)
    std::cout << "mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim << " ("
              << report.view_count << " views)\n";
  else
    std::cout << "empty view list; means undefined\n";
  std::cout << "wrote " << out_json << " and " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatkit: sparse-view Gaussian-splatting toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand

  GlobalOpts global;
  app.add_option("--seed", global.seed, "RNG seed (overrides config)")
      ->each([&](const std::string&) { global.seed_set = true; });
  app.add_option("--threads", global.threads, "worker threads (default: all cores)");
  app.add_option("--config", global.config_path, "TOML run config");

  auto* densify_cmd = app.add_subcommand("densify", "densify a sparse point cloud");
  std::string in_path, out_path;
  long k = 0, regions = 0, local_budget = -1, global_budget = -1;
  densify_cmd->add_option("--in", in_path, "input .ply or COLMAP sparse dir")->required();
  densify_cmd->add_option("--out", out_path, "output .ply")->required();
  densify_cmd->add_option("--k", k, "KDE neighbors");
  densify_cmd->add_option("--regions", regions, "local regions");
  densify_cmd->add_option("--local-budget", local_budget, "local retained points");
  densify_cmd->add_option("--global-budget", global_budget, "global retained points");

  auto* train_cmd = app.add_subcommand("train", "fit a Gaussian scene");
  std::string colmap_dir, images_dir, depths_dir, run_dir, denoiser_spec;
  train_cmd->add_option("--colmap", colmap_dir, "COLMAP sparse dir")->required();
  train_cmd->add_option("--images", images_dir, "training images dir")->required();
  train_cmd->add_option("--depths", depths_dir, "reference depth maps dir")->required();
  train_cmd->add_option("--out", run_dir, "output run dir")->required();
  train_cmd->add_option("--denoiser", denoiser_spec, "perfect | linear[:coeff] | URL");

  auto* render_cmd = app.add_subcommand("render", "render one view of a scene");
  std::string scene_path, view_name, out_image, out_depth, background = "0,0,0";
  render_cmd->add_option("--scene", scene_path, "scene .ply")->required();
  render_cmd->add_option("--colmap", colmap_dir, "COLMAP sparse dir")->required();
  render_cmd->add_option("--view", view_name, "image name of the view")->required();
  render_cmd->add_option("--out", out_image, "output PNG")->required();
  render_cmd->add_option("--depth-out", out_depth, "optional output depth PFM");
  render_cmd->add_option("--background", background, "background R,G,B");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate held-out views");
  std::string views_file, out_json;
  eval_cmd->add_option("--scene", scene_path, "scene .ply")->required();
  eval_cmd->add_option("--colmap", colmap_dir, "COLMAP sparse dir")->required();
  eval_cmd->add_option("--views", views_file, "file with one image name per line")->required();
  eval_cmd->add_option("--images", images_dir, "reference images dir");
  eval_cmd->add_option("--out", out_json, "output report JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (densify_cmd->parsed())
      return run_densify(global, in_path, out_path, k, regions, local_budget, global_budget);
    if (train_cmd->parsed())
      return run_train(global, colmap_dir, images_dir, depths_dir, run_dir, denoiser_spec);
    if (render_cmd->parsed())
      return run_render(global, scene_path, colmap_dir, view_name, out_image, out_depth,
                        background);
    if (eval_cmd->parsed())
      return run_eval(global, scene_path, colmap_dir, views_file, images_dir, out_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
