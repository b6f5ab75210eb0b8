#include "splatkit/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "splatkit/errors.hpp"

namespace splat {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_scalar(const std::string& raw, const std::string& origin, long lineno) {
  const std::string v = trim(raw);
  if (v.empty()) throw ParseError(origin, lineno, "empty value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw ParseError(origin, lineno, "unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v.front() == '[') {
    if (v.back() != ']') throw ParseError(origin, lineno, "unterminated array");
    std::vector<double> values;
    std::string body = v.substr(1, v.size() - 2);
    std::istringstream stream(body);
    std::string item;
    while (std::getline(stream, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        values.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ParseError(origin, lineno, "array element '" + item + "' is not a number");
      }
    }
    return values;
  }
  // Integer first, then float.
  try {
    std::size_t used = 0;
    const long l = std::stol(v, &used);
    if (used == v.size()) return l;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ParseError(origin, lineno, "cannot parse value '" + v + "'");
}

}  // namespace

TomlTable parse_toml(const std::string& text, const std::string& origin) {
  TomlTable table;
  std::istringstream stream(text);
  std::string line;
  std::string section;
  long lineno = 0;
  while (std::getline(stream, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(origin, lineno, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(origin, lineno, "empty section name");
      table[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(origin, lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(origin, lineno, "empty key");
    table[section][key] = parse_scalar(line.substr(eq + 1), origin, lineno);
  }
  return table;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str(), path);
}

namespace {

class SectionReader {
 public:
  SectionReader(const TomlTable& table, const std::string& section) : section_(section) {
    const auto it = table.find(section);
    if (it != table.end()) entries_ = &it->second;
  }

  double number(const std::string& key, double fallback) {
    const TomlValue* v = find(key);
    if (!v) return fallback;
    if (const auto* d = std::get_if<double>(v)) return *d;
    if (const auto* l = std::get_if<long>(v)) return static_cast<double>(*l);
    throw Error("config: " + section_ + "." + key + " must be a number");
  }

  long integer(const std::string& key, long fallback) {
    const TomlValue* v = find(key);
    if (!v) return fallback;
    if (const auto* l = std::get_if<long>(v)) return *l;
    throw Error("config: " + section_ + "." + key + " must be an integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    const TomlValue* v = find(key);
    if (!v) return fallback;
    if (const auto* b = std::get_if<bool>(v)) return *b;
    throw Error("config: " + section_ + "." + key + " must be a boolean");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const TomlValue* v = find(key);
    if (!v) return fallback;
    if (const auto* s = std::get_if<std::string>(v)) return *s;
    throw Error("config: " + section_ + "." + key + " must be a string");
  }

  Vec3d vec3(const std::string& key, const Vec3d& fallback) {
    const TomlValue* v = find(key);
    if (!v) return fallback;
    if (const auto* a = std::get_if<std::vector<double>>(v)) {
      if (a->size() != 3) throw Error("config: " + section_ + "." + key + " needs 3 numbers");
      return Vec3d((*a)[0], (*a)[1], (*a)[2]);
    }
    throw Error("config: " + section_ + "." + key + " must be an array");
  }

  void check_consumed() const {
    if (!entries_) return;
    for (const auto& [key, value] : *entries_)
      if (!consumed_.count(key))
        throw Error("config: unknown key " + section_ + "." + key);
  }

 private:
  const TomlValue* find(const std::string& key) {
    consumed_.insert(key);
    if (!entries_) return nullptr;
    const auto it = entries_->find(key);
    return it == entries_->end() ? nullptr : &it->second;
  }

  std::string section_;
  const std::map<std::string, TomlValue>* entries_ = nullptr;
  std::set<std::string> consumed_;
};

}  // namespace

RunConfig load_run_config(const TomlTable& table) {
  for (const auto& [section, _] : table) {
    if (section != "train" && section != "losses" && section != "smoothing" &&
        section != "densify" && section != "render" && section != "denoiser" && section != "")
      throw Error("config: unknown section [" + section + "]");
  }

  RunConfig cfg;

  SectionReader train(table, "train");
  cfg.train.iterations = train.integer("iterations", cfg.train.iterations);
  cfg.train.lr_center = train.number("lr_center", cfg.train.lr_center);
  cfg.train.lr_center_final = train.number("lr_center_final", cfg.train.lr_center_final);
  cfg.train.lr_rotation = train.number("lr_rotation", cfg.train.lr_rotation);
  cfg.train.lr_scale = train.number("lr_scale", cfg.train.lr_scale);
  cfg.train.lr_opacity = train.number("lr_opacity", cfg.train.lr_opacity);
  cfg.train.lr_sh = train.number("lr_sh", cfg.train.lr_sh);
  cfg.train.weight_decay = train.number("weight_decay", cfg.train.weight_decay);
  cfg.train.grad_threshold = train.number("grad_threshold", cfg.train.grad_threshold);
  cfg.train.min_opacity = train.number("min_opacity", cfg.train.min_opacity);
  cfg.train.densify_interval = train.integer("densify_interval", cfg.train.densify_interval);
  cfg.train.densify_from = train.integer("densify_from", cfg.train.densify_from);
  cfg.train.densify_until = train.integer("densify_until", cfg.train.densify_until);
  cfg.train.size_percentile = train.number("size_percentile", cfg.train.size_percentile);
  cfg.train.split_scale_shrink = train.number("split_scale_shrink", cfg.train.split_scale_shrink);
  cfg.train.smoothing_refresh_interval =
      train.integer("smoothing_refresh_interval", cfg.train.smoothing_refresh_interval);
  cfg.train.sds_interval = train.integer("sds_interval", cfg.train.sds_interval);
  cfg.train.sh_growth_interval = train.integer("sh_growth_interval", cfg.train.sh_growth_interval);
  cfg.train.max_sh_degree = static_cast<int>(train.integer("max_sh_degree", cfg.train.max_sh_degree));
  cfg.train.checkpoint_interval =
      train.integer("checkpoint_interval", cfg.train.checkpoint_interval);
  cfg.train.novel_jitter_deg = train.number("novel_jitter_deg", cfg.train.novel_jitter_deg);
  cfg.train.novel_jitter_frac = train.number("novel_jitter_frac", cfg.train.novel_jitter_frac);
  cfg.train.novel_view_scale = train.number("novel_view_scale", cfg.train.novel_view_scale);
  cfg.train.rng_seed = static_cast<std::uint64_t>(train.integer("seed", 0));
  cfg.densify_init = train.boolean("densify_init", cfg.densify_init);
  train.check_consumed();

  SectionReader losses(table, "losses");
  cfg.weights.lambda_depth = losses.number("lambda_depth", cfg.weights.lambda_depth);
  cfg.weights.lambda_sds = losses.number("lambda_sds", cfg.weights.lambda_sds);
  cfg.weights.lambda_dgpp = losses.number("lambda_dgpp", cfg.weights.lambda_dgpp);
  cfg.weights.lambda_image = losses.number("lambda_1", cfg.weights.lambda_image);
  cfg.weights.lambda_depth_sds = losses.number("lambda_2", cfg.weights.lambda_depth_sds);
  cfg.weights.dssim_mix = losses.number("dssim_mix", cfg.weights.dssim_mix);
  cfg.weights.t_min = losses.number("t_min", cfg.weights.t_min);
  cfg.weights.t_max = losses.number("t_max", cfg.weights.t_max);
  cfg.weights.w_t = losses.number("w_t", cfg.weights.w_t);
  cfg.mask.q_base = losses.number("q_base", cfg.mask.q_base);
  cfg.mask.delta_q = losses.number("delta_q", cfg.mask.delta_q);
  losses.check_consumed();

  SectionReader smoothing(table, "smoothing");
  cfg.smoothing.s_filter = smoothing.number("s", cfg.smoothing.s_filter);
  cfg.smoothing.alpha_margin = smoothing.number("alpha_margin", cfg.smoothing.alpha_margin);
  cfg.smoothing.fallback_far = smoothing.number("fallback_far", cfg.smoothing.fallback_far);
  cfg.render.apply_smoothing = smoothing.boolean("enabled", cfg.render.apply_smoothing);
  smoothing.check_consumed();
  cfg.render.smoothing_s = cfg.smoothing.s_filter;
  cfg.render.viewport_margin = cfg.smoothing.alpha_margin;

  SectionReader densify(table, "densify");
  cfg.density.k_neighbors = static_cast<int>(densify.integer("k", cfg.density.k_neighbors));
  cfg.density.bandwidth_global = densify.number("bandwidth_global", cfg.density.bandwidth_global);
  cfg.density.bandwidth_local = densify.number("bandwidth_local", cfg.density.bandwidth_local);
  cfg.density.regions = static_cast<int>(densify.integer("regions", cfg.density.regions));
  cfg.density.candidates_per_region =
      static_cast<int>(densify.integer("candidates_per_region", cfg.density.candidates_per_region));
  cfg.density.retention_budget_local =
      densify.integer("local_budget", cfg.density.retention_budget_local);
  cfg.density.retention_budget_global =
      densify.integer("global_budget", cfg.density.retention_budget_global);
  cfg.density.rng_seed = static_cast<std::uint64_t>(densify.integer("seed", 0));
  densify.check_consumed();

  SectionReader render(table, "render");
  cfg.render.background = render.vec3("background", cfg.render.background);
  cfg.render.tile_size = static_cast<int>(render.integer("tile_size", cfg.render.tile_size));
  cfg.render.dilation = render.number("dilation", cfg.render.dilation);
  cfg.render.sigma_clamp = render.number("sigma_clamp", cfg.render.sigma_clamp);
  cfg.render.transmittance_min = render.number("transmittance_min", cfg.render.transmittance_min);
  cfg.render.mahal_cutoff_sq = render.number("mahal_cutoff_sq", cfg.render.mahal_cutoff_sq);
  cfg.render.threads = static_cast<int>(render.integer("threads", cfg.render.threads));
  render.check_consumed();

  SectionReader denoiser(table, "denoiser");
  cfg.denoiser = denoiser.text("provider", cfg.denoiser);
  const double linear_coeff = denoiser.number("linear_coeff", 0.5);
  if (cfg.denoiser == "linear") cfg.denoiser = "linear:" + std::to_string(linear_coeff);
  denoiser.check_consumed();

  return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
  return load_run_config(parse_toml_file(path));
}

}  // namespace splat
