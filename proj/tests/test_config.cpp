#include <doctest.h>

#include "splatkit/config.hpp"
#include "splatkit/errors.hpp"

using namespace splat;

TEST_CASE("parse_toml: sections, scalars, strings, arrays, comments") {
  const std::string text = R"(
# run configuration
[train]
iterations = 2000        # inline comment
lr_center = 1.6e-4
densify_init = false

[losses]
lambda_depth = 0.1

[render]
background = [0.5, 0.25, 1]
tile_size = 16

[denoiser]
provider = "linear"
linear_coeff = 0.75
)";
  const TomlTable table = parse_toml(text);
  CHECK(std::get<long>(table.at("train").at("iterations")) == 2000);
  CHECK(std::get<double>(table.at("train").at("lr_center")) == doctest::Approx(1.6e-4));
  CHECK(std::get<bool>(table.at("train").at("densify_init")) == false);
  CHECK(std::get<std::string>(table.at("denoiser").at("provider")) == "linear");
  const auto& bg = std::get<std::vector<double>>(table.at("render").at("background"));
  REQUIRE(bg.size() == 3);
  CHECK(bg[1] == 0.25);
}

TEST_CASE("parse_toml: errors carry line numbers") {
  try {
    parse_toml("[train]\noops\n", "test.toml");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.file == "test.toml");
  }
  CHECK_THROWS_AS(parse_toml("[train\n"), ParseError);
  CHECK_THROWS_AS(parse_toml("key = \"unterminated\n"), ParseError);
  CHECK_THROWS_AS(parse_toml("key = [1, oops]\n"), ParseError);
}

TEST_CASE("load_run_config: defaults survive an empty table") {
  const RunConfig cfg = load_run_config({});
  CHECK(cfg.train.iterations == 30000);
  CHECK(cfg.weights.lambda_depth == doctest::Approx(0.1));
  CHECK(cfg.weights.lambda_sds == doctest::Approx(0.05));
  CHECK(cfg.weights.dssim_mix == doctest::Approx(0.2));
  CHECK(cfg.mask.q_base == doctest::Approx(0.9));
  CHECK(cfg.mask.delta_q == doctest::Approx(0.08));
  CHECK(cfg.smoothing.s_filter == doctest::Approx(0.2));
  CHECK(cfg.smoothing.alpha_margin == doctest::Approx(0.15));
  CHECK(cfg.density.k_neighbors == 8);
  CHECK(cfg.density.regions == 64);
  CHECK(cfg.denoiser == "perfect");
}

TEST_CASE("load_run_config: every section maps through") {
  const std::string text = R"(
[train]
iterations = 123
lr_opacity = 0.01
seed = 42
densify_init = false

[losses]
lambda_sds = 0.2
q_base = 0.8
delta_q = 0.1

[smoothing]
s = 0.4
alpha_margin = 0.2
fallback_far = 50
enabled = true

[densify]
k = 12
regions = 32
local_budget = 100
global_budget = 50

[render]
background = [1, 1, 1]
threads = 3

[denoiser]
provider = "linear"
linear_coeff = 0.25
)";
  const RunConfig cfg = load_run_config(parse_toml(text));
  CHECK(cfg.train.iterations == 123);
  CHECK(cfg.train.lr_opacity == doctest::Approx(0.01));
  CHECK(cfg.train.rng_seed == 42);
  CHECK(cfg.densify_init == false);
  CHECK(cfg.weights.lambda_sds == doctest::Approx(0.2));
  CHECK(cfg.mask.q_base == doctest::Approx(0.8));
  CHECK(cfg.smoothing.s_filter == doctest::Approx(0.4));
  CHECK(cfg.render.smoothing_s == doctest::Approx(0.4));
  CHECK(cfg.render.viewport_margin == doctest::Approx(0.2));
  CHECK(cfg.density.k_neighbors == 12);
  CHECK(cfg.density.retention_budget_local == 100);
  CHECK(cfg.render.background.isApprox(Vec3d(1, 1, 1)));
  CHECK(cfg.render.threads == 3);
  CHECK(cfg.denoiser == "linear:0.250000");
}

TEST_CASE("load_run_config: unknown keys and sections rejected") {
  CHECK_THROWS_AS(load_run_config(parse_toml("[train]\nitreations = 5\n")), Error);
  CHECK_THROWS_AS(load_run_config(parse_toml("[trian]\niterations = 5\n")), Error);
  CHECK_THROWS_AS(load_run_config(parse_toml("[render]\nbackground = [1, 2]\n")), Error);
}
