#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace splat {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One decoupled-weight-decay adaptive-moment step on a flat parameter
/// slice. `t` is the 1-based step count; m/v must match params in size.
/// With zero gradients the adaptive term is exactly zero, and nonzero decay
/// shrinks parameters by (1 - lr * wd) per step.
void adamw_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                std::span<double> v, long t, double lr, double weight_decay,
                const AdamWOptions& opts = {});

/// Moment buffers for one parameter group, kept aligned with the per-row
/// parameters across clone/split/prune resizes (`width` values per row).
struct MomentState {
  std::vector<double> m, v;

  void ensure(std::size_t rows, std::size_t width) {
    m.resize(rows * width, 0.0);
    v.resize(rows * width, 0.0);
  }
  void filter(const std::vector<std::uint8_t>& keep, std::size_t width);
  void append_zero(std::size_t count, std::size_t width);
};

}  // namespace splat
