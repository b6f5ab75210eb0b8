#include "splatkit/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace splat {

void adamw_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                std::span<double> v, long t, double lr, double weight_decay,
                const AdamWOptions& opts) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw std::invalid_argument("adamw_step: size mismatch");
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
    v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    // Decoupled decay: applied to the parameter directly, not via the
    // gradient, so zero-gradient steps shrink multiplicatively.
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + opts.eps) + weight_decay * params[i]);
  }
}

void MomentState::filter(const std::vector<std::uint8_t>& keep, std::size_t width) {
  std::size_t write = 0;
  for (std::size_t row = 0; row < keep.size(); ++row) {
    if (!keep[row]) continue;
    for (std::size_t k = 0; k < width; ++k) {
      m[write * width + k] = m[row * width + k];
      v[write * width + k] = v[row * width + k];
    }
    ++write;
  }
  m.resize(write * width);
  v.resize(write * width);
}

void MomentState::append_zero(std::size_t count, std::size_t width) {
  m.resize(m.size() + count * width, 0.0);
  v.resize(v.size() + count * width, 0.0);
}

}  // namespace splat
