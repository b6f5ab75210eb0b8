#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "splatkit/types.hpp"

namespace splat {

enum class DenoiseKind { Image, Depth };

/// Noise-prediction interface for score-distillation guidance. The caller
/// forms the noised input x_t with this object's schedule; predict_noise
/// returns eps_phi(x_t, t). Data is row-major float32 H x W x C.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Variance-preserving schedule value alpha_bar(t) for t in (0,1).
  virtual double alpha_bar(double t) const = 0;

  virtual std::vector<float> predict_noise(DenoiseKind kind, const std::vector<float>& x_t, int h,
                                           int w, int c, double t, std::uint64_t seed) = 0;

  virtual std::string name() const = 0;
};

/// Echoes the exact noise the caller injected (regenerated from the request
/// seed), so the SDS residual is identically zero. Test/diagnostic provider.
class PerfectDenoiser : public Denoiser {
 public:
  double alpha_bar(double t) const override { return 1.0 - t; }
  std::vector<float> predict_noise(DenoiseKind, const std::vector<float>&, int, int, int, double,
                                   std::uint64_t seed) override;
  std::string name() const override { return "perfect"; }
};

/// eps_phi(x_t, t) = coefficient * x_t. Its SDS expectation has a closed
/// form, which the tests exploit.
class LinearDenoiser : public Denoiser {
 public:
  explicit LinearDenoiser(double coefficient) : coefficient_(coefficient) {}
  double alpha_bar(double t) const override { return 1.0 - t; }
  std::vector<float> predict_noise(DenoiseKind, const std::vector<float>& x_t, int, int, int,
                                   double, std::uint64_t) override;
  std::string name() const override { return "linear"; }
  double coefficient() const { return coefficient_; }

 private:
  double coefficient_;
};

/// HTTP client for an external diffusion service:
/// POST {base_url}/denoise with JSON
///   {kind, data: base64 float32, h, w, c, t, seed}
/// -> {eps: base64 float32, same shape}. Failures throw; the SDS caller
/// downgrades them to a skipped step.
class RemoteDenoiser : public Denoiser {
 public:
  explicit RemoteDenoiser(const std::string& base_url, int timeout_seconds = 30);
  ~RemoteDenoiser() override;
  double alpha_bar(double t) const override { return 1.0 - t; }
  std::vector<float> predict_noise(DenoiseKind kind, const std::vector<float>& x_t, int h, int w,
                                   int c, double t, std::uint64_t seed) override;
  std::string name() const override { return "remote"; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "perfect", "linear" or "linear:<coeff>", anything else is treated as a
/// remote base URL.
std::unique_ptr<Denoiser> make_denoiser(const std::string& spec);

std::string base64_encode(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace splat
