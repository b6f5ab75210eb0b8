#include "splatkit/denoiser.hpp"

#include <httplib.h>

#include <cstring>

#include "json.hpp"
#include "splatkit/errors.hpp"
#include "splatkit/rng.hpp"

namespace splat {

namespace {
constexpr char kB64Table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < len ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < len ? data[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kB64Table[(triple >> 18) & 0x3f]);
    out.push_back(kB64Table[(triple >> 12) & 0x3f]);
    out.push_back(i + 1 < len ? kB64Table[(triple >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < len ? kB64Table[triple & 0x3f] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw FormatError("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::vector<float> PerfectDenoiser::predict_noise(DenoiseKind, const std::vector<float>& x_t, int,
                                                  int, int, double, std::uint64_t seed) {
  return standard_normal_f32(seed, x_t.size());
}

std::vector<float> LinearDenoiser::predict_noise(DenoiseKind, const std::vector<float>& x_t, int,
                                                 int, int, double, std::uint64_t) {
  std::vector<float> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    out[i] = static_cast<float>(coefficient_ * x_t[i]);
  return out;
}

struct RemoteDenoiser::Impl {
  std::string host;
  int port = 80;
  std::string path_prefix;
  int timeout = 30;

  void parse_url(const std::string& url) {
    std::string rest = url;
    const auto scheme = rest.find("://");
    if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
    const auto slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    path_prefix = slash == std::string::npos ? "" : rest.substr(slash);
    if (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
    const auto colon = hostport.find(':');
    if (colon != std::string::npos) {
      host = hostport.substr(0, colon);
      port = std::stoi(hostport.substr(colon + 1));
    } else {
      host = hostport;
      port = 80;
    }
  }
};

RemoteDenoiser::RemoteDenoiser(const std::string& base_url, int timeout_seconds)
    : impl_(std::make_unique<Impl>()) {
  impl_->parse_url(base_url);
  impl_->timeout = timeout_seconds;
}

RemoteDenoiser::~RemoteDenoiser() = default;

std::vector<float> RemoteDenoiser::predict_noise(DenoiseKind kind, const std::vector<float>& x_t,
                                                 int h, int w, int c, double t,
                                                 std::uint64_t seed) {
  nlohmann::json body;
  body["kind"] = kind == DenoiseKind::Image ? "image" : "depth";
  body["data"] = base64_encode(reinterpret_cast<const std::uint8_t*>(x_t.data()),
                               x_t.size() * sizeof(float));
  body["h"] = h;
  body["w"] = w;
  body["c"] = c;
  body["t"] = t;
  body["seed"] = seed;

  httplib::Client client(impl_->host, impl_->port);
  client.set_connection_timeout(impl_->timeout);
  client.set_read_timeout(impl_->timeout);
  const auto res = client.Post((impl_->path_prefix + "/denoise").c_str(), body.dump(),
                               "application/json");
  if (!res) throw Error("denoiser: no response from " + impl_->host);
  if (res->status != 200)
    throw Error("denoiser: HTTP " + std::to_string(res->status) + " from " + impl_->host);

  const auto reply = nlohmann::json::parse(res->body);
  if (!reply.contains("eps")) throw FormatError("denoiser: reply missing 'eps'");
  const auto bytes = base64_decode(reply["eps"].get<std::string>());
  if (bytes.size() != x_t.size() * sizeof(float))
    throw FormatError("denoiser: eps size mismatch");
  std::vector<float> eps(x_t.size());
  std::memcpy(eps.data(), bytes.data(), bytes.size());
  return eps;
}

std::unique_ptr<Denoiser> make_denoiser(const std::string& spec) {
  if (spec == "perfect") return std::make_unique<PerfectDenoiser>();
  if (spec == "linear") return std::make_unique<LinearDenoiser>(0.5);
  if (spec.rfind("linear:", 0) == 0)
    return std::make_unique<LinearDenoiser>(std::stod(spec.substr(7)));
  return std::make_unique<RemoteDenoiser>(spec);
}

}  // namespace splat
