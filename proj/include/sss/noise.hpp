#pragma once

// Seeded synthetic corruption: additive Gaussian, salt-and-pepper impulses,
// and multiplicative speckle x*(1+n). Outputs are clamped to [0,1]; every
// generator is a deterministic function of (image, params, seed).

#include <stdexcept>
#include <string>

#include "sss/image.hpp"
#include "sss/rng.hpp"

namespace sss {

struct NoiseSpec {
  enum class Kind { gaussian, salt_pepper, speckle };
  Kind kind = Kind::gaussian;
  double param = 0.0;  // sigma for gaussian/speckle, density for salt_pepper
  std::uint64_t seed = 0;
};

inline GrayImage add_gaussian(const GrayImage& img, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("add_gaussian: negative sigma");
  RngStream rng(seed);
  GrayImage out = img;
  for (double& v : out.data()) v = clamp01(v + sigma * rng.normal());
  return out;
}

inline GrayImage add_salt_pepper(const GrayImage& img, double density, std::uint64_t seed) {
  if (density < 0.0 || density > 1.0)
    throw std::invalid_argument("add_salt_pepper: density outside [0,1]");
  RngStream rng(seed);
  GrayImage out = img;
  for (double& v : out.data())
    if (rng.bernoulli(density)) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return out;
}

inline GrayImage add_speckle(const GrayImage& img, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("add_speckle: negative sigma");
  RngStream rng(seed);
  GrayImage out = img;
  for (double& v : out.data()) v = clamp01(v * (1.0 + sigma * rng.normal()));
  return out;
}

inline GrayImage apply_noise(const GrayImage& img, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseSpec::Kind::gaussian: return add_gaussian(img, spec.param, spec.seed);
    case NoiseSpec::Kind::salt_pepper: return add_salt_pepper(img, spec.param, spec.seed);
    case NoiseSpec::Kind::speckle: return add_speckle(img, spec.param, spec.seed);
  }
  throw std::logic_error("apply_noise: bad kind");
}

// "gaussian:0.1" | "salt-pepper:0.05" | "speckle:0.2"  (seed is set separately)
inline NoiseSpec parse_noise_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("noise spec needs kind:param, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string param = text.substr(colon + 1);
  NoiseSpec spec;
  if (kind == "gaussian") spec.kind = NoiseSpec::Kind::gaussian;
  else if (kind == "salt-pepper" || kind == "saltpepper") spec.kind = NoiseSpec::Kind::salt_pepper;
  else if (kind == "speckle") spec.kind = NoiseSpec::Kind::speckle;
  else throw std::invalid_argument("unknown noise kind '" + kind + "'");
  try {
    spec.param = std::stod(param);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad noise parameter '" + param + "'");
  }
  if (spec.param < 0.0) throw std::invalid_argument("noise parameter must be >= 0");
  if (spec.kind == NoiseSpec::Kind::salt_pepper && spec.param > 1.0)
    throw std::invalid_argument("salt-pepper density must be in [0,1]");
  return spec;
}

inline std::string format_noise_spec(const NoiseSpec& spec) {
  const char* kind = spec.kind == NoiseSpec::Kind::gaussian ? "gaussian"
                     : spec.kind == NoiseSpec::Kind::salt_pepper ? "salt-pepper"
                                                                 : "speckle";
  std::string p = std::to_string(spec.param);
  p.erase(p.find_last_not_of('0') + 1);
  if (!p.empty() && p.back() == '.') p.pop_back();
  return std::string(kind) + ":" + p;
}

}  // namespace sss
