#pragma once

// The four classical baseline denoisers: mean, median, bilateral, and the
// local-adaptive Wiener filter. All use replicate (clamp-to-edge) padding and
// preserve image dimensions and the [0,1] range.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sss/image.hpp"

namespace sss {

namespace detail {

inline int clamp_coord(int i, int n) { return std::clamp(i, 0, n - 1); }

inline void require_odd_window(int k, const char* who) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument(std::string(who) + ": window side must be odd and >= 1");
}

}  // namespace detail

inline GrayImage mean_filter(const GrayImage& img, int k) {
  detail::require_odd_window(k, "mean_filter");
  if (img.empty()) throw std::invalid_argument("mean_filter: empty image");
  const int w = img.width(), h = img.height(), r = k / 2;
  GrayImage out(w, h);
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          sum += img(detail::clamp_coord(x + dx, w), detail::clamp_coord(y + dy, h));
      out(x, y) = clamp01(sum * inv);
    }
  return out;
}

inline GrayImage median_filter(const GrayImage& img, int k) {
  detail::require_odd_window(k, "median_filter");
  if (img.empty()) throw std::invalid_argument("median_filter: empty image");
  const int w = img.width(), h = img.height(), r = k / 2;
  GrayImage out(w, h);
  std::vector<double> window(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t n = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          window[n++] = img(detail::clamp_coord(x + dx, w), detail::clamp_coord(y + dy, h));
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
      std::nth_element(window.begin(), mid, window.end());
      out(x, y) = *mid;
    }
  return out;
}

inline GrayImage bilateral_filter(const GrayImage& img, int radius, double sigma_space,
                                  double sigma_range) {
  if (radius < 1) throw std::invalid_argument("bilateral_filter: radius must be >= 1");
  if (sigma_space <= 0.0 || sigma_range <= 0.0)
    throw std::invalid_argument("bilateral_filter: sigmas must be > 0");
  const int w = img.width(), h = img.height();
  GrayImage out(w, h);
  const int side = 2 * radius + 1;
  std::vector<double> spatial(static_cast<std::size_t>(side) * side);
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      spatial[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] =
          std::exp(-(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy) /
                   (2.0 * sigma_space * sigma_space));
  const double inv2sr2 = 1.0 / (2.0 * sigma_range * sigma_range);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double center = img(x, y);
      double num = 0.0, den = 0.0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const double v = img(detail::clamp_coord(x + dx, w), detail::clamp_coord(y + dy, h));
          const double d = v - center;
          const double wgt = spatial[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] *
                             std::exp(-d * d * inv2sr2);
          num += wgt * v;
          den += wgt;
        }
      out(x, y) = clamp01(num / den);
    }
  return out;
}

// Local-adaptive Wiener: per-pixel window mean u and variance s2, noise power
// estimated as the mean of s2 over the image, gain = max(s2-v,0)/max(s2,v).
inline GrayImage wiener_filter(const GrayImage& img, int k) {
  detail::require_odd_window(k, "wiener_filter");
  if (img.empty()) throw std::invalid_argument("wiener_filter: empty image");
  const int w = img.width(), h = img.height(), r = k / 2;
  std::vector<double> mean(static_cast<std::size_t>(w) * h);
  std::vector<double> var(static_cast<std::size_t>(w) * h);
  const double inv = 1.0 / (static_cast<double>(k) * k);
  double noise = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, sum2 = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double v = img(detail::clamp_coord(x + dx, w), detail::clamp_coord(y + dy, h));
          sum += v;
          sum2 += v * v;
        }
      const double u = sum * inv;
      const double s2 = std::max(0.0, sum2 * inv - u * u);
      mean[static_cast<std::size_t>(y) * w + x] = u;
      var[static_cast<std::size_t>(y) * w + x] = s2;
      noise += s2;
    }
  noise /= static_cast<double>(w) * h;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double s2 = var[i];
      const double den = std::max(s2, noise);
      const double gain = den > 0.0 ? std::max(s2 - noise, 0.0) / den : 0.0;
      out(x, y) = clamp01(mean[i] + gain * (img(x, y) - mean[i]));
    }
  return out;
}

struct FilterSpec {
  enum class Kind { mean, median, bilateral, wiener };
  Kind kind = Kind::mean;
  int k = 3;                  // window side for mean/median/wiener
  int radius = 2;             // bilateral
  double sigma_space = 2.0;   // bilateral
  double sigma_range = 0.1;   // bilateral
};

inline GrayImage apply_filter(const GrayImage& img, const FilterSpec& spec) {
  switch (spec.kind) {
    case FilterSpec::Kind::mean: return mean_filter(img, spec.k);
    case FilterSpec::Kind::median: return median_filter(img, spec.k);
    case FilterSpec::Kind::bilateral:
      return bilateral_filter(img, spec.radius, spec.sigma_space, spec.sigma_range);
    case FilterSpec::Kind::wiener: return wiener_filter(img, spec.k);
  }
  throw std::logic_error("apply_filter: bad kind");
}

// "mean:3" | "median:3" | "bilateral:2,2.0,0.1" | "wiener:3"
// a bare name keeps the default parameters
inline FilterSpec parse_filter_spec(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  FilterSpec spec;
  auto parse_window = [&](FilterSpec::Kind k) {
    spec.kind = k;
    if (args.empty()) return;
    try {
      spec.k = std::stoi(args);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad window in filter spec '" + text + "'");
    }
  };
  if (kind == "mean") parse_window(FilterSpec::Kind::mean);
  else if (kind == "median") parse_window(FilterSpec::Kind::median);
  else if (kind == "wiener") parse_window(FilterSpec::Kind::wiener);
  else if (kind == "bilateral") {
    spec.kind = FilterSpec::Kind::bilateral;
    if (!args.empty()) {
      std::vector<std::string> parts;
      std::size_t start = 0;
      while (true) {
        const auto comma = args.find(',', start);
        parts.push_back(args.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (parts.size() != 3)
        throw std::invalid_argument("bilateral spec needs radius,sigma_space,sigma_range");
      try {
        spec.radius = std::stoi(parts[0]);
        spec.sigma_space = std::stod(parts[1]);
        spec.sigma_range = std::stod(parts[2]);
      } catch (const std::exception&) {
        throw std::invalid_argument("bad bilateral parameters in '" + text + "'");
      }
    }
  } else {
    throw std::invalid_argument("unknown filter '" + kind + "'");
  }
  if (spec.kind != FilterSpec::Kind::bilateral) detail::require_odd_window(spec.k, "filter spec");
  else if (spec.radius < 1 || spec.sigma_space <= 0.0 || spec.sigma_range <= 0.0)
    throw std::invalid_argument("bad bilateral parameters in '" + text + "'");
  return spec;
}

inline std::string format_filter_spec(const FilterSpec& spec) {
  auto num = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s += '0';
    return s;
  };
  switch (spec.kind) {
    case FilterSpec::Kind::mean: return "mean:" + std::to_string(spec.k);
    case FilterSpec::Kind::median: return "median:" + std::to_string(spec.k);
    case FilterSpec::Kind::wiener: return "wiener:" + std::to_string(spec.k);
    case FilterSpec::Kind::bilateral:
      return "bilateral:" + std::to_string(spec.radius) + "," + num(spec.sigma_space) + "," +
             num(spec.sigma_range);
  }
  throw std::logic_error("format_filter_spec: bad kind");
}

}  // namespace sss
