#pragma once

// The four evaluation indexes used by the benchmark tables:
//   MSE/PSNR  (peak^2 over mean squared error, in dB)
//   SSIM      l^alpha * c^beta * s^gamma over Gaussian-weighted local windows
//   FI        mean / population std of the denoised image
//   EPI       ratio of summed four-direction adjacent-pixel differences,
//             denoised over raw
//
// PSNR of identical images and FI/EPI of constant images are not numbers;
// these return empty optionals so callers can annotate instead of printing
// garbage.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sss/image.hpp"

namespace sss {

struct SSIMConfig {
  int window = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
};

namespace detail {

inline void require_same_dims(const GrayImage& a, const GrayImage& b, const char* who) {
  if (a.width() != b.width() || a.height() != b.height())
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

// separable valid-mode correlation with a 1D kernel, horizontal then vertical
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                        const std::vector<double>& kernel) {
  const int n = static_cast<int>(kernel.size());
  const int cw = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(cw) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < cw; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += kernel[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * cw + x] = s;
    }
  const int ch = h - n + 1;
  std::vector<double> out(static_cast<std::size_t>(cw) * ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += kernel[i] * tmp[static_cast<std::size_t>(y + i) * cw + x];
      out[static_cast<std::size_t>(y) * cw + x] = s;
    }
  return out;
}

inline std::vector<double> gaussian_kernel(int n, double sigma) {
  std::vector<double> k(n);
  const int r = n / 2;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace detail

inline double mse(const GrayImage& a, const GrayImage& b) {
  detail::require_same_dims(a, b, "mse");
  double sum = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

// empty optional means the images are identical (MSE = 0, PSNR unbounded)
inline std::optional<double> psnr(const GrayImage& a, const GrayImage& b, double peak = 1.0) {
  if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be > 0");
  const double e = mse(a, b);
  if (e == 0.0) return std::nullopt;
  return 10.0 * std::log10(peak * peak / e);
}

inline double ssim(const GrayImage& a, const GrayImage& b, const SSIMConfig& cfg = {}) {
  detail::require_same_dims(a, b, "ssim");
  if (cfg.window < 3 || cfg.window % 2 == 0)
    throw std::invalid_argument("ssim: window must be odd and >= 3");
  if (a.width() < cfg.window || a.height() < cfg.window)
    throw std::invalid_argument("ssim: image smaller than window");
  if (cfg.peak <= 0.0 || cfg.k1 <= 0.0 || cfg.k2 <= 0.0)
    throw std::invalid_argument("ssim: peak and k1,k2 must be > 0");

  const int w = a.width(), h = a.height();
  const auto kernel = detail::gaussian_kernel(cfg.window, cfg.window_sigma);
  std::vector<double> aa(a.data()), bb(b.data()), a2(a.size()), b2(a.size()), ab(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    a2[i] = aa[i] * aa[i];
    b2[i] = bb[i] * bb[i];
    ab[i] = aa[i] * bb[i];
  }
  const auto mu_a = detail::filter_valid(aa, w, h, kernel);
  const auto mu_b = detail::filter_valid(bb, w, h, kernel);
  const auto m_a2 = detail::filter_valid(a2, w, h, kernel);
  const auto m_b2 = detail::filter_valid(b2, w, h, kernel);
  const auto m_ab = detail::filter_valid(ab, w, h, kernel);

  const double c1 = cfg.k1 * cfg.peak * cfg.k1 * cfg.peak;
  const double c2 = cfg.k2 * cfg.peak * cfg.k2 * cfg.peak;
  const double c3 = c2 / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ua = mu_a[i], ub = mu_b[i];
    const double va = std::max(0.0, m_a2[i] - ua * ua);
    const double vb = std::max(0.0, m_b2[i] - ub * ub);
    const double cov = m_ab[i] - ua * ub;
    const double sa = std::sqrt(va), sb = std::sqrt(vb);
    const double l = (2.0 * ua * ub + c1) / (ua * ua + ub * ub + c1);
    const double c = (2.0 * sa * sb + c2) / (va + vb + c2);
    const double s = (cov + c3) / (sa * sb + c3);
    const double lv = cfg.alpha == 1.0 ? l : std::pow(l, cfg.alpha);
    const double cv = cfg.beta == 1.0 ? c : std::pow(c, cfg.beta);
    const double sv = cfg.gamma == 1.0 ? s : std::pow(s, cfg.gamma);
    total += lv * cv * sv;
  }
  return total / static_cast<double>(mu_a.size());
}

// empty optional means undefined (constant image, zero standard deviation)
inline std::optional<double> fi(const GrayImage& img) {
  if (img.empty()) throw std::invalid_argument("fi: empty image");
  // a constant image has zero spread by definition; testing min==max avoids
  // the rounding dust a mean-based variance would leave behind
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  if (*lo == *hi) return std::nullopt;
  double sum = 0.0;
  for (double v : img.data()) sum += v;
  const double mean = sum / static_cast<double>(img.size());
  double var = 0.0;
  for (double v : img.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(img.size());
  if (var == 0.0) return std::nullopt;
  return mean / std::sqrt(var);
}

namespace detail {

// sum of |difference| over adjacent pairs: right, down, down-right, down-left
inline double directional_difference_sum(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  double sum = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = img(x, y);
      if (x + 1 < w) sum += std::abs(v - img(x + 1, y));
      if (y + 1 < h) {
        sum += std::abs(v - img(x, y + 1));
        if (x + 1 < w) sum += std::abs(v - img(x + 1, y + 1));
        if (x - 1 >= 0) sum += std::abs(v - img(x - 1, y + 1));
      }
    }
  return sum;
}

}  // namespace detail

// empty optional means undefined (constant raw image, zero denominator)
inline std::optional<double> epi(const GrayImage& denoised, const GrayImage& raw) {
  detail::require_same_dims(denoised, raw, "epi");
  const double den = detail::directional_difference_sum(raw);
  if (den == 0.0) return std::nullopt;
  return detail::directional_difference_sum(denoised) / den;
}

}  // namespace sss
