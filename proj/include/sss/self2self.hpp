#pragma once

// Self-supervised single-image denoiser. Bernoulli-sampled pairs from one
// noisy image train a masked U-Net (partial convolutions in the encoder,
// dropout in the decoder); the restored image is the average of many
// dropout-active forward passes over freshly masked copies of the input.

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sss/image.hpp"
#include "sss/nn.hpp"
#include "sss/rng.hpp"
#include "sss/tensor.hpp"

namespace sss {

struct TrainConfig {
  double keep_prob = 0.7;     // Bernoulli probability that a pixel stays visible
  double dropout_rate = 0.3;  // decoder dropout, also active at prediction time
  double lr = 1e-4;
  int iterations = 5000;
  std::uint64_t seed = 1;
  double lrelu_alpha = 0.1;
  int channels_enc = 48;
  int channels_dec = 96;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Debug switch: score the loss on the kept pixels instead of the held-out
  // complement. With the complement target zero there, training collapses
  // toward zero output — kept for comparison experiments only.
  bool literal_masked_loss = false;
};

struct PredictConfig {
  int ensemble = 50;
  std::uint64_t seed = 1;
};

inline void validate_train_config(const TrainConfig& c) {
  if (!(c.keep_prob > 0.0 && c.keep_prob < 1.0))
    throw std::invalid_argument("train config: keep_prob must be in (0,1)");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0))
    throw std::invalid_argument("train config: dropout_rate must be in [0,1)");
  if (!(c.lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
  if (c.iterations < 1) throw std::invalid_argument("train config: iterations must be >= 1");
  if (!(c.lrelu_alpha > 0.0 && c.lrelu_alpha <= 1.0))
    throw std::invalid_argument("train config: lrelu_alpha must be in (0,1]");
  if (c.channels_enc < 1 || c.channels_dec < 1)
    throw std::invalid_argument("train config: channel counts must be positive");
}

// Binary sampling matrix S; bit = 1 keeps the pixel visible to the network.
struct BernoulliMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, values 0 or 1

  BernoulliMask() = default;
  BernoulliMask(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("BernoulliMask: non-positive dims");
    bits.assign(static_cast<std::size_t>(w) * h, 0);
  }
  std::size_t count_ones() const {
    std::size_t n = 0;
    for (std::uint8_t b : bits) n += b;
    return n;
  }
};

inline BernoulliMask sample_mask(int width, int height, double p, RngStream& rng) {
  BernoulliMask m(width, height);
  for (auto& b : m.bits) b = rng.bernoulli(p) ? 1 : 0;
  return m;
}

// One Bernoulli partition of the noisy image y: R = S.y carries the visible
// pixels, Rbar = (1-S).y the hidden ones; R + Rbar == y pixel for pixel.
struct SamplePair {
  GrayImage input_r;
  GrayImage target_rbar;
  BernoulliMask mask_s;
};

inline SamplePair make_sample_pair(const GrayImage& y, BernoulliMask mask) {
  if (mask.width != y.width() || mask.height != y.height())
    throw std::invalid_argument("make_sample_pair: mask dims mismatch");
  GrayImage r(y.width(), y.height());
  GrayImage rbar(y.width(), y.height());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    const std::uint8_t b = mask.bits[i];
    if (b != 0 && b != 1) throw std::invalid_argument("make_sample_pair: mask must be binary");
    (b ? r : rbar).data()[i] = y.data()[i];
  }
  return {std::move(r), std::move(rbar), std::move(mask)};
}

inline SamplePair sample_pair(const GrayImage& y, double p, RngStream& rng) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("sample_pair: p must be in (0,1)");
  return make_sample_pair(y, sample_mask(y.width(), y.height(), p, rng));
}

// Six encoder blocks (pconv3x3 + lrelu, pooled after the first five), five
// decoder blocks (2x upsample + skip concat + two conv3x3/lrelu/dropout),
// and a 1-channel conv head squashed through a sigmoid.
template <typename T>
struct UNetModel {
  TrainConfig config;
  int width = 0;   // spatial dims the model was built for
  int height = 0;

  std::array<Parameter<T>, 6> enc_w, enc_b;
  std::array<Parameter<T>, 5> dec_w1, dec_b1, dec_w2, dec_b2;
  Parameter<T> head_w, head_b;

  // fixed traversal order; checkpoints and optimizer state rely on it
  template <typename F>
  void for_each_parameter(F&& f) {
    for (int i = 0; i < 6; ++i) {
      f(enc_w[i]);
      f(enc_b[i]);
    }
    for (int i = 0; i < 5; ++i) {
      f(dec_w1[i]);
      f(dec_b1[i]);
      f(dec_w2[i]);
      f(dec_b2[i]);
    }
    f(head_w);
    f(head_b);
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for_each_parameter([&n](Parameter<T>& p) { n += p.value.size(); });
    return n;
  }
};

namespace detail {

template <typename T>
Parameter<T> make_conv_param(const std::string& name, int out_ch, int in_ch, int k,
                             double alpha, RngStream& rng) {
  Tensor<T> w({out_ch, in_ch, k, k});
  const double gain = std::sqrt(2.0 / (1.0 + alpha * alpha));
  const double bound = gain * std::sqrt(3.0 / (static_cast<double>(in_ch) * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<T>((2.0 * rng.uniform01() - 1.0) * bound);
  return Parameter<T>(name, std::move(w));
}

template <typename T>
Parameter<T> make_bias_param(const std::string& name, int ch) {
  return Parameter<T>(name, Tensor<T>({ch}));
}

template <typename T>
Tensor<T> tensor_from_image(const GrayImage& img) {
  Tensor<T> t({1, img.height(), img.width()});
  for (int i = 0; i < img.width() * img.height(); ++i)
    t[i] = static_cast<T>(img.data()[i]);
  return t;
}

template <typename T>
Tensor<T> tensor_from_mask(const BernoulliMask& m) {
  Tensor<T> t({1, m.height, m.width});
  for (std::size_t i = 0; i < m.bits.size(); ++i) t[i] = static_cast<T>(m.bits[i]);
  return t;
}

// validity masks shrink through pooling by OR over each 2x2 window
template <typename T>
Tensor<T> or_pool_mask(const Tensor<T>& m) {
  const int H = m.dim(1), W = m.dim(2);
  if (H % 2 != 0 || W % 2 != 0) throw std::invalid_argument("or_pool_mask: odd dims");
  Tensor<T> out({1, H / 2, W / 2});
  for (int y = 0; y < H / 2; ++y)
    for (int x = 0; x < W / 2; ++x) {
      const bool any = m.at3(0, 2 * y, 2 * x) > T(0) || m.at3(0, 2 * y, 2 * x + 1) > T(0) ||
                       m.at3(0, 2 * y + 1, 2 * x) > T(0) ||
                       m.at3(0, 2 * y + 1, 2 * x + 1) > T(0);
      out.at3(0, y, x) = any ? T(1) : T(0);
    }
  return out;
}

}  // namespace detail

// Kaiming-uniform weights (leaky-ReLU gain, fan-in), zero biases; draw order
// is the parameter traversal order, so a seed pins every weight
template <typename T>
UNetModel<T> build_unet(const TrainConfig& cfg, int width, int height) {
  validate_train_config(cfg);
  if (width < 32 || height < 32 || width % 32 != 0 || height % 32 != 0)
    throw std::invalid_argument("build_unet: dims must be positive multiples of 32");
  UNetModel<T> m;
  m.config = cfg;
  m.width = width;
  m.height = height;
  RngStream rng(derive_seed(cfg.seed, stream_tag::weight_init));
  const int ce = cfg.channels_enc;
  const int cd = cfg.channels_dec;
  for (int i = 0; i < 6; ++i) {
    const std::string tag = "enc" + std::to_string(i + 1);
    m.enc_w[i] = detail::make_conv_param<T>(tag + ".w", ce, i == 0 ? 1 : ce, 3,
                                            cfg.lrelu_alpha, rng);
    m.enc_b[i] = detail::make_bias_param<T>(tag + ".b", ce);
  }
  for (int i = 0; i < 5; ++i) {
    const std::string tag = "dec" + std::to_string(i + 1);
    const int in1 = i == 0 ? 2 * ce : cd + ce;
    m.dec_w1[i] = detail::make_conv_param<T>(tag + ".conv1.w", cd, in1, 3, cfg.lrelu_alpha, rng);
    m.dec_b1[i] = detail::make_bias_param<T>(tag + ".conv1.b", cd);
    m.dec_w2[i] = detail::make_conv_param<T>(tag + ".conv2.w", cd, cd, 3, cfg.lrelu_alpha, rng);
    m.dec_b2[i] = detail::make_bias_param<T>(tag + ".conv2.b", cd);
  }
  m.head_w = detail::make_conv_param<T>("head.w", 1, cd, 3, cfg.lrelu_alpha, rng);
  m.head_b = detail::make_bias_param<T>("head.b", 1);
  return m;
}

// Builds the network on the tape; returns the sigmoid output node.
template <typename T>
int unet_forward(Graph<T>& g, UNetModel<T>& m, int input, const Tensor<T>& input_mask,
                 RngStream& dropout_rng, bool dropout_active) {
  const Tensor<T>& xv = g.value(input);
  if (xv.rank() != 3 || xv.dim(0) != 1)
    throw std::invalid_argument("unet_forward: input not (1,H,W)");
  if (xv.dim(1) != m.height || xv.dim(2) != m.width)
    throw std::invalid_argument("unet_forward: dims do not match the model");

  std::array<int, 6> ew, eb;
  std::array<int, 5> dw1, db1, dw2, db2;
  for (int i = 0; i < 6; ++i) {
    ew[i] = g.param(m.enc_w[i]);
    eb[i] = g.param(m.enc_b[i]);
  }
  for (int i = 0; i < 5; ++i) {
    dw1[i] = g.param(m.dec_w1[i]);
    db1[i] = g.param(m.dec_b1[i]);
    dw2[i] = g.param(m.dec_w2[i]);
    db2[i] = g.param(m.dec_b2[i]);
  }
  const int hw = g.param(m.head_w);
  const int hb = g.param(m.head_b);

  const T alpha = static_cast<T>(m.config.lrelu_alpha);
  const T rate = static_cast<T>(m.config.dropout_rate);

  int cur = input;
  Tensor<T> mask = input_mask;
  std::array<int, 5> skips{};
  for (int i = 0; i < 6; ++i) {
    auto [conv, newmask] = g.pconv2d(cur, mask, ew[i], eb[i], 1);
    cur = g.lrelu(conv, alpha);
    mask = std::move(newmask);
    if (i < 5) {
      skips[i] = cur;
      cur = g.maxpool2d(cur);
      mask = detail::or_pool_mask(mask);
    }
  }
  for (int i = 0; i < 5; ++i) {
    cur = g.upsample_concat(cur, skips[4 - i]);
    cur = g.conv2d(cur, dw1[i], db1[i], 1);
    cur = g.lrelu(cur, alpha);
    cur = g.dropout(cur, rate, dropout_rng, dropout_active);
    cur = g.conv2d(cur, dw2[i], db2[i], 1);
    cur = g.lrelu(cur, alpha);
    cur = g.dropout(cur, rate, dropout_rng, dropout_active);
  }
  cur = g.conv2d(cur, hw, hb, 1);
  return g.sigmoid(cur);
}

// Single inference pass outside any training loop (no gradients kept).
template <typename T>
Tensor<T> forward(UNetModel<T>& m, const GrayImage& masked_input, const BernoulliMask& mask_s,
                  bool dropout_active, RngStream& rng) {
  Graph<T> g;
  const int x = g.leaf(detail::tensor_from_image<T>(masked_input));
  const int out = unet_forward(g, m, x, detail::tensor_from_mask<T>(mask_s), rng, dropout_active);
  return g.value(out);
}

using TrainObserver = std::function<void(int iteration, double loss)>;

// Adam on the masked loss of freshly sampled Bernoulli pairs; returns the
// per-iteration loss trace. Deterministic given (y, model.config).
template <typename T>
std::vector<double> train(UNetModel<T>& model, const GrayImage& noisy,
                          const TrainObserver& observer = nullptr) {
  const TrainConfig& cfg = model.config;
  validate_train_config(cfg);
  if (noisy.width() != model.width || noisy.height() != model.height)
    throw std::invalid_argument("train: image dims do not match the model");
  RngStream pair_rng(derive_seed(cfg.seed, stream_tag::pair_sampling));
  RngStream drop_rng(derive_seed(cfg.seed, stream_tag::dropout));

  std::vector<AdamState<T>> states;
  model.for_each_parameter(
      [&states](Parameter<T>& p) { states.emplace_back(p.value.shape()); });

  std::vector<double> losses;
  losses.reserve(cfg.iterations);
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    SamplePair pair = sample_pair(noisy, cfg.keep_prob, pair_rng);
    Graph<T> g;
    const int x = g.leaf(detail::tensor_from_image<T>(pair.input_r));
    const Tensor<T> mask = detail::tensor_from_mask<T>(pair.mask_s);
    const int out = unet_forward(g, model, x, mask, drop_rng, true);
    const int loss = g.masked_loss(out, detail::tensor_from_image<T>(pair.target_rbar), mask,
                                   cfg.literal_masked_loss);
    g.backward(loss);
    std::size_t si = 0;
    model.for_each_parameter([&](Parameter<T>& p) {
      adam_step(p, states[si++], static_cast<T>(cfg.lr), static_cast<T>(cfg.adam_beta1),
                static_cast<T>(cfg.adam_beta2), static_cast<T>(cfg.adam_eps));
    });
    const double lv = static_cast<double>(g.value(loss)[0]);
    losses.push_back(lv);
    if (observer) observer(iter, lv);
  }
  return losses;
}

// build + train in one call
template <typename T>
UNetModel<T> train(const GrayImage& noisy, const TrainConfig& cfg,
                   const TrainObserver& observer = nullptr) {
  UNetModel<T> model = build_unet<T>(cfg, noisy.width(), noisy.height());
  train(model, noisy, observer);
  return model;
}

// Average of `ensemble` dropout-active passes, each on an independently
// masked copy of the input; one stream seeds both the masks and the dropout,
// so (model, y, cfg) pins the result bit for bit.
template <typename T>
GrayImage predict_ensemble(UNetModel<T>& model, const GrayImage& noisy,
                           const PredictConfig& cfg) {
  if (cfg.ensemble < 1) throw std::invalid_argument("predict: ensemble must be >= 1");
  if (noisy.width() != model.width || noisy.height() != model.height)
    throw std::invalid_argument("predict: image dims do not match the model");
  RngStream rng(derive_seed(cfg.seed, stream_tag::prediction));
  const int w = noisy.width(), h = noisy.height();
  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);
  for (int n = 0; n < cfg.ensemble; ++n) {
    SamplePair pair = sample_pair(noisy, model.config.keep_prob, rng);
    Graph<T> g;
    const int x = g.leaf(detail::tensor_from_image<T>(pair.input_r));
    const int out =
        unet_forward(g, model, x, detail::tensor_from_mask<T>(pair.mask_s), rng, true);
    const Tensor<T>& ov = g.value(out);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(ov[i]);
  }
  GrayImage result(w, h);
  for (std::size_t i = 0; i < acc.size(); ++i)
    result.data()[i] = clamp01(acc[i] / cfg.ensemble);
  return result;
}

struct DenoiseResult {
  GrayImage image;
  std::vector<double> losses;
};

// pad to a pooling-friendly size, train on the padded image, predict, crop
template <typename T>
DenoiseResult denoise_single(const GrayImage& noisy, const TrainConfig& tcfg,
                             const PredictConfig& pcfg, const TrainObserver& observer = nullptr,
                             UNetModel<T>* trained = nullptr) {
  PaddedImage padded = pad_reflect(noisy, 32);
  UNetModel<T> model = build_unet<T>(tcfg, padded.image.width(), padded.image.height());
  std::vector<double> losses = train(model, padded.image, observer);
  GrayImage out = predict_ensemble(model, padded.image, pcfg);
  GrayImage cropped = crop(out, 0, 0, padded.original_width, padded.original_height);
  if (trained) *trained = std::move(model);
  return {std::move(cropped), std::move(losses)};
}

}  // namespace sss
