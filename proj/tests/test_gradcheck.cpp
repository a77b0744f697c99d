#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "sss/nn.hpp"
#include "sss/rng.hpp"
#include "sss/self2self.hpp"
#include "sss/tensor.hpp"
#include "testutil.hpp"

// Central finite-difference checks in double precision for every layer and
// for full-network composites. Inputs are kept away from the lrelu kink and
// maxpool ties so the loss is differentiable at the evaluation point.

using sss::Graph;
using sss::Parameter;
using sss::RngStream;
using sss::Tensor;

namespace {

constexpr double kTol = 1e-5;

Tensor<double> random_tensor(const std::vector<int>& shape, RngStream& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.uniform01();
  return t;
}

// values with pairwise gaps of at least 1/101, safely wider than the probe
Tensor<double> distinct_tensor(const std::vector<int>& shape) {
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>((i * 37 + 5) % 101) / 101.0;
  return t;
}

// mean of squares over every pixel, expressed through masked_loss so the
// whole scalar path is the one used in training
int square_mean(Graph<double>& g, int node) {
  const Tensor<double> zeros(g.value(node).shape());
  return g.masked_loss(node, zeros, zeros);
}

}  // namespace

TEST_CASE("conv2d gradients", "[gradcheck]") {
  RngStream rng(70);
  Tensor<double> x = random_tensor({2, 6, 6}, rng);
  Parameter<double> w("w", random_tensor({3, 2, 3, 3}, rng));
  Parameter<double> b("b", random_tensor({3}, rng));

  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    const int xn = g.leaf(x, true);
    const int l = square_mean(g, g.conv2d(xn, g.param(w), g.param(b), 1));
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, x, gx) < kTol);
  CHECK(oracle::grad_check<double>(f, w.value, w.grad) < kTol);
  CHECK(oracle::grad_check<double>(f, b.value, b.grad) < kTol);
}

TEST_CASE("pconv2d gradients under a fixed mask", "[gradcheck]") {
  RngStream rng(71);
  Tensor<double> x = random_tensor({2, 6, 6}, rng);
  Tensor<double> mask({1, 6, 6});
  for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(0.6) ? 1.0 : 0.0;
  Parameter<double> w("w", random_tensor({2, 2, 3, 3}, rng));
  Parameter<double> b("b", random_tensor({2}, rng));

  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    const int xn = g.leaf(x, true);
    auto [out, newmask] = g.pconv2d(xn, mask, g.param(w), g.param(b), 1);
    const int l = square_mean(g, out);
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, x, gx) < kTol);
  CHECK(oracle::grad_check<double>(f, w.value, w.grad) < kTol);
  CHECK(oracle::grad_check<double>(f, b.value, b.grad) < kTol);
}

TEST_CASE("lrelu gradient away from the kink", "[gradcheck]") {
  RngStream rng(72);
  Tensor<double> x({2, 5, 5});
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double mag = 0.2 + 0.8 * rng.uniform01();  // |x| >= 0.2 >> probe step
    x[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    const int xn = g.leaf(x, true);
    const int l = square_mean(g, g.lrelu(xn, 0.1));
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, x, gx) < kTol);
}

TEST_CASE("maxpool gradient on tie-free input", "[gradcheck]") {
  Tensor<double> x = distinct_tensor({2, 6, 6});
  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    const int xn = g.leaf(x, true);
    const int l = square_mean(g, g.maxpool2d(xn));
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, x, gx) < kTol);
}

TEST_CASE("upsample_concat gradients on both inputs", "[gradcheck]") {
  RngStream rng(73);
  Tensor<double> low = random_tensor({2, 3, 3}, rng);
  Tensor<double> skip = random_tensor({3, 6, 6}, rng);
  Tensor<double> gl, gs;
  auto eval = [&](bool back) {
    Graph<double> g;
    const int ln = g.leaf(low, true);
    const int sn = g.leaf(skip, true);
    const int l = square_mean(g, g.upsample_concat(ln, sn));
    if (back) {
      g.backward(l);
      gl = g.grad(ln);
      gs = g.grad(sn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, low, gl) < kTol);
  CHECK(oracle::grad_check<double>(f, skip, gs) < kTol);
}

TEST_CASE("dropout gradient under a replayed mask", "[gradcheck]") {
  RngStream rng(74);
  Tensor<double> x = random_tensor({2, 5, 5}, rng);
  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    RngStream drop(75);  // same stream every evaluation -> same dropout mask
    const int xn = g.leaf(x, true);
    const int l = square_mean(g, g.dropout(xn, 0.3, drop, true));
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, x, gx) < kTol);
}

TEST_CASE("sigmoid gradient", "[gradcheck]") {
  RngStream rng(76);
  Tensor<double> x = random_tensor({1, 6, 6}, rng, -3.0, 3.0);
  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    const int xn = g.leaf(x, true);
    const int l = square_mean(g, g.sigmoid(xn));
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, x, gx) < kTol);
}

TEST_CASE("masked loss gradient in both selection modes", "[gradcheck]") {
  RngStream rng(77);
  Tensor<double> pred = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
  Tensor<double> target = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
  Tensor<double> mask({1, 6, 6});
  for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  mask[0] = 0.0;  // keep both selections nonempty
  mask[1] = 1.0;

  for (bool on_kept : {false, true}) {
    Tensor<double> gp;
    auto eval = [&](bool back) {
      Graph<double> g;
      const int pn = g.leaf(pred, true);
      const int l = g.masked_loss(pn, target, mask, on_kept);
      if (back) {
        g.backward(l);
        gp = g.grad(pn);
      }
      return static_cast<double>(g.value(l)[0]);
    };
    eval(true);
    auto f = [&] { return eval(false); };
    CHECK(oracle::grad_check<double>(f, pred, gp) < kTol);
  }
}

TEST_CASE("composite graph with every layer type", "[gradcheck]") {
  // miniature two-level U-Net shape at 16x16 with pconv encoder, pooled
  // masks, skip concatenation, dropout decoder, sigmoid head, masked loss
  RngStream rng(78);
  Tensor<double> y = random_tensor({1, 16, 16}, rng, 0.1, 0.9);
  Tensor<double> mask({1, 16, 16});
  for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(0.7) ? 1.0 : 0.0;
  Tensor<double> input(y.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) input[i] = y[i] * mask[i];

  Parameter<double> e1("e1", random_tensor({3, 1, 3, 3}, rng, -0.4, 0.4));
  Parameter<double> e1b("e1b", random_tensor({3}, rng, -0.1, 0.1));
  Parameter<double> e2("e2", random_tensor({3, 3, 3, 3}, rng, -0.4, 0.4));
  Parameter<double> e2b("e2b", random_tensor({3}, rng, -0.1, 0.1));
  Parameter<double> d1("d1", random_tensor({4, 6, 3, 3}, rng, -0.3, 0.3));
  Parameter<double> d1b("d1b", random_tensor({4}, rng, -0.1, 0.1));
  Parameter<double> hw("hw", random_tensor({1, 4, 3, 3}, rng, -0.3, 0.3));
  Parameter<double> hb("hb", random_tensor({1}, rng, -0.1, 0.1));

  Tensor<double> gx;
  auto eval = [&](bool back) {
    Graph<double> g;
    RngStream drop(79);
    const int xn = g.leaf(input, true);
    auto [c1, m1] = g.pconv2d(xn, mask, g.param(e1), g.param(e1b), 1);
    const int a1 = g.lrelu(c1, 0.1);
    const int p1 = g.maxpool2d(a1);
    const Tensor<double> m1p = sss::detail::or_pool_mask(m1);
    auto [c2, m2] = g.pconv2d(p1, m1p, g.param(e2), g.param(e2b), 1);
    const int a2 = g.lrelu(c2, 0.1);
    const int up = g.upsample_concat(a2, a1);
    int cur = g.conv2d(up, g.param(d1), g.param(d1b), 1);
    cur = g.lrelu(cur, 0.1);
    cur = g.dropout(cur, 0.3, drop, true);
    cur = g.conv2d(cur, g.param(hw), g.param(hb), 1);
    cur = g.sigmoid(cur);
    const int l = g.masked_loss(cur, y, mask);
    if (back) {
      g.backward(l);
      gx = g.grad(xn);
    }
    return static_cast<double>(g.value(l)[0]);
  };
  eval(true);
  auto f = [&] { return eval(false); };
  CHECK(oracle::grad_check<double>(f, input, gx) < kTol);
  for (Parameter<double>* p : {&e1, &e1b, &e2, &e2b, &d1, &d1b, &hw, &hb}) {
    INFO("parameter " << p->name);
    CHECK(oracle::grad_check<double>(f, p->value, p->grad) < kTol);
  }
}

TEST_CASE("full network plus masked loss composite", "[gradcheck]") {
  // the real six-encoder/five-decoder graph at its smallest legal size,
  // with narrow channels so finite differences stay tractable
  sss::TrainConfig cfg;
  cfg.channels_enc = 2;
  cfg.channels_dec = 3;
  cfg.seed = 5;
  sss::UNetModel<double> model = sss::build_unet<double>(cfg, 32, 32);

  const sss::GrayImage y = testutil::make_phantom(32, 32, 80);
  RngStream pair_rng(81);
  const sss::SamplePair pair = sss::sample_pair(y, cfg.keep_prob, pair_rng);

  Tensor<double> input({1, 32, 32}), target({1, 32, 32}), mask({1, 32, 32});
  for (int i = 0; i < 32 * 32; ++i) {
    input[i] = pair.input_r.data()[i];
    target[i] = pair.target_rbar.data()[i];
    mask[i] = pair.mask_s.bits[i];
  }

  auto eval = [&] {
    Graph<double> g;
    RngStream drop(82);  // replayed dropout masks
    const int xn = g.leaf(input);
    const int out = sss::unet_forward(g, model, xn, mask, drop, true);
    const int l = g.masked_loss(out, target, mask);
    return static_cast<double>(g.value(l)[0]);
  };

  // analytic pass
  {
    Graph<double> g;
    RngStream drop(82);
    const int xn = g.leaf(input);
    const int out = sss::unet_forward(g, model, xn, mask, drop, true);
    const int l = g.masked_loss(out, target, mask);
    g.backward(l);
  }

  double worst = 0.0;
  model.for_each_parameter([&](Parameter<double>& p) {
    const double rel = oracle::grad_check<double>(eval, p.value, p.grad);
    INFO("parameter " << p.name);
    CHECK(rel < kTol);
    worst = std::max(worst, rel);
  });
  CHECK(worst < kTol);
}
