#pragma once

// Reverse-mode autodiff over the fixed layer set of the denoising U-Net:
// convolution, partial convolution, leaky ReLU, 2x2 max pooling, nearest
// upsample + skip concatenation, inverted dropout, sigmoid, and the
// masked L2 loss.
//
// A Graph is a tape built fresh per forward pass; creation order is the
// topological order, so backward() just walks the nodes in reverse. Shape
// errors are raised at op entry. All loops run in a fixed order, so results
// are bit-reproducible run to run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sss/rng.hpp"
#include "sss/tensor.hpp"

namespace sss {

namespace kernels {

// dst += src
template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src)) throw std::invalid_argument("axpy: shape mismatch");
  T* d = dst.data();
  const T* s = src.data();
  const std::int64_t n = dst.size();
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

// fixed-lane dot product; the lane accumulators vectorize without needing
// float reassociation, and the reduction order is fixed
template <typename T>
T dot(const T* __restrict a, const T* __restrict b, int n) {
  constexpr int lanes = 8;
  T acc[lanes] = {};
  int i = 0;
  for (; i + lanes <= n; i += lanes)
    for (int j = 0; j < lanes; ++j) acc[j] += a[i + j] * b[i + j];
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  for (int step = lanes / 2; step > 0; step /= 2)
    for (int j = 0; j < step; ++j) acc[j] += acc[j + step];
  return acc[0] + tail;
}

// cross-correlation of (C,H,W) input with (O,C,kh,kw) weights, zero padding
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias,
                         int pad_y, int pad_x) {
  if (in.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: bad ranks");
  if (w.dim(1) != in.dim(0)) throw std::invalid_argument("conv2d: channel mismatch");
  if (pad_y < 0 || pad_x < 0) throw std::invalid_argument("conv2d: negative pad");
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (bias && (bias->rank() != 1 || bias->dim(0) != O))
    throw std::invalid_argument("conv2d: bad bias shape");
  const int Ho = H + 2 * pad_y - kh + 1;
  const int Wo = W + 2 * pad_x - kw + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: kernel exceeds padded input");
  Tensor<T> out({O, Ho, Wo});
  if (kh == 3 && kw == 3 && pad_y == 1 && pad_x == 1 && W >= 2) {
    // same-size 3x3 case (every conv in the network, and its input adjoint):
    // fuse the three kx taps into one pass over each row, so the output row
    // is loaded and stored once per three multiplies instead of once per one
    for (int o = 0; o < O; ++o) {
      T* outc = out.data() + static_cast<std::size_t>(o) * H * W;
      const T bv = bias ? (*bias)[o] : T(0);
      std::fill(outc, outc + static_cast<std::size_t>(H) * W, bv);
      for (int c = 0; c < C; ++c) {
        const T* inc = in.data() + static_cast<std::size_t>(c) * H * W;
        const T* wk = w.data() + (static_cast<std::size_t>(o) * C + c) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int oy0 = std::max(0, 1 - ky), oy1 = std::min(H, H + 1 - ky);
          const T w0 = wk[ky * 3 + 0], w1 = wk[ky * 3 + 1], w2 = wk[ky * 3 + 2];
          for (int oy = oy0; oy < oy1; ++oy) {
            const T* __restrict irow = inc + static_cast<std::size_t>(oy + ky - 1) * W;
            T* __restrict orow = outc + static_cast<std::size_t>(oy) * W;
            orow[0] += w1 * irow[0] + w2 * irow[1];
            for (int ox = 1; ox < W - 1; ++ox)
              orow[ox] += w0 * irow[ox - 1] + w1 * irow[ox] + w2 * irow[ox + 1];
            orow[W - 1] += w0 * irow[W - 2] + w1 * irow[W - 1];
          }
        }
      }
    }
    return out;
  }
  for (int o = 0; o < O; ++o) {
    T* outc = out.data() + static_cast<std::size_t>(o) * Ho * Wo;
    const T bv = bias ? (*bias)[o] : T(0);
    std::fill(outc, outc + static_cast<std::size_t>(Ho) * Wo, bv);
    for (int c = 0; c < C; ++c) {
      const T* inc = in.data() + static_cast<std::size_t>(c) * H * W;
      for (int ky = 0; ky < kh; ++ky) {
        const int oy0 = std::max(0, pad_y - ky);
        const int oy1 = std::min(Ho, H + pad_y - ky);
        for (int kx = 0; kx < kw; ++kx) {
          const T wv = w.at4(o, c, ky, kx);
          const int ox0 = std::max(0, pad_x - kx);
          const int ox1 = std::min(Wo, W + pad_x - kx);
          const int dx = kx - pad_x;
          for (int oy = oy0; oy < oy1; ++oy) {
            const T* __restrict irow = inc + static_cast<std::size_t>(oy + ky - pad_y) * W;
            T* __restrict orow = outc + static_cast<std::size_t>(oy) * Wo;
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * irow[ox + dx];
          }
        }
      }
    }
  }
  return out;
}

// adjoint wrt the input: correlate dout with channel-transposed, spatially
// flipped weights at pad' = k-1-pad
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dout, const Tensor<T>& w, int pad_y, int pad_x,
                                int in_h, int in_w) {
  const int O = w.dim(0), C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int bp_y = kh - 1 - pad_y;
  const int bp_x = kw - 1 - pad_x;
  if (bp_y < 0 || bp_x < 0)
    throw std::invalid_argument("conv2d_backward_input: pad larger than kernel-1");
  Tensor<T> wt({C, O, kh, kw});
  for (int o = 0; o < O; ++o)
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          wt.at4(c, o, kh - 1 - ky, kw - 1 - kx) = w.at4(o, c, ky, kx);
  Tensor<T> din = conv2d_forward<T>(dout, wt, nullptr, bp_y, bp_x);
  if (din.dim(1) != in_h || din.dim(2) != in_w)
    throw std::logic_error("conv2d_backward_input: dim mismatch");
  return din;
}

// Pairs of output channels share each input-row load, and the 8-lane
// accumulators live across rows (two ymm registers); this keeps the
// reduction order fixed while staying on par with the forward kernel.
template <typename T>
Tensor<T> conv2d_backward_weights(const Tensor<T>& in, const Tensor<T>& dout, int pad_y,
                                  int pad_x, int kh, int kw) {
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int O = dout.dim(0), Ho = dout.dim(1), Wo = dout.dim(2);
  Tensor<T> dw({O, C, kh, kw});
  constexpr int L = 8;
  constexpr int OB = 2;
  for (int ob = 0; ob < O; ob += OB) {
    const int oe = std::min(O, ob + OB);
    for (int c = 0; c < C; ++c) {
      const T* inc = in.data() + static_cast<std::size_t>(c) * H * W;
      for (int ky = 0; ky < kh; ++ky) {
        const int oy0 = std::max(0, pad_y - ky);
        const int oy1 = std::min(Ho, H + pad_y - ky);
        for (int kx = 0; kx < kw; ++kx) {
          const int ox0 = std::max(0, pad_x - kx);
          const int ox1 = std::min(Wo, W + pad_x - kx);
          const int dx = kx - pad_x;
          T acc[OB][L] = {};
          T tail[OB] = {};
          const int nfull = ox0 + ((ox1 - ox0) / L) * L;
          for (int oy = oy0; oy < oy1; ++oy) {
            const T* __restrict irow = inc + static_cast<std::size_t>(oy + ky - pad_y) * W + dx;
            for (int o = ob; o < oe; ++o) {
              const T* __restrict drow =
                  dout.data() + (static_cast<std::size_t>(o) * Ho + oy) * Wo;
              for (int ox = ox0; ox < nfull; ox += L)
                for (int j = 0; j < L; ++j) acc[o - ob][j] += drow[ox + j] * irow[ox + j];
              for (int ox = nfull; ox < ox1; ++ox) tail[o - ob] += drow[ox] * irow[ox];
            }
          }
          for (int o = ob; o < oe; ++o) {
            T* lanes = acc[o - ob];
            for (int step = L / 2; step > 0; step /= 2)
              for (int j = 0; j < step; ++j) lanes[j] += lanes[j + step];
            dw.at4(o, c, ky, kx) = lanes[0] + tail[o - ob];
          }
        }
      }
    }
  }
  return dw;
}

template <typename T>
Tensor<T> conv2d_backward_bias(const Tensor<T>& dout) {
  const int O = dout.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(dout.dim(1)) * dout.dim(2);
  Tensor<T> db({O});
  for (int o = 0; o < O; ++o) {
    const T* p = dout.data() + o * plane;
    T s = T(0);
    for (std::int64_t i = 0; i < plane; ++i) s += p[i];
    db[o] = s;
  }
  return db;
}

// per-window sum of a (1,H,W) mask under zero padding
template <typename T>
Tensor<T> window_sum(const Tensor<T>& mask, int kh, int kw, int pad_y, int pad_x) {
  Tensor<T> ones({1, 1, kh, kw});
  ones.fill(T(1));
  return conv2d_forward<T>(mask, ones, nullptr, pad_y, pad_x);
}

}  // namespace kernels

template <typename T>
class Graph {
 public:
  int leaf(Tensor<T> v, bool requires_grad = false) {
    return push(std::move(v), requires_grad, nullptr, nullptr);
  }

  // parameter leaf; backward() accumulates into p.grad
  int param(Parameter<T>& p) {
    Parameter<T>* pp = &p;
    const int idx = push(p.value, true, nullptr, pp);
    nodes_[idx].back = [idx, pp](Graph& g) { kernels::axpy(pp->grad, g.nodes_[idx].grad); };
    return idx;
  }

  const Tensor<T>& value(int i) const { return nodes_[i].value; }
  const Tensor<T>& grad(int i) const { return nodes_[i].grad; }
  bool requires_grad(int i) const { return nodes_[i].rg; }

  int conv2d(int x, int w, int b, int pad) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    Tensor<T> out = kernels::conv2d_forward(xv, wv, &bv, pad, pad);
    const int idx = push(std::move(out), any_rg({x, w, b}), nullptr, nullptr);
    if (nodes_[idx].rg) {
      const int H = xv.dim(1), W = xv.dim(2);
      const int kh = wv.dim(2), kw = wv.dim(3);
      nodes_[idx].back = [idx, x, w, b, pad, H, W, kh, kw](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        if (g.nodes_[w].rg)
          kernels::axpy(g.nodes_[w].grad,
                        kernels::conv2d_backward_weights(g.value(x), go, pad, pad, kh, kw));
        if (g.nodes_[b].rg) kernels::axpy(g.nodes_[b].grad, kernels::conv2d_backward_bias(go));
        if (g.nodes_[x].rg)
          kernels::axpy(g.nodes_[x].grad,
                        kernels::conv2d_backward_input(go, g.value(w), pad, pad, H, W));
      };
    }
    return idx;
  }

  // Partial convolution: windows are renormalized by k^2 / (valid pixels in
  // window); fully-masked windows output the bias alone. Returns the output
  // node and the propagated validity mask (1 where any input pixel was valid).
  std::pair<int, Tensor<T>> pconv2d(int x, const Tensor<T>& mask, int w, int b, int pad) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != xv.dim(1) ||
        mask.dim(2) != xv.dim(2))
      throw std::invalid_argument("pconv2d: mask shape mismatch");
    for (std::int64_t i = 0; i < mask.size(); ++i)
      if (mask[i] != T(0) && mask[i] != T(1))
        throw std::invalid_argument("pconv2d: mask must be binary");

    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    const int kh = wv.dim(2), kw = wv.dim(3);

    auto xm = std::make_shared<Tensor<T>>(xv.shape());
    for (int c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < mask.size(); ++i)
        (*xm)[static_cast<std::int64_t>(c) * H * W + i] =
            xv[static_cast<std::int64_t>(c) * H * W + i] * mask[i];

    Tensor<T> winsum = kernels::window_sum(mask, kh, kw, pad, pad);
    auto ratio = std::make_shared<Tensor<T>>(winsum.shape());
    Tensor<T> newmask(winsum.shape());
    const T full = static_cast<T>(kh * kw);
    for (std::int64_t i = 0; i < winsum.size(); ++i) {
      const bool any = winsum[i] > T(0);
      (*ratio)[i] = any ? full / winsum[i] : T(0);
      newmask[i] = any ? T(1) : T(0);
    }

    Tensor<T> num = kernels::conv2d_forward<T>(*xm, wv, nullptr, pad, pad);
    const int Ho = num.dim(1), Wo = num.dim(2);
    Tensor<T> out(num.shape());
    for (int o = 0; o < num.dim(0); ++o) {
      const std::int64_t base = static_cast<std::int64_t>(o) * Ho * Wo;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
        out[base + i] = num[base + i] * (*ratio)[i] + bv[o];
    }

    auto mask_copy = std::make_shared<Tensor<T>>(mask);
    const int idx = push(std::move(out), any_rg({x, w, b}), nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, x, w, b, pad, H, W, kh, kw, xm, ratio, mask_copy](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        const int O = go.dim(0);
        const std::int64_t plane = static_cast<std::int64_t>(go.dim(1)) * go.dim(2);
        Tensor<T> dnum(go.shape());
        for (int o = 0; o < O; ++o)
          for (std::int64_t i = 0; i < plane; ++i)
            dnum[o * plane + i] = go[o * plane + i] * (*ratio)[i];
        if (g.nodes_[w].rg)
          kernels::axpy(g.nodes_[w].grad,
                        kernels::conv2d_backward_weights(*xm, dnum, pad, pad, kh, kw));
        if (g.nodes_[b].rg) kernels::axpy(g.nodes_[b].grad, kernels::conv2d_backward_bias(go));
        if (g.nodes_[x].rg) {
          Tensor<T> dxm = kernels::conv2d_backward_input(dnum, g.value(w), pad, pad, H, W);
          Tensor<T>& gx = g.nodes_[x].grad;
          const std::int64_t hw = static_cast<std::int64_t>(H) * W;
          for (int c = 0; c < dxm.dim(0); ++c)
            for (std::int64_t i = 0; i < hw; ++i)
              gx[c * hw + i] += dxm[c * hw + i] * (*mask_copy)[i];
        }
      };
    }
    return {idx, std::move(newmask)};
  }

  int lrelu(int x, T alpha) {
    if (!(alpha > T(0) && alpha <= T(1)))
      throw std::invalid_argument("lrelu: alpha must be in (0,1]");
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : alpha * xv[i];
    const int idx = push(std::move(out), nodes_[x].rg, nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, x, alpha](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        const Tensor<T>& xv = g.value(x);
        Tensor<T>& gx = g.nodes_[x].grad;
        for (std::int64_t i = 0; i < go.size(); ++i)
          gx[i] += go[i] * (xv[i] > T(0) ? T(1) : alpha);
      };
    }
    return idx;
  }

  // 2x2 stride-2 max; ties resolved to the first occurrence in row-major scan
  int maxpool2d(int x) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("maxpool2d: rank != 3");
    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    if (H % 2 != 0 || W % 2 != 0) throw std::invalid_argument("maxpool2d: odd dims");
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out({C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    std::int64_t n = 0;
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          T best = xv.at3(c, 2 * oy, 2 * ox);
          std::int64_t besti =
              (static_cast<std::int64_t>(c) * H + 2 * oy) * W + 2 * ox;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const T v = xv.at3(c, 2 * oy + dy, 2 * ox + dx);
              if (v > best) {
                best = v;
                besti = (static_cast<std::int64_t>(c) * H + 2 * oy + dy) * W + 2 * ox + dx;
              }
            }
          out[n] = best;
          (*argmax)[n] = besti;
          ++n;
        }
    const int idx = push(std::move(out), nodes_[x].rg, nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, x, argmax](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        Tensor<T>& gx = g.nodes_[x].grad;
        for (std::int64_t i = 0; i < go.size(); ++i) gx[(*argmax)[i]] += go[i];
      };
    }
    return idx;
  }

  // nearest-neighbor 2x upsample of `low`, concatenated with `skip` on channels
  int upsample_concat(int low, int skip) {
    const Tensor<T>& lv = value(low);
    const Tensor<T>& sv = value(skip);
    if (lv.rank() != 3 || sv.rank() != 3)
      throw std::invalid_argument("upsample_concat: rank != 3");
    const int Cl = lv.dim(0), h = lv.dim(1), w = lv.dim(2);
    const int Cs = sv.dim(0);
    if (sv.dim(1) != 2 * h || sv.dim(2) != 2 * w)
      throw std::invalid_argument("upsample_concat: skip dims do not match 2x upsample");
    Tensor<T> out({Cl + Cs, 2 * h, 2 * w});
    for (int c = 0; c < Cl; ++c)
      for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x) out.at3(c, y, x) = lv.at3(c, y / 2, x / 2);
    const std::int64_t plane = static_cast<std::int64_t>(2 * h) * (2 * w);
    std::copy(sv.data(), sv.data() + sv.size(), out.data() + Cl * plane);
    const int idx = push(std::move(out), any_rg({low, skip}), nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, low, skip, Cl, Cs, h, w](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        if (g.nodes_[low].rg) {
          Tensor<T>& gl = g.nodes_[low].grad;
          for (int c = 0; c < Cl; ++c)
            for (int y = 0; y < 2 * h; ++y)
              for (int x = 0; x < 2 * w; ++x) gl.at3(c, y / 2, x / 2) += go.at3(c, y, x);
        }
        if (g.nodes_[skip].rg) {
          Tensor<T>& gs = g.nodes_[skip].grad;
          const std::int64_t plane = static_cast<std::int64_t>(2 * h) * (2 * w);
          const T* src = go.data() + Cl * plane;
          for (std::int64_t i = 0; i < gs.size(); ++i) gs[i] += src[i];
        }
      };
    }
    return idx;
  }

  // inverted dropout: kept activations are scaled by 1/(1-rate) at train time
  int dropout(int x, T rate, RngStream& rng, bool active) {
    if (!(rate >= T(0) && rate < T(1)))
      throw std::invalid_argument("dropout: rate must be in [0,1)");
    const Tensor<T>& xv = value(x);
    if (!active || rate == T(0)) {
      const int idx = push(xv, nodes_[x].rg, nullptr, nullptr);
      if (nodes_[idx].rg)
        nodes_[idx].back = [idx, x](Graph& g) {
          kernels::axpy(g.nodes_[x].grad, g.nodes_[idx].grad);
        };
      return idx;
    }
    const T keep = T(1) - rate;
    const T scale = T(1) / keep;
    auto m = std::make_shared<Tensor<T>>(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i)
      (*m)[i] = rng.bernoulli(static_cast<double>(keep)) ? scale : T(0);
    Tensor<T> out(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * (*m)[i];
    const int idx = push(std::move(out), nodes_[x].rg, nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, x, m](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        Tensor<T>& gx = g.nodes_[x].grad;
        for (std::int64_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*m)[i];
      };
    }
    return idx;
  }

  int sigmoid(int x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      if (v >= T(0)) {
        out[i] = T(1) / (T(1) + std::exp(-v));
      } else {
        const T e = std::exp(v);
        out[i] = e / (T(1) + e);
      }
    }
    const int idx = push(std::move(out), nodes_[x].rg, nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, x](Graph& g) {
        const Tensor<T>& go = g.nodes_[idx].grad;
        const Tensor<T>& y = g.value(idx);
        Tensor<T>& gx = g.nodes_[x].grad;
        for (std::int64_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (T(1) - y[i]);
      };
    }
    return idx;
  }

  // mean squared error over the pixels selected by the mask: by default the
  // complement (mask == 0, where the target carries the held-out values);
  // on_kept flips to the literal reading for comparison experiments
  int masked_loss(int pred, const Tensor<T>& target, const Tensor<T>& mask,
                  bool on_kept = false) {
    const Tensor<T>& pv = value(pred);
    if (!pv.same_shape(target) || !pv.same_shape(mask))
      throw std::invalid_argument("masked_loss: shape mismatch");
    const T sel = on_kept ? T(1) : T(0);
    std::int64_t count = 0;
    double sum = 0.0;
    for (std::int64_t i = 0; i < pv.size(); ++i)
      if (mask[i] == sel) {
        const double d = static_cast<double>(pv[i]) - static_cast<double>(target[i]);
        sum += d * d;
        ++count;
      }
    if (count == 0) throw std::domain_error("masked_loss: selected pixel set is empty");
    Tensor<T> out({1});
    out[0] = static_cast<T>(sum / static_cast<double>(count));
    auto tgt = std::make_shared<Tensor<T>>(target);
    auto msk = std::make_shared<Tensor<T>>(mask);
    const int idx = push(std::move(out), nodes_[pred].rg, nullptr, nullptr);
    if (nodes_[idx].rg) {
      nodes_[idx].back = [idx, pred, tgt, msk, sel, count](Graph& g) {
        const T go = g.nodes_[idx].grad[0];
        const Tensor<T>& pv = g.value(pred);
        Tensor<T>& gp = g.nodes_[pred].grad;
        const T scale = go * T(2) / static_cast<T>(count);
        for (std::int64_t i = 0; i < pv.size(); ++i)
          if ((*msk)[i] == sel) gp[i] += scale * (pv[i] - (*tgt)[i]);
      };
    }
    return idx;
  }

  void backward(int root) {
    if (root < 0 || root >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("backward: bad root");
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!nodes_[root].rg) return;
    for (auto& n : nodes_)
      if (n.rg) {
        n.grad = Tensor<T>(n.value.shape());
      }
    nodes_[root].grad.fill(T(1));
    for (int i = root; i >= 0; --i)
      if (nodes_[i].rg && nodes_[i].back) nodes_[i].back(*this);
  }

 private:
  struct NodeRec {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Graph&)> back;
    bool rg = false;
    Parameter<T>* bound = nullptr;
  };

  int push(Tensor<T> v, bool rg, std::function<void(Graph&)> back, Parameter<T>* bound) {
    NodeRec n;
    n.value = std::move(v);
    n.rg = rg;
    n.back = std::move(back);
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  bool any_rg(std::initializer_list<int> xs) const {
    for (int i : xs)
      if (nodes_[i].rg) return true;
    return false;
  }

  std::vector<NodeRec> nodes_;
};

}  // namespace sss
