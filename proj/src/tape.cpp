// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "oasis/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oasis {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kShape, what);
}

struct Dims4 {
  std::size_t b, c, h, w;
};

Dims4 dims4(const Shape& s, const char* name) {
  require(s.size() == 4, std::string(name) + " must be rank 4 [B,C,H,W], got " +
                             shape_to_string(s));
  return {s[0], s[1], s[2], s[3]};
}

// Copies one [C,H,W] image into a zero-padded [C,H+2p,W+2p] buffer.
template <typename T>
void pad_planes(const T* src, std::size_t c, std::size_t h, std::size_t w, std::size_t pad,
                std::vector<T>& dst) {
  const std::size_t pw = w + 2 * pad, ph = h + 2 * pad;
  dst.assign(c * ph * pw, T{0});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(src + (ci * h + y) * w, w, dst.data() + (ci * ph + y + pad) * pw + pad);
    }
  }
}

// One output tile of CB channels by XB columns at row y:
// out[co, y, x] (+)= sum_{ci,ky,kx} wt[ci, ky, kx, co] * xp[ci, y+ky, x+kx].
// wt is laid out input-channel major so the CB weights of a tap are adjacent.
template <typename T, int CB, int XB>
void conv_tile(const T* xp, const T* wt, const T* bias, T* out, std::size_t co,
               std::size_t y, std::size_t x0, std::size_t cin, std::size_t cout,
               std::size_t k, std::size_t h, std::size_t w, bool accumulate) {
  const std::size_t pad = k / 2, pw = w + 2 * pad, pp = (h + 2 * pad) * pw;
  T acc[CB][XB];
  for (int j = 0; j < CB; ++j) {
    const T* o = out + ((co + j) * h + y) * w + x0;
    for (int xx = 0; xx < XB; ++xx) {
      acc[j][xx] = accumulate ? o[xx] : (bias ? bias[co + j] : T{0});
    }
  }
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      const T* row = xp + ci * pp + (y + ky) * pw + x0;
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* in = row + kx;
        const T* wv = wt + ((ci * k + ky) * k + kx) * cout + co;
        for (int j = 0; j < CB; ++j) {
#pragma omp simd
          for (int xx = 0; xx < XB; ++xx) acc[j][xx] += wv[j] * in[xx];
        }
      }
    }
  }
  for (int j = 0; j < CB; ++j) {
    std::copy_n(acc[j], XB, out + ((co + j) * h + y) * w + x0);
  }
}

// Same-size convolution of a padded [cin, h+2p, w+2p] image into [cout, h, w].
template <typename T>
void conv_same(const T* xp, const T* wt, const T* bias, T* out, std::size_t cin,
               std::size_t cout, std::size_t k, std::size_t h, std::size_t w,
               bool accumulate) {
  constexpr int kCb = 8, kXb = 8;
  for (std::size_t y = 0; y < h; ++y) {
    std::size_t co = 0;
    for (; co + kCb <= cout; co += kCb) {
      std::size_t x = 0;
      for (; x + kXb <= w; x += kXb) {
        conv_tile<T, kCb, kXb>(xp, wt, bias, out, co, y, x, cin, cout, k, h, w, accumulate);
      }
      for (; x < w; ++x) {
        conv_tile<T, kCb, 1>(xp, wt, bias, out, co, y, x, cin, cout, k, h, w, accumulate);
      }
    }
    for (; co < cout; ++co) {
      std::size_t x = 0;
      for (; x + kXb <= w; x += kXb) {
        conv_tile<T, 1, kXb>(xp, wt, bias, out, co, y, x, cin, cout, k, h, w, accumulate);
      }
      for (; x < w; ++x) {
        conv_tile<T, 1, 1>(xp, wt, bias, out, co, y, x, cin, cout, k, h, w, accumulate);
      }
    }
  }
}

// gw[co, ci, ky, kx] += sum_{y,x} g[co, y, x] * xp[ci, y+ky, x+kx], with the k*k
// taps of CB output channels held in accumulators across the image.
template <typename T, int K, int CB>
void conv_weight_grad_tile(const T* g, const T* xp, T* gw, std::size_t co, std::size_t ci,
                           std::size_t cin, std::size_t h, std::size_t w) {
  constexpr int kXb = 8, kTaps = K * K;
  const std::size_t pad = K / 2, pw = w + 2 * pad, pp = (h + 2 * pad) * pw;
  T acc[CB][kTaps][kXb] = {};
  T tail[CB][kTaps] = {};
  for (std::size_t y = 0; y < h; ++y) {
    const T* rows = xp + ci * pp + y * pw;
    std::size_t x0 = 0;
    for (; x0 + kXb <= w; x0 += kXb) {
      T gv[CB][kXb];
      for (int j = 0; j < CB; ++j) std::copy_n(g + ((co + j) * h + y) * w + x0, kXb, gv[j]);
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const T* in = rows + ky * pw + x0 + kx;
          for (int j = 0; j < CB; ++j) {
#pragma omp simd
            for (int xx = 0; xx < kXb; ++xx) acc[j][ky * K + kx][xx] += gv[j][xx] * in[xx];
          }
        }
      }
    }
    for (; x0 < w; ++x0) {
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const T v = rows[ky * pw + x0 + kx];
          for (int j = 0; j < CB; ++j) tail[j][ky * K + kx] += g[((co + j) * h + y) * w + x0] * v;
        }
      }
    }
  }
  for (int j = 0; j < CB; ++j) {
    for (int t = 0; t < kTaps; ++t) {
      T sum = tail[j][t];
      for (int xx = 0; xx < kXb; ++xx) sum += acc[j][t][xx];
      gw[((co + j) * cin + ci) * kTaps + t] += sum;
    }
  }
}

template <typename T, int K>
void conv_weight_grad_k(const T* g, const T* xp, T* gw, std::size_t cin, std::size_t cout,
                        std::size_t h, std::size_t w) {
  constexpr int kCb = K == 1 ? 8 : 2;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    std::size_t co = 0;
    for (; co + kCb <= cout; co += kCb) {
      conv_weight_grad_tile<T, K, kCb>(g, xp, gw, co, ci, cin, h, w);
    }
    for (; co < cout; ++co) conv_weight_grad_tile<T, K, 1>(g, xp, gw, co, ci, cin, h, w);
  }
}

// Any odd kernel size.
template <typename T>
void conv_weight_grad(const T* g, const T* xp, T* gw, std::size_t cin, std::size_t cout,
                      std::size_t k, std::size_t h, std::size_t w) {
  if (k == 1) return conv_weight_grad_k<T, 1>(g, xp, gw, cin, cout, h, w);
  if (k == 3) return conv_weight_grad_k<T, 3>(g, xp, gw, cin, cout, h, w);
  const std::size_t pad = k / 2, pw = w + 2 * pad, pp = (h + 2 * pad) * pw;
  const std::size_t taps = k * k;
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t t = 0; t < taps; ++t) {
        const std::size_t ky = t / k, kx = t % k;
        T sum = 0;
        for (std::size_t y = 0; y < h; ++y) {
          const T* grow = g + (co * h + y) * w;
          const T* in = xp + ci * pp + (y + ky) * pw + kx;
          for (std::size_t x = 0; x < w; ++x) sum += grow[x] * in[x];
        }
        gw[(co * cin + ci) * taps + t] += sum;
      }
    }
  }
}

}  // namespace

template <typename T>
ChannelStats<T> channel_stats(const Tensor<T>& x) {
  const Dims4 d = dims4(x.shape(), "input");
  const std::size_t plane = d.h * d.w;
  const T n = static_cast<T>(d.b * plane);
  ChannelStats<T> s{std::vector<T>(d.c, T{0}), std::vector<T>(d.c, T{0})};
  for (std::size_t c = 0; c < d.c; ++c) {
    T acc = 0;
    for (std::size_t b = 0; b < d.b; ++b) {
      const T* p = x.data().data() + (b * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    }
    const T mean = acc / n;
    T sq = 0;
    for (std::size_t b = 0; b < d.b; ++b) {
      const T* p = x.data().data() + (b * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T diff = p[i] - mean;
        sq += diff * diff;
      }
    }
    s.mean[c] = mean;
    s.var[c] = sq / n;
  }
  return s;
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  if (v.index_ >= nodes_.size()) {
    throw Error(ErrorKind::kState, "variable does not belong to this tape");
  }
  return nodes_[v.index_];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.index_ >= nodes_.size()) {
    throw Error(ErrorKind::kState, "variable does not belong to this tape");
  }
  return nodes_[v.index_];
}

template <typename T>
std::vector<T>& Tape<T>::grad_buffer(std::size_t index) {
  Node& n = nodes_[index];
  if (!n.requires_grad) {
    if (sink_.size() < n.value.size()) sink_.resize(n.value.size());
    return sink_;
  }
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T{0});
  return n.grad;
}

template <typename T>
typename Tape<T>::Var Tape<T>::push(
    std::string op, Tensor<T> value,
    std::function<void(Tape&, std::size_t)> backward,
    std::initializer_list<std::size_t> inputs) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (std::size_t i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

template <typename T>
typename Tape<T>::Var Tape<T>::input(Tensor<T> value) {
  return push("input", std::move(value), nullptr, {});
}

template <typename T>
typename Tape<T>::Var Tape<T>::parameter(Tensor<T>& param, bool trainable) {
  Var v = push("parameter", param, nullptr, {});
  nodes_.back().value.drop_grad();
  if (trainable) {
    nodes_.back().external = &param;
    nodes_.back().requires_grad = true;
  }
  return v;
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
std::span<const T> Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() != n.value.size()) {
    throw Error(ErrorKind::kState, "no gradient recorded for variable");
  }
  return n.grad;
}

template <typename T>
typename Tape<T>::Var Tape<T>::conv2d(Var input, Var weight, Var bias) {
  const Tensor<T>& x = value(input);
  const Tensor<T>& w = value(weight);
  const Tensor<T>& bs = value(bias);
  const Dims4 in = dims4(x.shape(), "conv2d input");
  require(w.rank() == 4, "conv2d weight must be rank 4 [Cout,Cin,k,k], got " +
                             shape_to_string(w.shape()));
  const std::size_t cout = w.shape()[0];
  const std::size_t k = w.shape()[2];
  require(w.shape()[1] == in.c,
          "conv2d weight Cin=" + std::to_string(w.shape()[1]) +
              " does not match input channels " + std::to_string(in.c));
  require(w.shape()[3] == k, "conv2d kernel must be square");
  require(k % 2 == 1, "conv2d kernel size must be odd, got " + std::to_string(k));
  require(bs.size() == cout, "conv2d bias length " + std::to_string(bs.size()) +
                                 " does not match Cout=" + std::to_string(cout));
  const std::size_t plane = in.h * in.w;

  Tensor<T> out({in.b, cout, in.h, in.w});
  const std::size_t pad = k / 2, taps = k * k;
  // [ci, ky, kx, co]
  std::vector<T> wt(w.size());
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      for (std::size_t t = 0; t < taps; ++t) {
        wt[(ci * taps + t) * cout + co] = w[(co * in.c + ci) * taps + t];
      }
    }
  }
  std::vector<T> xp;
  for (std::size_t b = 0; b < in.b; ++b) {
    pad_planes(x.data().data() + b * in.c * plane, in.c, in.h, in.w, pad, xp);
    conv_same(xp.data(), wt.data(), bs.data().data(), out.data().data() + b * cout * plane,
              in.c, cout, k, in.h, in.w, false);
  }

  const std::size_t ix = input.index_, iw = weight.index_, ib = bias.index_;
  return push("conv2d", std::move(out), [=](Tape& t, std::size_t self) {
    const std::vector<T>& g = t.nodes_[self].grad;
    const T* xdat = t.nodes_[ix].value.data().data();
    const T* wdat = t.nodes_[iw].value.data().data();
    const bool need_x = t.needs_grad(ix), need_w = t.needs_grad(iw);
    const bool need_b = t.needs_grad(ib);
    std::vector<T>& gx = t.grad_buffer(ix);
    std::vector<T>& gw = t.grad_buffer(iw);
    std::vector<T>& gb = t.grad_buffer(ib);
    // The input gradient is a same-size convolution of the padded output
    // gradient with the spatially flipped kernel, channels swapped:
    // [co, ky, kx, ci] = w[co, ci, k-1-ky, k-1-kx].
    std::vector<T> wf;
    if (need_x) {
      wf.resize(cout * in.c * taps);
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t ci = 0; ci < in.c; ++ci) {
          for (std::size_t t2 = 0; t2 < taps; ++t2) {
            wf[(co * taps + (taps - 1 - t2)) * in.c + ci] = wdat[(co * in.c + ci) * taps + t2];
          }
        }
      }
    }
    std::vector<T> xp, gp;
    for (std::size_t b = 0; b < in.b; ++b) {
      const T* gb_ = g.data() + b * cout * plane;
      for (std::size_t co = 0; need_b && co < cout; ++co) {
        const T* go = gb_ + co * plane;
        T sum = 0;
#pragma omp simd reduction(+ : sum)
        for (std::size_t i = 0; i < plane; ++i) sum += go[i];
        gb[co] += sum;
      }
      if (need_w) {
        pad_planes(xdat + b * in.c * plane, in.c, in.h, in.w, pad, xp);
        conv_weight_grad(gb_, xp.data(), gw.data(), in.c, cout, k, in.h, in.w);
      }
      if (need_x) {
        pad_planes(gb_, cout, in.h, in.w, pad, gp);
        conv_same(gp.data(), wf.data(), static_cast<const T*>(nullptr),
                  gx.data() + b * in.c * plane, cout, in.c, k, in.h, in.w, true);
      }
    }
  }, {ix, iw, ib});
}

template <typename T>
typename Tape<T>::Var Tape<T>::relu(Var input) {
  Tensor<T> out = value(input);
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ix = input.index_;
  return push("relu", std::move(out), [ix](Tape& t, std::size_t self) {
    const std::vector<T>& g = t.nodes_[self].grad;
    const auto x = t.nodes_[ix].value.data();
    std::vector<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T{0}) gx[i] += g[i];
    }
  }, {ix});
}

template <typename T>
typename Tape<T>::Var Tape<T>::batch_norm_fixed(Var input, Var gamma, Var beta,
                                                std::span<const T> mean,
                                                std::span<const T> var, T eps) {
  const Tensor<T>& x = value(input);
  const Dims4 d = dims4(x.shape(), "batch_norm input");
  require(value(gamma).size() == d.c && value(beta).size() == d.c &&
              mean.size() == d.c && var.size() == d.c,
          "batch_norm parameters must have one entry per channel (" +
              std::to_string(d.c) + ")");
  const std::size_t plane = d.h * d.w;
  std::vector<T> inv_std(d.c);
  for (std::size_t c = 0; c < d.c; ++c) inv_std[c] = T{1} / std::sqrt(var[c] + eps);
  std::vector<T> mu(mean.begin(), mean.end());

  Tensor<T> out(x.shape());
  const T* gm = value(gamma).data().data();
  const T* bt = value(beta).data().data();
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xi = x.data().data() + (b * d.c + c) * plane;
      T* o = out.data().data() + (b * d.c + c) * plane;
      const T s = gm[c] * inv_std[c];
      for (std::size_t i = 0; i < plane; ++i) o[i] = s * (xi[i] - mu[c]) + bt[c];
    }
  }

  const std::size_t ix = input.index_, ig = gamma.index_, ibt = beta.index_;
  return push("batch_norm", std::move(out),
              [=](Tape& t, std::size_t self) {
                const std::vector<T>& g = t.nodes_[self].grad;
                const T* xd = t.nodes_[ix].value.data().data();
                const T* gmv = t.nodes_[ig].value.data().data();
                std::vector<T>& gx = t.grad_buffer(ix);
                std::vector<T>& gg = t.grad_buffer(ig);
                std::vector<T>& gbt = t.grad_buffer(ibt);
                for (std::size_t b = 0; b < d.b; ++b) {
                  for (std::size_t c = 0; c < d.c; ++c) {
                    const std::size_t off = (b * d.c + c) * plane;
                    T sg = 0, sgx = 0;
                    const T s = gmv[c] * inv_std[c];
                    for (std::size_t i = 0; i < plane; ++i) {
                      const T go = g[off + i];
                      sg += go;
                      sgx += go * (xd[off + i] - mu[c]) * inv_std[c];
                      gx[off + i] += go * s;
                    }
                    gg[c] += sgx;
                    gbt[c] += sg;
                  }
                }
              },
              {ix, ig, ibt});
}

template <typename T>
typename Tape<T>::Var Tape<T>::batch_norm_batch(Var input, Var gamma, Var beta,
                                                T eps, ChannelStats<T>* stats) {
  const Tensor<T>& x = value(input);
  const Dims4 d = dims4(x.shape(), "batch_norm input");
  require(value(gamma).size() == d.c && value(beta).size() == d.c,
          "batch_norm parameters must have one entry per channel (" +
              std::to_string(d.c) + ")");
  ChannelStats<T> st = channel_stats(x);
  if (stats) *stats = st;
  const std::size_t plane = d.h * d.w;
  std::vector<T> inv_std(d.c);
  for (std::size_t c = 0; c < d.c; ++c) inv_std[c] = T{1} / std::sqrt(st.var[c] + eps);

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  const T* gm = value(gamma).data().data();
  const T* bt = value(beta).data().data();
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (b * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (x[off + i] - st.mean[c]) * inv_std[c];
        xhat[off + i] = h;
        out[off + i] = gm[c] * h + bt[c];
      }
    }
  }

  const std::size_t ix = input.index_, ig = gamma.index_, ibt = beta.index_;
  return push(
      "batch_norm_batch", std::move(out),
      [=, xhat = std::move(xhat)](Tape& t, std::size_t self) {
        const std::vector<T>& g = t.nodes_[self].grad;
        const T* gmv = t.nodes_[ig].value.data().data();
        std::vector<T>& gx = t.grad_buffer(ix);
        std::vector<T>& gg = t.grad_buffer(ig);
        std::vector<T>& gbt = t.grad_buffer(ibt);
        const T n = static_cast<T>(d.b * plane);
        for (std::size_t c = 0; c < d.c; ++c) {
          T sg = 0, sgh = 0;
          for (std::size_t b = 0; b < d.b; ++b) {
            const std::size_t off = (b * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sg += g[off + i];
              sgh += g[off + i] * xhat[off + i];
            }
          }
          gg[c] += sgh;
          gbt[c] += sg;
          // dx = gamma * inv_std / n * (n*g - sum(g) - xhat * sum(g*xhat))
          const T coef = gmv[c] * inv_std[c] / n;
          for (std::size_t b = 0; b < d.b; ++b) {
            const std::size_t off = (b * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              gx[off + i] += coef * (n * g[off + i] - sg - xhat[off + i] * sgh);
            }
          }
        }
      },
      {ix, ig, ibt});
}

template <typename T>
typename Tape<T>::Var Tape<T>::softmax_channels(Var logits) {
  const Tensor<T>& x = value(logits);
  const Dims4 d = dims4(x.shape(), "softmax input");
  require(d.c >= 2, "softmax needs at least 2 channels, got " + std::to_string(d.c));
  if (!x.all_finite()) {
    throw Error(ErrorKind::kNumeric, "softmax received non-finite logits");
  }
  const std::size_t plane = d.h * d.w;
  Tensor<T> out(x.shape());
  std::vector<T> buf(d.c);
  for (std::size_t b = 0; b < d.b; ++b) {
    const T* xb = x.data().data() + b * d.c * plane;
    T* ob = out.data().data() + b * d.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T mx = xb[p];
      for (std::size_t c = 1; c < d.c; ++c) mx = std::max(mx, xb[c * plane + p]);
      T z = 0;
      for (std::size_t c = 0; c < d.c; ++c) {
        buf[c] = std::exp(xb[c * plane + p] - mx);
        z += buf[c];
      }
      for (std::size_t c = 0; c < d.c; ++c) ob[c * plane + p] = buf[c] / z;
    }
  }
  const std::size_t ix = logits.index_;
  return push("softmax", std::move(out), [=](Tape& t, std::size_t self) {
    const std::vector<T>& g = t.nodes_[self].grad;
    const T* pr = t.nodes_[self].value.data().data();
    std::vector<T>& gx = t.grad_buffer(ix);
    for (std::size_t b = 0; b < d.b; ++b) {
      const std::size_t base = b * d.c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        T dot = 0;
        for (std::size_t c = 0; c < d.c; ++c) {
          dot += g[base + c * plane + p] * pr[base + c * plane + p];
        }
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t i = base + c * plane + p;
          gx[i] += pr[i] * (g[i] - dot);
        }
      }
    }
  }, {ix});
}

template <typename T>
typename Tape<T>::Var Tape<T>::entropy_sum(Var probs, T clamp) {
  const Tensor<T>& p = value(probs);
  T acc = 0;
  for (T v : p.data()) acc -= v * std::log(std::max(v, clamp));
  const std::size_t ip = probs.index_;
  return push("entropy_sum", Tensor<T>({1}, std::vector<T>{acc}),
              [=](Tape& t, std::size_t self) {
                const T g = t.nodes_[self].grad[0];
                const auto pv = t.nodes_[ip].value.data();
                std::vector<T>& gp = t.grad_buffer(ip);
                for (std::size_t i = 0; i < pv.size(); ++i) {
                  const T v = pv[i];
                  const T d = v > clamp ? -(std::log(v) + T{1}) : -std::log(clamp);
                  gp[i] += g * d;
                }
              },
              {ip});
}

template <typename T>
typename Tape<T>::Var Tape<T>::cross_entropy_mean(Var probs,
                                                  std::span<const int> labels,
                                                  T clamp) {
  const Tensor<T>& p = value(probs);
  const Dims4 d = dims4(p.shape(), "cross_entropy probs");
  require(d.b == 1, "cross_entropy expects a single image");
  const std::size_t plane = d.h * d.w;
  require(labels.size() == plane,
          "cross_entropy label count " + std::to_string(labels.size()) +
              " does not match pixel count " + std::to_string(plane));
  std::vector<int> lab(labels.begin(), labels.end());
  T acc = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const int c = lab[i];
    require(c >= 0 && static_cast<std::size_t>(c) < d.c,
            "label " + std::to_string(c) + " outside [0, " + std::to_string(d.c) + ")");
    acc -= std::log(std::max(p[static_cast<std::size_t>(c) * plane + i], clamp));
  }
  const T inv_n = T{1} / static_cast<T>(plane);
  const std::size_t ip = probs.index_;
  return push("cross_entropy_mean", Tensor<T>({1}, std::vector<T>{acc * inv_n}),
              [=, lab = std::move(lab)](Tape& t, std::size_t self) {
                const T g = t.nodes_[self].grad[0];
                const auto pv = t.nodes_[ip].value.data();
                std::vector<T>& gp = t.grad_buffer(ip);
                for (std::size_t i = 0; i < plane; ++i) {
                  const std::size_t j = static_cast<std::size_t>(lab[i]) * plane + i;
                  if (pv[j] > clamp) gp[j] -= g * inv_n / pv[j];
                }
              },
              {ip});
}

template <typename T>
typename Tape<T>::Var Tape<T>::sum(Var input) {
  const auto x = value(input).data();
  const T acc = std::accumulate(x.begin(), x.end(), T{0});
  const std::size_t ix = input.index_;
  return push("sum", Tensor<T>({1}, std::vector<T>{acc}),
              [ix](Tape& t, std::size_t self) {
                const T g = t.nodes_[self].grad[0];
                for (T& v : t.grad_buffer(ix)) v += g;
              },
              {ix});
}

template <typename T>
typename Tape<T>::Var Tape<T>::weighted_sum(Var input, std::span<const T> weights) {
  const auto x = value(input).data();
  require(weights.size() == x.size(), "weighted_sum needs one weight per element (" +
                                          std::to_string(x.size()) + "), got " +
                                          std::to_string(weights.size()));
  std::vector<T> wv(weights.begin(), weights.end());
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += wv[i] * x[i];
  const std::size_t ix = input.index_;
  return push("weighted_sum", Tensor<T>({1}, std::vector<T>{acc}),
              [ix, wv = std::move(wv)](Tape& t, std::size_t self) {
                const T g = t.nodes_[self].grad[0];
                std::vector<T>& gx = t.grad_buffer(ix);
                for (std::size_t i = 0; i < wv.size(); ++i) gx[i] += g * wv[i];
              },
              {ix});
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  const Tensor<T>& x = value(a);
  const Tensor<T>& y = value(b);
  require(x.shape() == y.shape(), "add shape mismatch: " + shape_to_string(x.shape()) +
                                      " vs " + shape_to_string(y.shape()));
  Tensor<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const std::size_t ia = a.index_, ib = b.index_;
  return push("add", std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const std::vector<T>& g = t.nodes_[self].grad;
    std::vector<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    std::vector<T>& gb = t.grad_buffer(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  }, {ia, ib});
}

template <typename T>
typename Tape<T>::Var Tape<T>::scale(Var input, T factor) {
  Tensor<T> out = value(input);
  for (T& v : out.data()) v *= factor;
  const std::size_t ix = input.index_;
  return push("scale", std::move(out), [ix, factor](Tape& t, std::size_t self) {
    const std::vector<T>& g = t.nodes_[self].grad;
    std::vector<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  }, {ix});
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (nodes_.empty()) throw Error(ErrorKind::kState, "backward on an empty tape");
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw Error(ErrorKind::kShape, "backward requires a scalar loss, got shape " +
                                       shape_to_string(root.value.shape()));
  }
  if (!root.requires_grad) {
    throw Error(ErrorKind::kState, "loss does not depend on any trainable parameter");
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_buffer(loss.index_)[0] = T{1};
  visit_order_.clear();
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    visit_order_.push_back(i);
    if (n.backward) n.backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (!n.external) continue;
    std::span<T> dst = n.external->ensure_grad();
    if (n.grad.empty()) continue;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  visit_order_.clear();
  sink_.clear();
}

template ChannelStats<float> channel_stats(const Tensor<float>&);
template ChannelStats<double> channel_stats(const Tensor<double>&);
template class Tape<float>;
template class Tape<double>;

}  // namespace oasis
