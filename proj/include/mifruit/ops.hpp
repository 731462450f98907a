#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mifruit/kernels.hpp"
#include "mifruit/tensor.hpp"

namespace mifruit {

enum class Activation { relu, relu6, linear };
enum class NormMode { train, eval };

namespace detail {

/// Fingerprint of the piecewise-linear regions visited by one forward pass.
struct KinkTrace {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  void mix(std::uint64_t v) {
    hash ^= v;
    hash *= 0x100000001b3ULL;
  }
};

inline KinkTrace*& active_kink_trace() {
  thread_local KinkTrace* trace = nullptr;
  return trace;
}

/// Installs a trace for the lifetime of the scope.
class KinkTraceScope {
 public:
  explicit KinkTraceScope(KinkTrace& t) : prev_(active_kink_trace()) { active_kink_trace() = &t; }
  ~KinkTraceScope() { active_kink_trace() = prev_; }
  KinkTraceScope(const KinkTraceScope&) = delete;
  KinkTraceScope& operator=(const KinkTraceScope&) = delete;

 private:
  KinkTrace* prev_;
};

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            const char* op) {
  const long span = static_cast<long>(in + 2 * pad) - static_cast<long>(k);
  if (span < 0) fail(ErrorKind::invalid_argument, std::string(op) + ": kernel larger than padded input");
  return static_cast<std::size_t>(span) / stride + 1;
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* name) {
  require(t.defined() && t.ndim() == rank,
          std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
              (t.defined() ? ", got " + shape_str(t.shape()) : std::string(", got undefined")));
}

}  // namespace detail

/// y[n,o] = b[o] + sum_{i,u,v} x_pad[n, i, r*s+u, c*s+v] * w[o,i,u,v]. Pass an
/// undefined tensor for a bias-free convolution.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad) {
  detail::require_rank(x, 4, "conv2d", "input");
  detail::require_rank(w, 4, "conv2d", "weight");
  require(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  require(w.dim(1) == C, "conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                             std::to_string(w.dim(1)));
  if (b.defined()) require(b.ndim() == 1 && b.dim(0) == O, "conv2d: bias must have shape (O)");
  const std::size_t OH = detail::conv_out(H, KH, stride, pad, "conv2d");
  const std::size_t OW = detail::conv_out(W, KW, stride, pad, "conv2d");

  const kernels::ConvGeometry g{C, H, W, KH, KW, stride, pad, OH, OW};
  const bool direct = KH == 1 && KW == 1 && stride == 1 && pad == 0;
  const std::size_t rows = g.col_rows(), cols = g.col_cols();

  std::vector<T> y(N * O * cols, T(0));
  std::vector<T> col(direct ? 0 : rows * cols);
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    const T* xs = xd + n * C * H * W;
    T* ys = y.data() + n * O * cols;
    if (b.defined())
      for (std::size_t o = 0; o < O; ++o) std::fill(ys + o * cols, ys + (o + 1) * cols, b[o]);
    const T* src = xs;
    if (!direct) {
      kernels::im2col(g, xs, col.data());
      src = col.data();
    }
    kernels::gemm_nn(O, cols, rows, wd, src, ys);
  }

  return detail::make_result<T>(
      "conv2d", {N, O, OH, OW}, std::move(y), {&x, &w, &b},
      [x, w, b, g, N, O, direct](std::span<const T> gy) {
        const std::size_t rows = g.col_rows(), cols = g.col_cols();
        const std::size_t in_sz = g.channels * g.height * g.width;
        T* gx = detail::grad_of(x);
        T* gw = detail::grad_of(w);
        T* gb = detail::grad_of(b);
        std::vector<T> col(direct ? 0 : rows * cols), colT(rows * cols), dcol(gx && !direct ? rows * cols : 0);
        for (std::size_t n = 0; n < N; ++n) {
          const T* gys = gy.data() + n * O * cols;
          if (gb)
            for (std::size_t o = 0; o < O; ++o) gb[o] += kernels::lane_sum(gys + o * cols, cols);
          const T* xs = x.data().data() + n * in_sz;
          if (gw) {
            const T* src = xs;
            if (!direct) {
              kernels::im2col(g, xs, col.data());
              src = col.data();
            }
            kernels::transpose(rows, cols, src, colT.data());
            kernels::gemm_nn(O, rows, cols, gys, colT.data(), gw);
          }
          if (gx) {
            if (direct) {
              kernels::gemm_tn(rows, cols, O, w.data().data(), gys, gx + n * in_sz);
            } else {
              std::fill(dcol.begin(), dcol.end(), T(0));
              kernels::gemm_tn(rows, cols, O, w.data().data(), gys, dcol.data());
              kernels::col2im(g, dcol.data(), gx + n * in_sz);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  return conv2d(x, w, Tensor<T>(), stride, pad);
}

/// One kernel per channel (weight C x 1 x kh x kw), no cross-channel mixing.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                           std::size_t pad) {
  detail::require_rank(x, 4, "depthwise_conv2d", "input");
  detail::require_rank(w, 4, "depthwise_conv2d", "weight");
  require(stride >= 1, "depthwise_conv2d: stride must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(w.dim(0) == C && w.dim(1) == 1,
          "depthwise_conv2d: weight " + shape_str(w.shape()) + " does not match " + std::to_string(C) +
              " input channels");
  if (b.defined()) require(b.ndim() == 1 && b.dim(0) == C, "depthwise_conv2d: bias must have shape (C)");
  const std::size_t KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = detail::conv_out(H, KH, stride, pad, "depthwise_conv2d");
  const std::size_t OW = detail::conv_out(W, KW, stride, pad, "depthwise_conv2d");
  const kernels::ConvGeometry g{C, H, W, KH, KW, stride, pad, OH, OW};

  const std::size_t in_sz = C * H * W, out_sz = C * OH * OW;
  std::vector<T> y(N * out_sz);
  for (std::size_t n = 0; n < N; ++n) {
    T* ys = y.data() + n * out_sz;
    kernels::depthwise_forward(g, x.data().data() + n * in_sz, w.data().data(), ys);
    if (b.defined())
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < OH * OW; ++p) ys[c * OH * OW + p] += b[c];
  }

  return detail::make_result<T>(
      "depthwise_conv2d", {N, C, OH, OW}, std::move(y), {&x, &w, &b},
      [x, w, b, g, N, in_sz, out_sz](std::span<const T> gy) {
        T* gx = detail::grad_of(x);
        T* gw = detail::grad_of(w);
        T* gb = detail::grad_of(b);
        const std::size_t plane = g.out_h * g.out_w;
        for (std::size_t n = 0; n < N; ++n) {
          const T* gys = gy.data() + n * out_sz;
          if (gb)
            for (std::size_t c = 0; c < g.channels; ++c) gb[c] += kernels::lane_sum(gys + c * plane, plane);
          if (gx || gw)
            kernels::depthwise_backward(g, x.data().data() + n * in_sz, w.data().data(), gys,
                                        gx ? gx + n * in_sz : nullptr, gw);
        }
      });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  return depthwise_conv2d(x, w, Tensor<T>(), stride, pad);
}

/// y = x . w + b for x (N x F), w (F x G), b (G).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::require_rank(x, 2, "dense", "input");
  detail::require_rank(w, 2, "dense", "weight");
  const std::size_t N = x.dim(0), F = x.dim(1), G = w.dim(1);
  require(w.dim(0) == F, "dense: input has " + std::to_string(F) + " features, weight expects " +
                             std::to_string(w.dim(0)));
  if (b.defined()) require(b.ndim() == 1 && b.dim(0) == G, "dense: bias must have shape (G)");
  std::vector<T> y(N * G, T(0));
  if (b.defined())
    for (std::size_t n = 0; n < N; ++n) std::copy(b.data().begin(), b.data().end(), y.begin() + n * G);
  kernels::gemm_nn(N, G, F, x.data().data(), w.data().data(), y.data());

  return detail::make_result<T>("dense", {N, G}, std::move(y), {&x, &w, &b},
                                [x, w, b, N, F, G](std::span<const T> gy) {
                                  if (T* gb = detail::grad_of(b))
                                    for (std::size_t n = 0; n < N; ++n)
                                      for (std::size_t j = 0; j < G; ++j) gb[j] += gy[n * G + j];
                                  if (T* gw = detail::grad_of(w))
                                    kernels::gemm_tn(F, G, N, x.data().data(), gy.data(), gw);
                                  if (T* gx = detail::grad_of(x)) {
                                    std::vector<T> wT(G * F);
                                    kernels::transpose(F, G, w.data().data(), wT.data());
                                    kernels::gemm_nn(N, F, G, gy.data(), wT.data(), gx);
                                  }
                                });
}

/// Per-channel running statistics owned by a batch-norm layer.
template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  explicit RunningStats(std::size_t channels = 1)
      : mean(Shape{channels}, T(0)), var(Shape{channels}, T(1)) {}
};

/// Train mode normalizes by batch statistics (biased variance) and updates
/// running <- momentum * running + (1 - momentum) * batch. Eval mode uses the
/// running statistics and is a pure function.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, RunningStats<T>& running,
                    NormMode mode, T momentum = T(0.9), T eps = T(1e-5)) {
  detail::require_rank(x, 4, "batchnorm", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  require(gamma.numel() == C && beta.numel() == C && running.mean.numel() == C && running.var.numel() == C,
          "batchnorm: parameter sizes do not match " + std::to_string(C) + " channels");
  const std::size_t count = N * HW;
  const T* xd = x.data().data();
  std::vector<T> y(x.numel());

  if (mode == NormMode::eval) {
    std::vector<T> scale(C), shift(C);
    for (std::size_t c = 0; c < C; ++c) {
      scale[c] = gamma[c] / std::sqrt(running.var[c] + eps);
      shift[c] = beta[c] - running.mean[c] * scale[c];
    }
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T* src = xd + (n * C + c) * HW;
        T* dst = y.data() + (n * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p) dst[p] = src[p] * scale[c] + shift[c];
      }
    std::vector<T> rmean(running.mean.vec()), rinv(C);
    for (std::size_t c = 0; c < C; ++c) rinv[c] = T(1) / std::sqrt(running.var[c] + eps);
    return detail::make_result<T>(
        "batchnorm_eval", x.shape(), std::move(y), {&x, &gamma, &beta},
        [x, gamma, beta, N, C, HW, scale, rmean, rinv](std::span<const T> gy) {
          T* gx = detail::grad_of(x);
          T* gg = detail::grad_of(gamma);
          T* gbeta = detail::grad_of(beta);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t off = (n * C + c) * HW;
              for (std::size_t p = 0; p < HW; ++p) {
                if (gx) gx[off + p] += gy[off + p] * scale[c];
                if (gbeta) gbeta[c] += gy[off + p];
                if (gg) gg[c] += gy[off + p] * (x[off + p] - rmean[c]) * rinv[c];
              }
            }
        });
  }

  require(count >= 2, "batchnorm: train mode needs at least two values per channel, got " +
                          std::to_string(count));
  std::vector<T> mean(C, T(0)), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    T s = T(0);
    for (std::size_t n = 0; n < N; ++n) s += kernels::lane_sum(xd + (n * C + c) * HW, HW);
    mean[c] = s / static_cast<T>(count);
    T v = T(0);
    for (std::size_t n = 0; n < N; ++n) v += kernels::lane_sq_dev(xd + (n * C + c) * HW, mean[c], HW);
    v /= static_cast<T>(count);
    inv_std[c] = T(1) / std::sqrt(v + eps);
    running.mean[c] = momentum * running.mean[c] + (T(1) - momentum) * mean[c];
    running.var[c] = momentum * running.var[c] + (T(1) - momentum) * v;
  }
  std::vector<T> xhat(x.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (n * C + c) * HW;
      for (std::size_t p = 0; p < HW; ++p) {
        xhat[off + p] = (xd[off + p] - mean[c]) * inv_std[c];
        y[off + p] = xhat[off + p] * gamma[c] + beta[c];
      }
    }

  return detail::make_result<T>(
      "batchnorm_train", x.shape(), std::move(y), {&x, &gamma, &beta},
      [x, gamma, beta, N, C, HW, count, inv_std, xhat = std::move(xhat)](std::span<const T> gy) {
        T* gx = detail::grad_of(x);
        T* gg = detail::grad_of(gamma);
        T* gbeta = detail::grad_of(beta);
        for (std::size_t c = 0; c < C; ++c) {
          T sum_g = T(0), sum_gx = T(0);
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t off = (n * C + c) * HW;
            sum_g += kernels::lane_sum(gy.data() + off, HW);
            sum_gx += kernels::strided_dot(gy.data() + off, 1, xhat.data() + off, HW);
          }
          if (gg) gg[c] += sum_gx;
          if (gbeta) gbeta[c] += sum_g;
          if (gx) {
            const T k = gamma[c] * inv_std[c] / static_cast<T>(count);
            const T m = static_cast<T>(count);
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t off = (n * C + c) * HW;
              for (std::size_t p = 0; p < HW; ++p)
                gx[off + p] += k * (m * gy[off + p] - sum_g - xhat[off + p] * sum_gx);
            }
          }
        }
      });
}

/// Elementwise relu / relu6 / identity. The subgradient at each kink is 0.
template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  if (kind == Activation::linear) {
    std::vector<T> y(x.vec());
    return detail::make_result<T>("linear", x.shape(), std::move(y), {&x}, [x](std::span<const T> gy) {
      if (T* gx = detail::grad_of(x))
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  const T hi = kind == Activation::relu6 ? T(6) : std::numeric_limits<T>::infinity();
  std::vector<T> y(x.numel());
  const T* xd = x.data().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(std::max(xd[i], T(0)), hi);
  if (auto* trace = detail::active_kink_trace())
    for (std::size_t i = 0; i < y.size(); ++i) trace->mix(xd[i] <= T(0) ? 0 : xd[i] >= hi ? 2 : 1);
  return detail::make_result<T>("relu", x.shape(), std::move(y), {&x}, [x, hi](std::span<const T> gy) {
    if (T* gx = detail::grad_of(x)) {
      const T* xd = x.data().data();
      for (std::size_t i = 0; i < gy.size(); ++i)
        if (xd[i] > T(0) && xd[i] < hi) gx[i] += gy[i];
    }
  });
}

/// Per-window maximum. Gradient goes to the first maximal element in
/// row-major window order (lowest flat index).
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  detail::require_rank(x, 4, "maxpool2d", "input");
  require(k >= 1 && stride >= 1, "maxpool2d: window and stride must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(k <= H && k <= W, "maxpool2d: window " + std::to_string(k) + " larger than input " +
                                std::to_string(H) + "x" + std::to_string(W));
  const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  std::vector<T> y(N * C * OH * OW);
  std::vector<std::size_t> arg(y.size());
  const T* xd = x.data().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* plane = xd + nc * H * W;
    for (std::size_t r = 0; r < OH; ++r)
      for (std::size_t c = 0; c < OW; ++c) {
        std::size_t best = (r * stride) * W + c * stride;
        for (std::size_t u = 0; u < k; ++u)
          for (std::size_t v = 0; v < k; ++v) {
            const std::size_t idx = (r * stride + u) * W + c * stride + v;
            if (plane[idx] > plane[best]) best = idx;
          }
        const std::size_t o = nc * OH * OW + r * OW + c;
        y[o] = plane[best];
        arg[o] = nc * H * W + best;
      }
  }
  if (auto* trace = detail::active_kink_trace())
    for (auto a : arg) trace->mix(a);
  return detail::make_result<T>("maxpool2d", {N, C, OH, OW}, std::move(y), {&x},
                                [x, arg = std::move(arg)](std::span<const T> gy) {
                                  if (T* gx = detail::grad_of(x))
                                    for (std::size_t i = 0; i < gy.size(); ++i) gx[arg[i]] += gy[i];
                                });
}

/// Per-channel spatial mean: N x C x H x W -> N x C.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<T> y(N * C);
  const T* xd = x.data().data();
  for (std::size_t i = 0; i < N * C; ++i) {
    T s = T(0);
    for (std::size_t p = 0; p < HW; ++p) s += xd[i * HW + p];
    y[i] = s / static_cast<T>(HW);
  }
  return detail::make_result<T>("global_avg_pool", {N, C}, std::move(y), {&x}, [x, HW](std::span<const T> gy) {
    if (T* gx = detail::grad_of(x)) {
      const T inv = T(1) / static_cast<T>(HW);
      for (std::size_t i = 0; i < gy.size(); ++i)
        for (std::size_t p = 0; p < HW; ++p) gx[i * HW + p] += gy[i] * inv;
    }
  });
}

/// Row-wise concatenation [a | b]. An undefined b is treated as zero width.
template <typename T>
Tensor<T> concat_features(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "concat_features", "first input");
  if (!b.defined()) return activation(a, Activation::linear);
  detail::require_rank(b, 2, "concat_features", "second input");
  const std::size_t N = a.dim(0), F1 = a.dim(1), F2 = b.dim(1);
  require(b.dim(0) == N, "concat_features: batch sizes differ (" + std::to_string(N) + " vs " +
                             std::to_string(b.dim(0)) + ")");
  std::vector<T> y(N * (F1 + F2));
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.data().data() + n * F1, F1, y.data() + n * (F1 + F2));
    std::copy_n(b.data().data() + n * F2, F2, y.data() + n * (F1 + F2) + F1);
  }
  return detail::make_result<T>("concat_features", {N, F1 + F2}, std::move(y), {&a, &b},
                                [a, b, N, F1, F2](std::span<const T> gy) {
                                  T* ga = detail::grad_of(a);
                                  T* gb = detail::grad_of(b);
                                  for (std::size_t n = 0; n < N; ++n) {
                                    const T* row = gy.data() + n * (F1 + F2);
                                    if (ga)
                                      for (std::size_t j = 0; j < F1; ++j) ga[n * F1 + j] += row[j];
                                    if (gb)
                                      for (std::size_t j = 0; j < F2; ++j) gb[n * F2 + j] += row[F1 + j];
                                  }
                                });
}

template <typename T>
struct LossAndProbs {
  Tensor<T> loss;
  Tensor<T> probs;
};

/// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
LossAndProbs<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  require(labels.size() == N, "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(N) + " rows");
  std::vector<T> probs(N * K);
  T total = T(0);
  const T* z = logits.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    require(label >= 0 && static_cast<std::size_t>(label) < K,
            "softmax_cross_entropy: label " + std::to_string(label) + " out of range [0," + std::to_string(K) + ")");
    const T* row = z + n * K;
    const T mx = *std::max_element(row, row + K);
    T s = T(0);
    for (std::size_t k = 0; k < K; ++k) s += std::exp(row[k] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t k = 0; k < K; ++k) probs[n * K + k] = std::exp(row[k] - lse);
    total += lse - row[label];
  }
  Tensor<T> p({N, K}, probs);
  std::vector<int> lab(labels.begin(), labels.end());
  Tensor<T> loss = detail::make_result<T>(
      "softmax_cross_entropy", {1}, {total / static_cast<T>(N)}, {&logits},
      [logits, probs = std::move(probs), lab = std::move(lab), N, K](std::span<const T> gy) {
        if (T* gz = detail::grad_of(logits)) {
          const T scale = gy[0] / static_cast<T>(N);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t k = 0; k < K; ++k)
              gz[n * K + k] += scale * (probs[n * K + k] - (static_cast<int>(k) == lab[n] ? T(1) : T(0)));
        }
      });
  return {loss, p};
}

template <typename T>
LossAndProbs<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  return softmax_cross_entropy(logits, std::span<const int>(labels));
}

/// Same values under a new shape with the same element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  for (auto d : shape) require(d > 0, "reshape: dimensions must be positive");
  return detail::make_result<T>("reshape", std::move(shape), x.vec(), {&x}, [x](std::span<const T> gy) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

/// Elementwise a + b (equal shapes); used for residual skips.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return detail::make_result<T>("add", a.shape(), std::move(y), {&a, &b}, [a, b](std::span<const T> gy) {
    if (T* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    if (T* gb = detail::grad_of(b))
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
  });
}

/// Elementwise product (equal shapes).
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return detail::make_result<T>("mul", a.shape(), std::move(y), {&a, &b}, [a, b](std::span<const T> gy) {
    if (T* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b[i];
    if (T* gb = detail::grad_of(b))
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * s;
  return detail::make_result<T>("scale", x.shape(), std::move(y), {&x}, [x, s](std::span<const T> gy) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * s;
  });
}

/// Sum of all elements -> shape (1).
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (auto v : x.data()) s += v;
  return detail::make_result<T>("sum", {1}, {s}, {&x}, [x](std::span<const T> gy) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += gy[0];
  });
}

/// Sum of w[i] * x[i] for a fixed weight vector; turns any tensor into a
/// scalar with non-uniform upstream gradients (used by gradient checks).
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights) {
  require(weights.size() == x.numel(), "weighted_sum: weight count does not match tensor size");
  T s = T(0);
  for (std::size_t i = 0; i < x.numel(); ++i) s += weights[i] * x[i];
  std::vector<T> wcopy(weights.begin(), weights.end());
  return detail::make_result<T>("weighted_sum", {1}, {s}, {&x}, [x, wcopy = std::move(wcopy)](std::span<const T> gy) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < wcopy.size(); ++i) gx[i] += gy[0] * wcopy[i];
  });
}

}  // namespace mifruit
