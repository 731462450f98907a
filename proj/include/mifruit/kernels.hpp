#pragma once

// Raw numeric kernels on contiguous buffers. All reductions run in a fixed
// order so a given precision mode produces bit-stable results.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace mifruit::kernels {

/// C[M x N] += A[M x K] * B[K x N], all row-major.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A, const T* __restrict B,
             T* __restrict C) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    T* __restrict c0 = C + (i + 0) * N;
    T* __restrict c1 = C + (i + 1) * N;
    T* __restrict c2 = C + (i + 2) * N;
    T* __restrict c3 = C + (i + 3) * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a0 = A[(i + 0) * K + k];
      const T a1 = A[(i + 1) * K + k];
      const T a2 = A[(i + 2) * K + k];
      const T a3 = A[(i + 3) * K + k];
      const T* __restrict b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) {
        const T bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    T* __restrict c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[i * K + k];
      const T* __restrict b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

/// C[M x N] += A[K x M]^T * B[K x N].
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A, const T* __restrict B,
             T* __restrict C) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    T* __restrict c0 = C + (i + 0) * N;
    T* __restrict c1 = C + (i + 1) * N;
    T* __restrict c2 = C + (i + 2) * N;
    T* __restrict c3 = C + (i + 3) * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a0 = A[k * M + i + 0];
      const T a1 = A[k * M + i + 1];
      const T a2 = A[k * M + i + 2];
      const T a3 = A[k * M + i + 3];
      const T* __restrict b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) {
        const T bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    T* __restrict c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[k * M + i];
      const T* __restrict b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

/// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* __restrict in, T* __restrict out) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile)
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t r1 = std::min(rows, r0 + tile), c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t col_rows() const { return channels * kernel_h * kernel_w; }
  std::size_t col_cols() const { return out_h * out_w; }
};

/// Unfolds one C x H x W image into (C*kh*kw) x (oh*ow) patch columns.
template <typename T>
void im2col(const ConvGeometry& g, const T* __restrict x, T* __restrict col) {
  const std::size_t ohw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t u = 0; u < g.kernel_h; ++u)
      for (std::size_t v = 0; v < g.kernel_w; ++v) {
        T* __restrict row = col + ((c * g.kernel_h + u) * g.kernel_w + v) * ohw;
        const T* plane = x + c * g.height * g.width;
        for (std::size_t r = 0; r < g.out_h; ++r) {
          const long ih = static_cast<long>(r * g.stride + u) - static_cast<long>(g.pad);
          T* __restrict dst = row + r * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t cc = 0; cc < g.out_w; ++cc) {
            const long iw = static_cast<long>(cc * g.stride + v) - static_cast<long>(g.pad);
            dst[cc] = (iw < 0 || iw >= static_cast<long>(g.width)) ? T(0) : src[iw];
          }
        }
      }
}

/// Adjoint of im2col: scatters patch columns back into dx (accumulating).
template <typename T>
void col2im(const ConvGeometry& g, const T* __restrict col, T* __restrict dx) {
  const std::size_t ohw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t u = 0; u < g.kernel_h; ++u)
      for (std::size_t v = 0; v < g.kernel_w; ++v) {
        const T* __restrict row = col + ((c * g.kernel_h + u) * g.kernel_w + v) * ohw;
        T* plane = dx + c * g.height * g.width;
        for (std::size_t r = 0; r < g.out_h; ++r) {
          const long ih = static_cast<long>(r * g.stride + u) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const T* __restrict src = row + r * g.out_w;
          for (std::size_t cc = 0; cc < g.out_w; ++cc) {
            const long iw = static_cast<long>(cc * g.stride + v) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += src[cc];
          }
        }
      }
}

/// sum_i a[i] with eight fixed partial sums.
template <typename T>
T lane_sum(const T* __restrict a, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) lane[l] += a[i + l];
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i];
  return acc;
}

/// sum_i (a[i] - m)^2 with eight fixed partial sums.
template <typename T>
T lane_sq_dev(const T* __restrict a, T m, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) {
      const T d = a[i + l] - m;
      lane[l] += d * d;
    }
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += (a[i] - m) * (a[i] - m);
  return acc;
}

/// Copies one H x W plane into the centre of a zeroed (H+2p) x (W+2p) buffer.
template <typename T>
void pad_plane(const ConvGeometry& g, const T* __restrict src, T* __restrict dst) {
  const std::size_t pw = g.width + 2 * g.pad;
  std::fill(dst, dst + (g.height + 2 * g.pad) * pw, T(0));
  for (std::size_t r = 0; r < g.height; ++r)
    std::copy(src + r * g.width, src + (r + 1) * g.width, dst + (r + g.pad) * pw + g.pad);
}

/// sum_i a[i * stride] * b[i] with eight fixed partial sums.
template <typename T>
T strided_dot(const T* __restrict a, std::size_t stride, const T* __restrict b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) lane[l] += a[(i + l) * stride] * b[i + l];
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i * stride] * b[i];
  return acc;
}

/// Per-channel spatial convolution of one C x H x W image (no bias).
template <typename T>
void depthwise_forward(const ConvGeometry& g, const T* __restrict x, const T* __restrict w, T* __restrict y) {
  const std::size_t kk = g.kernel_h * g.kernel_w, pw = g.width + 2 * g.pad, s = g.stride;
  std::vector<T> padded((g.height + 2 * g.pad) * pw);
  for (std::size_t c = 0; c < g.channels; ++c) {
    pad_plane(g, x + c * g.height * g.width, padded.data());
    const T* k = w + c * kk;
    T* out = y + c * g.out_h * g.out_w;
    std::fill(out, out + g.out_h * g.out_w, T(0));
    for (std::size_t r = 0; r < g.out_h; ++r) {
      T* __restrict dst = out + r * g.out_w;
      for (std::size_t u = 0; u < g.kernel_h; ++u)
        for (std::size_t v = 0; v < g.kernel_w; ++v) {
          const T kv = k[u * g.kernel_w + v];
          const T* __restrict src = padded.data() + (r * s + u) * pw + v;
          for (std::size_t cc = 0; cc < g.out_w; ++cc) dst[cc] += kv * src[cc * s];
        }
    }
  }
}

/// Gradients of depthwise_forward for one image; either output may be null.
template <typename T>
void depthwise_backward(const ConvGeometry& g, const T* __restrict x, const T* __restrict w,
                        const T* __restrict dy, T* __restrict dx, T* __restrict dw) {
  const std::size_t kk = g.kernel_h * g.kernel_w, pw = g.width + 2 * g.pad, s = g.stride;
  const std::size_t padded_size = (g.height + 2 * g.pad) * pw;
  std::vector<T> padded(dw ? padded_size : 0), gpad(dx ? padded_size : 0);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* k = w + c * kk;
    const T* go = dy + c * g.out_h * g.out_w;
    if (dw) {
      pad_plane(g, x + c * g.height * g.width, padded.data());
      T* gk = dw + c * kk;
      for (std::size_t u = 0; u < g.kernel_h; ++u)
        for (std::size_t v = 0; v < g.kernel_w; ++v) {
          T acc = T(0);
          for (std::size_t r = 0; r < g.out_h; ++r)
            acc += strided_dot(padded.data() + (r * s + u) * pw + v, s, go + r * g.out_w, g.out_w);
          gk[u * g.kernel_w + v] += acc;
        }
    }
    if (dx) {
      std::fill(gpad.begin(), gpad.end(), T(0));
      for (std::size_t r = 0; r < g.out_h; ++r) {
        const T* __restrict src = go + r * g.out_w;
        for (std::size_t u = 0; u < g.kernel_h; ++u)
          for (std::size_t v = 0; v < g.kernel_w; ++v) {
            const T kv = k[u * g.kernel_w + v];
            T* __restrict dst = gpad.data() + (r * s + u) * pw + v;
            for (std::size_t cc = 0; cc < g.out_w; ++cc) dst[cc * s] += kv * src[cc];
          }
      }
      T* gx = dx + c * g.height * g.width;
      for (std::size_t r = 0; r < g.height; ++r) {
        const T* __restrict src = gpad.data() + (r + g.pad) * pw + g.pad;
        T* __restrict dst = gx + r * g.width;
        for (std::size_t cc = 0; cc < g.width; ++cc) dst[cc] += src[cc];
      }
    }
  }
}

}  // namespace mifruit::kernels
