#pragma once

// Per-sample building blocks of the U-Net. Every buffer is a contiguous
// C x H x W array. Internal to the library.

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace gdm::layers {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Upper bound on the im2col scratch buffer per chunk.
inline constexpr std::size_t kColumnBudgetBytes = std::size_t{24} << 20;

template <typename T>
int rows_per_chunk(int patch_rows, int width) {
  const std::size_t per_row = static_cast<std::size_t>(patch_rows) * width * sizeof(T);
  return static_cast<int>(std::max<std::size_t>(1, kColumnBudgetBytes / per_row));
}

// Unfolds output rows [row0, row1) of a stride-1, zero-padded convolution.
template <typename T>
void im2col(const T* in, int channels, int height, int width, int kernel, int row0, int row1,
            T* col) {
  const int pad = kernel / 2;
  const int span = (row1 - row0) * width;
  for (int ci = 0; ci < channels; ++ci) {
    const T* plane = in + static_cast<std::size_t>(ci) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = col + static_cast<std::size_t>((ci * kernel + ky) * kernel + kx) * span;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(width, width - dx);
        for (int y = row0; y < row1; ++y) {
          T* out_row = dst + (y - row0) * width;
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height || x_lo >= x_hi) {
            std::fill(out_row, out_row + width, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * width;
          std::fill(out_row, out_row + x_lo, T{});
          std::copy(src + x_lo + dx, src + x_hi + dx, out_row + x_lo);
          std::fill(out_row + x_hi, out_row + width, T{});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back into the input gradient.
template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kernel, int row0,
                int row1, T* grad_in) {
  const int pad = kernel / 2;
  const int span = (row1 - row0) * width;
  for (int ci = 0; ci < channels; ++ci) {
    T* plane = grad_in + static_cast<std::size_t>(ci) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = col + static_cast<std::size_t>((ci * kernel + ky) * kernel + kx) * span;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(width, width - dx);
        for (int y = row0; y < row1; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height) continue;
          const T* in_row = src + (y - row0) * width;
          T* dst = plane + static_cast<std::size_t>(iy) * width;
          for (int x = x_lo; x < x_hi; ++x) dst[x + dx] += in_row[x];
        }
      }
    }
  }
}

// out[cout, H*W] = W[cout, cin*k*k] * im2col(in) + b
template <typename T>
void conv2d_forward(const T* in, int cin, int height, int width, const T* weight, const T* bias,
                    int cout, int kernel, T* out, std::vector<T>& scratch) {
  const int patch_rows = cin * kernel * kernel;
  const ConstMapMat<T> w(weight, cout, patch_rows);
  MapMat<T> o(out, cout, static_cast<Eigen::Index>(height) * width);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias, cout);
  const int chunk = rows_per_chunk<T>(patch_rows, width);
  for (int row0 = 0; row0 < height; row0 += chunk) {
    const int row1 = std::min(height, row0 + chunk);
    const int span = (row1 - row0) * width;
    scratch.resize(static_cast<std::size_t>(patch_rows) * span);
    im2col(in, cin, height, width, kernel, row0, row1, scratch.data());
    const ConstMapMat<T> col(scratch.data(), patch_rows, span);
    auto block = o.middleCols(static_cast<Eigen::Index>(row0) * width, span);
    block.noalias() = w * col;
    block.colwise() += b;
  }
}

// Accumulates weight/bias gradients; writes (overwrites) the input gradient
// when grad_in is non-null.
template <typename T>
void conv2d_backward(const T* in, int cin, int height, int width, const T* weight, int cout,
                     int kernel, const T* grad_out, T* grad_weight, T* grad_bias, T* grad_in,
                     std::vector<T>& scratch) {
  const int patch_rows = cin * kernel * kernel;
  const ConstMapMat<T> w(weight, cout, patch_rows);
  const ConstMapMat<T> g(grad_out, cout, static_cast<Eigen::Index>(height) * width);
  MapMat<T> gw(grad_weight, cout, patch_rows);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(grad_bias, cout);
  gb += g.rowwise().sum();
  if (grad_in) std::fill(grad_in, grad_in + static_cast<std::size_t>(cin) * height * width, T{});

  const int chunk = rows_per_chunk<T>(patch_rows, width);
  for (int row0 = 0; row0 < height; row0 += chunk) {
    const int row1 = std::min(height, row0 + chunk);
    const int span = (row1 - row0) * width;
    scratch.resize(static_cast<std::size_t>(patch_rows) * span);
    im2col(in, cin, height, width, kernel, row0, row1, scratch.data());
    const auto g_block = g.middleCols(static_cast<Eigen::Index>(row0) * width, span);
    {
      const ConstMapMat<T> col(scratch.data(), patch_rows, span);
      gw.noalias() += g_block * col.transpose();
    }
    if (grad_in) {
      MapMat<T> col(scratch.data(), patch_rows, span);
      col.noalias() = w.transpose() * g_block;
      col2im_add(scratch.data(), cin, height, width, kernel, row0, row1, grad_in);
    }
  }
}

template <typename T>
void relu_inplace(std::vector<T>& x) {
  for (auto& v : x) v = v > T{} ? v : T{};
}

// grad *= (activation > 0)
template <typename T>
void relu_backward_inplace(const std::vector<T>& activation, std::vector<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T{})) grad[i] = T{};
  }
}

// 2x2 max pooling with stride 2; `arg` receives the flat input index of
// each window's maximum (first one on ties).
template <typename T>
void maxpool2_forward(const T* in, int channels, int height, int width, T* out,
                      int* arg) {
  const int oh = height / 2;
  const int ow = width / 2;
  for (int c = 0; c < channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * height * width;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * width + 2 * x;
        const std::size_t cands[3] = {best + 1, best + width, best + width + 1};
        for (std::size_t idx : cands) {
          if (in[idx] > in[best]) best = idx;
        }
        const std::size_t o = (static_cast<std::size_t>(c) * oh + y) * ow + x;
        out[o] = in[best];
        arg[o] = static_cast<int>(best);
      }
    }
  }
}

template <typename T>
void maxpool2_backward_add(const T* grad_out, const int* arg, std::size_t count, T* grad_in) {
  for (std::size_t i = 0; i < count; ++i) grad_in[arg[i]] += grad_out[i];
}

// Source taps for 2x bilinear upsampling with half-pixel centers
// (align_corners = false).
struct UpsampleTaps {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;  // weight of `hi`; `lo` gets 1 - w_hi

  explicit UpsampleTaps(int in_size) {
    const int out_size = 2 * in_size;
    lo.resize(out_size);
    hi.resize(out_size);
    w_hi.resize(out_size);
    for (int o = 0; o < out_size; ++o) {
      const double src = std::max(0.0, (o + 0.5) * 0.5 - 0.5);
      const int i0 = std::min(static_cast<int>(src), in_size - 1);
      lo[o] = i0;
      hi[o] = std::min(i0 + 1, in_size - 1);
      w_hi[o] = src - i0;
    }
  }
};

template <typename T>
void upsample2_forward(const T* in, int channels, int height, int width, T* out) {
  const UpsampleTaps ty(height), tx(width);
  const int oh = 2 * height;
  const int ow = 2 * width;
  for (int c = 0; c < channels; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * height * width;
    T* dst = out + static_cast<std::size_t>(c) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const T wy1 = static_cast<T>(ty.w_hi[y]);
      const T wy0 = T(1) - wy1;
      const T* r0 = plane + static_cast<std::size_t>(ty.lo[y]) * width;
      const T* r1 = plane + static_cast<std::size_t>(ty.hi[y]) * width;
      for (int x = 0; x < ow; ++x) {
        const T wx1 = static_cast<T>(tx.w_hi[x]);
        const T wx0 = T(1) - wx1;
        dst[static_cast<std::size_t>(y) * ow + x] =
            wy0 * (wx0 * r0[tx.lo[x]] + wx1 * r0[tx.hi[x]]) +
            wy1 * (wx0 * r1[tx.lo[x]] + wx1 * r1[tx.hi[x]]);
      }
    }
  }
}

template <typename T>
void upsample2_backward_add(const T* grad_out, int channels, int height, int width,
                            T* grad_in) {
  const UpsampleTaps ty(height), tx(width);
  const int oh = 2 * height;
  const int ow = 2 * width;
  for (int c = 0; c < channels; ++c) {
    const T* g = grad_out + static_cast<std::size_t>(c) * oh * ow;
    T* plane = grad_in + static_cast<std::size_t>(c) * height * width;
    for (int y = 0; y < oh; ++y) {
      const T wy1 = static_cast<T>(ty.w_hi[y]);
      const T wy0 = T(1) - wy1;
      T* r0 = plane + static_cast<std::size_t>(ty.lo[y]) * width;
      T* r1 = plane + static_cast<std::size_t>(ty.hi[y]) * width;
      for (int x = 0; x < ow; ++x) {
        const T v = g[static_cast<std::size_t>(y) * ow + x];
        const T wx1 = static_cast<T>(tx.w_hi[x]);
        const T wx0 = T(1) - wx1;
        r0[tx.lo[x]] += wy0 * wx0 * v;
        r0[tx.hi[x]] += wy0 * wx1 * v;
        r1[tx.lo[x]] += wy1 * wx0 * v;
        r1[tx.hi[x]] += wy1 * wx1 * v;
      }
    }
  }
}

}  // namespace gdm::layers
