#pragma once

#include <algorithm>
#include <vector>

#include "ptgan/tensor.hpp"

namespace ptgan::nn {

enum class PadMode { zero, reflect };

/// Sliding-window geometry of a square-kernel convolution.
struct ConvGeometry {
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  PadMode mode = PadMode::zero;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
  int patch_size() const { return in_channels * kernel * kernel; }
};

namespace detail {

/// Maps a padded coordinate back into [0, n); returns -1 for zero padding.
inline int source_index(int i, int n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::zero) return -1;
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace detail

/// Unfolds input patches into columns: (C*k*k) x (out_h*out_w).
template <typename Scalar>
Matrix<Scalar> im2col(const Tensor<Scalar>& x, const ConvGeometry& g) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int k = g.kernel;
  Matrix<Scalar> cols(g.patch_size(), oh * ow);
  std::vector<int> ix_map(static_cast<size_t>(ow));
  for (int c = 0; c < g.in_channels; ++c) {
    const Scalar* plane = x.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((c * k + ky) * k + kx).data();
        for (int ox = 0; ox < ow; ++ox) {
          ix_map[ox] = detail::source_index(ox * g.stride - g.pad + kx, g.in_width, g.mode);
        }
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = detail::source_index(oy * g.stride - g.pad + ky, g.in_height, g.mode);
          Scalar* out = dst + oy * ow;
          if (iy < 0) {
            std::fill(out, out + ow, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * g.in_width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ix_map[ox];
            out[ox] = ix < 0 ? Scalar(0) : src[ix];
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters columns back onto the input grid, summing overlaps.
template <typename Scalar>
Tensor<Scalar> col2im(const Matrix<Scalar>& cols, const ConvGeometry& g) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int k = g.kernel;
  Tensor<Scalar> x(g.in_channels, g.in_height, g.in_width);
  std::vector<int> ix_map(static_cast<size_t>(ow));
  for (int c = 0; c < g.in_channels; ++c) {
    Scalar* plane = x.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((c * k + ky) * k + kx).data();
        for (int ox = 0; ox < ow; ++ox) {
          ix_map[ox] = detail::source_index(ox * g.stride - g.pad + kx, g.in_width, g.mode);
        }
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = detail::source_index(oy * g.stride - g.pad + ky, g.in_height, g.mode);
          if (iy < 0) continue;
          Scalar* dst = plane + iy * g.in_width;
          const Scalar* row = src + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ix_map[ox];
            if (ix >= 0) dst[ix] += row[ox];
          }
        }
      }
    }
  }
  return x;
}

}  // namespace ptgan::nn
