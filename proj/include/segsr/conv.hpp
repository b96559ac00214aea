#pragma once

#include <array>
#include <vector>

#include "segsr/common.hpp"
#include "segsr/kernels.hpp"

namespace segsr {

// 3D convolution, zero-padded, cubic kernel, equal stride per axis.
// Weight layout [cout][cin][k][k][k] row-major, so the GEMM operand
// W[cout, cin*k^3] is the raw weight buffer. Transposed convolutions are the
// exact adjoint: conv3d_vjp_input applied to the stage input.
struct ConvShape {
  int cin = 0, cout = 0, k = 3, stride = 2, pad = 1;
  std::array<int, 3> in_dims{};
  std::array<int, 3> out_dims{};

  static int out_extent(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

  static ConvShape make(int cin, int cout, int k, int stride, int pad,
                        std::array<int, 3> in) {
    ConvShape c{cin, cout, k, stride, pad, in, {}};
    for (int a = 0; a < 3; ++a) {
      c.out_dims[a] = out_extent(in[a], k, stride, pad);
      if (c.out_dims[a] < 1) throw ValidationError("ConvShape: output extent < 1");
    }
    return c;
  }
  size_t patch() const { return size_t(cin) * k * k * k; }
  size_t in_vox() const { return size_t(in_dims[0]) * in_dims[1] * in_dims[2]; }
  size_t out_vox() const { return size_t(out_dims[0]) * out_dims[1] * out_dims[2]; }
  size_t weight_size() const { return size_t(cout) * patch(); }
};

template <typename T>
struct ConvWorkspace {
  std::vector<T> cols;    // [patch x out_vox]
  std::vector<T> scratch; // transposes
};

template <typename T>
void im2col(const T* x, const ConvShape& cs, T* cols) {
  const int D = cs.in_dims[0], H = cs.in_dims[1], W = cs.in_dims[2];
  const int OD = cs.out_dims[0], OH = cs.out_dims[1], OW = cs.out_dims[2];
  const size_t n = cs.out_vox();
  size_t r = 0;
  for (int ci = 0; ci < cs.cin; ++ci) {
    const T* src = x + size_t(ci) * cs.in_vox();
    for (int kz = 0; kz < cs.k; ++kz)
      for (int ky = 0; ky < cs.k; ++ky)
        for (int kx = 0; kx < cs.k; ++kx, ++r) {
          T* row = cols + r * n;
          size_t col = 0;
          for (int od = 0; od < OD; ++od) {
            const int z = od * cs.stride - cs.pad + kz;
            const bool zin = z >= 0 && z < D;
            for (int oh = 0; oh < OH; ++oh) {
              const int y = oh * cs.stride - cs.pad + ky;
              const bool yin = zin && y >= 0 && y < H;
              for (int ow = 0; ow < OW; ++ow, ++col) {
                const int xw = ow * cs.stride - cs.pad + kx;
                row[col] = (yin && xw >= 0 && xw < W)
                               ? src[(size_t(z) * H + y) * W + xw]
                               : T(0);
              }
            }
          }
        }
  }
}

// Scatter-add of a cols matrix back onto the input grid; x must be zeroed by
// the caller when accumulation is not wanted.
template <typename T>
void col2im(const T* cols, const ConvShape& cs, T* x) {
  const int D = cs.in_dims[0], H = cs.in_dims[1], W = cs.in_dims[2];
  const int OD = cs.out_dims[0], OH = cs.out_dims[1], OW = cs.out_dims[2];
  const size_t n = cs.out_vox();
  size_t r = 0;
  for (int ci = 0; ci < cs.cin; ++ci) {
    T* dst = x + size_t(ci) * cs.in_vox();
    for (int kz = 0; kz < cs.k; ++kz)
      for (int ky = 0; ky < cs.k; ++ky)
        for (int kx = 0; kx < cs.k; ++kx, ++r) {
          const T* row = cols + r * n;
          size_t col = 0;
          for (int od = 0; od < OD; ++od) {
            const int z = od * cs.stride - cs.pad + kz;
            const bool zin = z >= 0 && z < D;
            for (int oh = 0; oh < OH; ++oh) {
              const int y = oh * cs.stride - cs.pad + ky;
              const bool yin = zin && y >= 0 && y < H;
              for (int ow = 0; ow < OW; ++ow, ++col) {
                const int xw = ow * cs.stride - cs.pad + kx;
                if (yin && xw >= 0 && xw < W)
                  dst[(size_t(z) * H + y) * W + xw] += row[col];
              }
            }
          }
        }
  }
}

// y[cout, out_vox] = W * im2col(x) (+ bias when given)
template <typename T>
void conv3d_fwd(const T* x, const T* w, const T* b, const ConvShape& cs, T* y,
                ConvWorkspace<T>& ws) {
  const size_t n = cs.out_vox(), kp = cs.patch();
  ws.cols.resize(kp * n);
  im2col(x, cs, ws.cols.data());
  kernels::gemm<T>(cs.cout, int(n), int(kp), T(1), w, int(kp), ws.cols.data(),
                   int(n), T(0), y, int(n));
  if (b)
    for (int co = 0; co < cs.cout; ++co) {
      T* row = y + size_t(co) * n;
      if constexpr (std::is_same_v<T, float>) {
        kernels::sadd_const(n, b[co], row);
      } else {
        for (size_t i = 0; i < n; ++i) row[i] += b[co];
      }
    }
}

// gx = adjoint of conv3d_fwd applied to gy (no bias)
template <typename T>
void conv3d_vjp_input(const T* gy, const T* w, const ConvShape& cs, T* gx,
                      ConvWorkspace<T>& ws) {
  const size_t n = cs.out_vox(), kp = cs.patch();
  ws.cols.resize(kp * n);
  ws.scratch.resize(kp * size_t(cs.cout));
  // W^T: [patch, cout]
  for (int co = 0; co < cs.cout; ++co)
    for (size_t r = 0; r < kp; ++r)
      ws.scratch[r * cs.cout + co] = w[size_t(co) * kp + r];
  kernels::gemm<T>(int(kp), int(n), cs.cout, T(1), ws.scratch.data(), cs.cout,
                   gy, int(n), T(0), ws.cols.data(), int(n));
  std::fill(gx, gx + size_t(cs.cin) * cs.in_vox(), T(0));
  col2im(ws.cols.data(), cs, gx);
}

// gw (+)= gy * im2col(x)^T ; gb (+)= row sums of gy
template <typename T>
void conv3d_vjp_weights(const T* x, const T* gy, const ConvShape& cs, T* gw,
                        T* gb, ConvWorkspace<T>& ws, bool accumulate) {
  const size_t n = cs.out_vox(), kp = cs.patch();
  ws.cols.resize(kp * n);
  im2col(x, cs, ws.cols.data());
  ws.scratch.resize(n * kp);
  for (size_t r = 0; r < kp; ++r)
    for (size_t c = 0; c < n; ++c) ws.scratch[c * kp + r] = ws.cols[r * n + c];
  kernels::gemm<T>(cs.cout, int(kp), int(n), T(1), gy, int(n), ws.scratch.data(),
                   int(kp), accumulate ? T(1) : T(0), gw, int(kp));
  if (gb)
    for (int co = 0; co < cs.cout; ++co) {
      T s = accumulate ? gb[co] : T(0);
      const T* row = gy + size_t(co) * n;
      for (size_t i = 0; i < n; ++i) s += row[i];
      gb[co] = s;
    }
}

}  // namespace segsr
