#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

// Arithmetic inner loops shared by the network, the resampling operators and
// the optimisers. Every routine exists twice: a portable scalar reference
// (the templated *_ref functions below, also used for the 64-bit verification
// paths) and an AVX2/FMA variant selected at runtime. The two are
// equivalence-tested against each other in tests/test_kernels.cpp.

namespace segsr::kernels {

enum class Backend { Scalar, Avx2 };

bool avx2_supported();
Backend active_backend();
void set_backend(Backend b);
const char* backend_name(Backend b);

// Row-major single precision C[MxN] = alpha*A[MxK]*B[KxN] + beta*C.
// beta == 0 never reads C.
void sgemm(int M, int N, int K, float alpha, const float* A, int lda,
           const float* B, int ldb, float beta, float* C, int ldc);

float sdot(size_t n, const float* x, const float* y);
void saxpy(size_t n, float a, const float* x, float* y);  // y += a*x
void sadd_const(size_t n, float a, float* y);             // y += a
void sscale(size_t n, float a, float* y);                 // y *= a

// y = x > 0 ? x : slope*x. Gradient uses the post-activation sign (the slope
// is positive, so sign(y) == sign(x)).
void lrelu(size_t n, float slope, const float* x, float* y);
void lrelu_grad(size_t n, float slope, const float* y_post, const float* gy,
                float* gx);

// One Adam update. bc1/bc2 are the 1/(1-beta^t) bias corrections for the
// current step, shared across all parameters.
void adam_step(size_t n, float lr, float beta1, float beta2, float eps,
               float bc1, float bc2, const float* g, float* w, float* m,
               float* v);

// x, y hold c contiguous planes of n values each; the softmax runs across
// the c values at each plane offset.
void softmax_channels(int c, size_t n, const float* x, float* y);

float reduce_sumsq(size_t n, const float* x);

// ---------------------------------------------------------------------------
// Reference implementations. float instantiations back the Scalar backend;
// double instantiations carry the gradient-verification paths.

template <typename T>
void gemm_ref(int M, int N, int K, T alpha, const T* A, int lda, const T* B,
              int ldb, T beta, T* C, int ldc) {
  for (int m = 0; m < M; ++m) {
    T* crow = C + size_t(m) * ldc;
    if (beta == T(0)) {
      for (int n = 0; n < N; ++n) crow[n] = T(0);
    } else if (beta != T(1)) {
      for (int n = 0; n < N; ++n) crow[n] *= beta;
    }
    const T* arow = A + size_t(m) * lda;
    for (int k = 0; k < K; ++k) {
      T a = alpha * arow[k];
      if (a == T(0)) continue;
      const T* brow = B + size_t(k) * ldb;
      for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

template <typename T>
T dot_ref(size_t n, const T* x, const T* y) {
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy_ref(size_t n, T a, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void lrelu_ref(size_t n, T slope, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void lrelu_grad_ref(size_t n, T slope, const T* y_post, const T* gy, T* gx) {
  for (size_t i = 0; i < n; ++i) gx[i] = y_post[i] > T(0) ? gy[i] : slope * gy[i];
}

template <typename T>
void adam_step_ref(size_t n, T lr, T beta1, T beta2, T eps, T bc1, T bc2,
                   const T* g, T* w, T* m, T* v) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    T mhat = m[i] * bc1;
    T vhat = v[i] * bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
void softmax_channels_ref(int c, size_t n, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) {
    T mx = x[i];
    for (int ch = 1; ch < c; ++ch) mx = std::max(mx, x[size_t(ch) * n + i]);
    T sum = T(0);
    for (int ch = 0; ch < c; ++ch) {
      T e = std::exp(x[size_t(ch) * n + i] - mx);
      y[size_t(ch) * n + i] = e;
      sum += e;
    }
    T inv = T(1) / sum;
    for (int ch = 0; ch < c; ++ch) y[size_t(ch) * n + i] *= inv;
  }
}

template <typename T>
T sumsq_ref(size_t n, const T* x) {
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

// Precision-generic entry points used by the templated network/op code:
// float goes through the dispatched kernels, double through the references.

template <typename T>
inline void gemm(int M, int N, int K, T alpha, const T* A, int lda, const T* B,
                 int ldb, T beta, T* C, int ldc) {
  if constexpr (std::is_same_v<T, float>) {
    sgemm(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  } else {
    gemm_ref(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  }
}

template <typename T>
inline T dot(size_t n, const T* x, const T* y) {
  if constexpr (std::is_same_v<T, float>) return sdot(n, x, y);
  else return dot_ref(n, x, y);
}

template <typename T>
inline void axpy(size_t n, T a, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) saxpy(n, a, x, y);
  else axpy_ref(n, a, x, y);
}

template <typename T>
inline void lrelu_t(size_t n, T slope, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) lrelu(n, slope, x, y);
  else lrelu_ref(n, slope, x, y);
}

template <typename T>
inline void lrelu_grad_t(size_t n, T slope, const T* y_post, const T* gy, T* gx) {
  if constexpr (std::is_same_v<T, float>) lrelu_grad(n, slope, y_post, gy, gx);
  else lrelu_grad_ref(n, slope, y_post, gy, gx);
}

template <typename T>
inline void softmax_channels_t(int c, size_t n, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) softmax_channels(c, n, x, y);
  else softmax_channels_ref(c, n, x, y);
}

}  // namespace segsr::kernels
