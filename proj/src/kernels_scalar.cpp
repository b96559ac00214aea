#include "segsr/kernels.hpp"

namespace segsr::kernels::detail {

void sgemm_scalar(int M, int N, int K, float alpha, const float* A, int lda,
                  const float* B, int ldb, float beta, float* C, int ldc) {
  gemm_ref(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}

float sdot_scalar(size_t n, const float* x, const float* y) {
  return dot_ref(n, x, y);
}

void saxpy_scalar(size_t n, float a, const float* x, float* y) {
  axpy_ref(n, a, x, y);
}

void sadd_const_scalar(size_t n, float a, float* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a;
}

void sscale_scalar(size_t n, float a, float* y) {
  for (size_t i = 0; i < n; ++i) y[i] *= a;
}

void lrelu_scalar(size_t n, float slope, const float* x, float* y) {
  lrelu_ref(n, slope, x, y);
}

void lrelu_grad_scalar(size_t n, float slope, const float* y_post,
                       const float* gy, float* gx) {
  lrelu_grad_ref(n, slope, y_post, gy, gx);
}

void adam_step_scalar(size_t n, float lr, float beta1, float beta2, float eps,
                      float bc1, float bc2, const float* g, float* w, float* m,
                      float* v) {
  adam_step_ref(n, lr, beta1, beta2, eps, bc1, bc2, g, w, m, v);
}

void softmax_channels_scalar(int c, size_t n, const float* x, float* y) {
  softmax_channels_ref(c, n, x, y);
}

float reduce_sumsq_scalar(size_t n, const float* x) {
  return sumsq_ref(n, x);
}

}  // namespace segsr::kernels::detail
