#include "segsr/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "segsr/common.hpp"

namespace segsr::kernels {

namespace detail {

void sgemm_scalar(int, int, int, float, const float*, int, const float*, int, float, float*, int);
float sdot_scalar(size_t, const float*, const float*);
void saxpy_scalar(size_t, float, const float*, float*);
void sadd_const_scalar(size_t, float, float*);
void sscale_scalar(size_t, float, float*);
void lrelu_scalar(size_t, float, const float*, float*);
void lrelu_grad_scalar(size_t, float, const float*, const float*, float*);
void adam_step_scalar(size_t, float, float, float, float, float, float, const float*, float*, float*, float*);
void softmax_channels_scalar(int, size_t, const float*, float*);
float reduce_sumsq_scalar(size_t, const float*);

#ifdef SEGSR_HAVE_AVX2
void sgemm_avx2(int, int, int, float, const float*, int, const float*, int, float, float*, int);
float sdot_avx2(size_t, const float*, const float*);
void saxpy_avx2(size_t, float, const float*, float*);
void sadd_const_avx2(size_t, float, float*);
void sscale_avx2(size_t, float, float*);
void lrelu_avx2(size_t, float, const float*, float*);
void lrelu_grad_avx2(size_t, float, const float*, const float*, float*);
void adam_step_avx2(size_t, float, float, float, float, float, float, const float*, float*, float*, float*);
void softmax_channels_avx2(int, size_t, const float*, float*);
float reduce_sumsq_avx2(size_t, const float*);
#endif

}  // namespace detail

bool avx2_supported() {
#ifdef SEGSR_HAVE_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend pick_default() {
  if (const char* env = std::getenv("SEGSR_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_supported())
        throw ValidationError("SEGSR_KERNELS=avx2 but AVX2/FMA is unavailable");
      return Backend::Avx2;
    }
    throw ValidationError(std::string("unknown SEGSR_KERNELS value: ") + env);
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

Backend& backend_slot() {
  static Backend b = pick_default();
  return b;
}

}  // namespace

Backend active_backend() { return backend_slot(); }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported())
    throw ValidationError("AVX2/FMA backend requested but unavailable on this CPU");
  backend_slot() = b;
}

const char* backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

#ifdef SEGSR_HAVE_AVX2
#define SEGSR_DISPATCH(fn, ...)                                    \
  do {                                                             \
    if (backend_slot() == Backend::Avx2)                           \
      return detail::fn##_avx2(__VA_ARGS__);                       \
    return detail::fn##_scalar(__VA_ARGS__);                       \
  } while (0)
#else
#define SEGSR_DISPATCH(fn, ...) return detail::fn##_scalar(__VA_ARGS__)
#endif

void sgemm(int M, int N, int K, float alpha, const float* A, int lda,
           const float* B, int ldb, float beta, float* C, int ldc) {
  SEGSR_DISPATCH(sgemm, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}

float sdot(size_t n, const float* x, const float* y) {
  SEGSR_DISPATCH(sdot, n, x, y);
}

void saxpy(size_t n, float a, const float* x, float* y) {
  SEGSR_DISPATCH(saxpy, n, a, x, y);
}

void sadd_const(size_t n, float a, float* y) {
  SEGSR_DISPATCH(sadd_const, n, a, y);
}

void sscale(size_t n, float a, float* y) {
  SEGSR_DISPATCH(sscale, n, a, y);
}

void lrelu(size_t n, float slope, const float* x, float* y) {
  SEGSR_DISPATCH(lrelu, n, slope, x, y);
}

void lrelu_grad(size_t n, float slope, const float* y_post, const float* gy,
                float* gx) {
  SEGSR_DISPATCH(lrelu_grad, n, slope, y_post, gy, gx);
}

void adam_step(size_t n, float lr, float beta1, float beta2, float eps,
               float bc1, float bc2, const float* g, float* w, float* m,
               float* v) {
  SEGSR_DISPATCH(adam_step, n, lr, beta1, beta2, eps, bc1, bc2, g, w, m, v);
}

void softmax_channels(int c, size_t n, const float* x, float* y) {
  SEGSR_DISPATCH(softmax_channels, c, n, x, y);
}

float reduce_sumsq(size_t n, const float* x) {
  SEGSR_DISPATCH(reduce_sumsq, n, x);
}

#undef SEGSR_DISPATCH

}  // namespace segsr::kernels
