#pragma once

#include <cmath>

#include "segsr/common.hpp"
#include "segsr/volume.hpp"

namespace segsr {

// Probabilities are squeezed onto [clip, 1-(C-1)*clip] by the affine map
// q~ = (1 - C*clip)*q + clip before the log, which keeps the loss finite on
// one-hot inputs and keeps q~ on the simplex.
constexpr double kDefaultProbClip = 1e-7;

template <typename T>
double clipped_ce(const Grid<T>& prob, const LabelVolume& target, double clip) {
  if (prob.d != target.d || prob.h != target.h || prob.w != target.w)
    throw SizeMismatchError("cross-entropy: prob/target dims mismatch");
  if (prob.c != target.num_classes())
    throw SizeMismatchError("cross-entropy: channel count != class count");
  const size_t n = prob.voxels();
  const double a = 1.0 - prob.c * clip;
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double q = double(prob.v[size_t(target.labels[i]) * n + i]);
    acc -= std::log(a * q + clip);
  }
  return acc / double(n);
}

// grad += scale * dCE/dprob (only the true-class entries are touched)
template <typename T>
void clipped_ce_grad(const Grid<T>& prob, const LabelVolume& target, double clip,
                     T scale, Grid<T>& grad) {
  if (!grad.same_shape(prob))
    throw SizeMismatchError("cross-entropy grad: shape mismatch");
  const size_t n = prob.voxels();
  const double a = 1.0 - prob.c * clip;
  const double s = double(scale) / double(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t j = size_t(target.labels[i]) * n + i;
    double q = double(prob.v[j]);
    grad.v[j] -= static_cast<T>(s * a / (a * q + clip));
  }
}

// VJP of a channel softmax: out_c = q_c * (g_c - sum_k q_k g_k), accumulated.
template <typename T>
void softmax_vjp(int c, size_t n, const T* q, const T* g, T* out) {
  for (size_t i = 0; i < n; ++i) {
    T dotqg = T(0);
    for (int ch = 0; ch < c; ++ch)
      dotqg += q[size_t(ch) * n + i] * g[size_t(ch) * n + i];
    for (int ch = 0; ch < c; ++ch) {
      const size_t j = size_t(ch) * n + i;
      out[j] += q[j] * (g[j] - dotqg);
    }
  }
}

}  // namespace segsr
