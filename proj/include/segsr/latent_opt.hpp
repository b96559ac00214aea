#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "segsr/degrade.hpp"
#include "segsr/generator.hpp"
#include "segsr/losses.hpp"
#include "segsr/volume.hpp"

namespace segsr {

struct LatentOptConfig {
  double lr = 1e-4;
  double gamma = 1.0;  // LA term weight; ignored when no LA target is given
  double rel_change_tol = 0.05;
  int rel_change_window = 10;
  int max_iters = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double prob_clip = 1e-7;

  void validate() const;
};

enum class StopReason { Converged, MaxIters };

struct OptTraceRow {
  int iter = 0;  // 1-based
  double loss_total = 0.0;
  double loss_sa = 0.0;
  double loss_la = 0.0;
  double grad_z_norm = 0.0;
  double grad_d_norm = 0.0;
};

struct OptTrace {
  std::vector<OptTraceRow> rows;
  StopReason stop_reason = StopReason::MaxIters;
};

void save_trace_csv(const OptTrace& trace, const std::string& path);

struct DivergenceError : Error {
  OptTrace trace;
  DivergenceError(const std::string& msg, OptTrace t) : Error(msg), trace(std::move(t)) {}
};

struct SuperResolveResult {
  LabelVolume sr;
  ProbVolume sr_prob;
  MotionParams d_hat;  // per LR slice, HR in-plane voxel units
  LatentVector z_hat;
  OptTrace trace;
};

struct SaLossResult {
  double loss = 0.0;
  LatentVector grad_z;
  std::vector<std::array<float, 2>> grad_d;
};

struct LaLossResult {
  double loss = 0.0;
  LatentVector grad_z;
};

// CE(M_d(down_s G(z)), S_LR) with motion applied on the HR grid before
// down-sampling, matching the simulator. d has one shift per LR slice.
SaLossResult sa_loss(const GeneratorModel& m, const LatentVector& z,
                     const MotionParams& d_lr, const ScaleFactor& s,
                     const LabelVolume& lr_target,
                     double clip = kDefaultProbClip);

// CE(R G(z), S_LA) on the selected plane.
LaLossResult la_loss(const GeneratorModel& m, const LatentVector& z,
                     const PlaneSpec& plane, const LabelImage& la_target,
                     double clip = kDefaultProbClip);

using LaTarget = std::pair<PlaneSpec, LabelImage>;

// Joint Adam search over (z, d) from zero initialisation. Stops when the
// trailing-window mean of |dL|/L drops below rel_change_tol, or at max_iters.
SuperResolveResult optimise(const GeneratorModel& m, const LabelVolume& lr_target,
                            const std::optional<LaTarget>& la,
                            const LatentOptConfig& cfg);

namespace detail {

template <typename T>
struct ObjectiveEval {
  double loss_sa = 0.0;
  double loss_la = 0.0;
  double total = 0.0;
  std::vector<T> grad_z;
  std::vector<std::array<T, 2>> grad_d;  // per LR slice
};

// sa_weight scales the SA term (loss and gradients alike); gamma scales the
// LA term. la == nullptr skips the LA branch entirely.
template <typename T>
ObjectiveEval<T> evaluate_objective(const ModelCache<T>& mc, const std::vector<T>& z,
                                    const std::vector<std::array<double, 2>>& d_lr,
                                    const ScaleFactor& s, const LabelVolume& lr_target,
                                    const PlaneSpec* la_plane,
                                    const LabelImage* la_target, double gamma,
                                    double clip, double sa_weight = 1.0);

}  // namespace detail

}  // namespace segsr
