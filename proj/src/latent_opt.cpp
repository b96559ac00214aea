#include "segsr/latent_opt.hpp"

#include <cmath>
#include <cstdio>
#include <deque>

namespace segsr {

void LatentOptConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("LatentOptConfig: lr must be > 0");
  if (gamma < 0.0) throw ValidationError("LatentOptConfig: gamma must be >= 0");
  if (!(rel_change_tol > 0.0 && rel_change_tol < 1.0))
    throw ValidationError("LatentOptConfig: rel_change_tol must be in (0,1)");
  if (rel_change_window < 1)
    throw ValidationError("LatentOptConfig: rel_change_window must be >= 1");
  if (max_iters < 1) throw ValidationError("LatentOptConfig: max_iters must be >= 1");
  if (!(prob_clip >= 0.0 && prob_clip < 0.1))
    throw ValidationError("LatentOptConfig: prob_clip out of range");
}

void save_trace_csv(const OptTrace& trace, const std::string& path) {
  std::string out = "iter,loss_total,loss_sa,loss_la,grad_z_norm,grad_d_norm\n";
  char buf[256];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.iter,
                  r.loss_total, r.loss_sa, r.loss_la, r.grad_z_norm, r.grad_d_norm);
    out += buf;
  }
  out += std::string("stop_reason,") +
         (trace.stop_reason == StopReason::Converged ? "Converged" : "MaxIters") + "\n";
  write_file_bytes(path, out.data(), out.size());
}

namespace detail {

template <typename T>
ObjectiveEval<T> evaluate_objective(const ModelCache<T>& mc, const std::vector<T>& z,
                                    const std::vector<std::array<double, 2>>& d_lr,
                                    const ScaleFactor& s, const LabelVolume& lr_target,
                                    const PlaneSpec* la_plane,
                                    const LabelImage* la_target, double gamma,
                                    double clip, double sa_weight) {
  const int s_d = static_cast<int>(std::lround(s.sd));
  if (std::abs(s.sd - s_d) > 1e-9 || s_d < 1)
    throw ValidationError("sa_loss: depth scale must be a positive integer");
  if (static_cast<int>(d_lr.size()) != lr_target.d)
    throw SizeMismatchError("sa_loss: one shift pair per LR slice required");

  DecodeWs<T> ws;
  decode_forward(mc, z, ws);

  MotionParams d_hr;
  d_hr.shifts.reserve(d_lr.size() * size_t(s_d));
  for (const auto& sh : d_lr)
    for (int i = 0; i < s_d; ++i) d_hr.shifts.push_back(sh);

  Grid<T> shifted = shift_slices_t<T>(ws.prob, d_hr);
  Grid<T> lr_prob = downsample_t<T>(shifted, s);

  ObjectiveEval<T> ev;
  ev.loss_sa = sa_weight * clipped_ce(lr_prob, lr_target, clip);

  Grid<T> g_lr(lr_prob.c, lr_prob.d, lr_prob.h, lr_prob.w);
  clipped_ce_grad(lr_prob, lr_target, clip, static_cast<T>(sa_weight), g_lr);
  Grid<T> g_shift = downsample_vjp_t<T>(s, g_lr, shifted.d, shifted.h, shifted.w);

  Grid<T> g_prob;
  std::vector<std::array<T, 2>> g_dhr;
  shift_slices_vjp_t<T>(ws.prob, d_hr, g_shift, g_prob, g_dhr);

  ev.grad_d.assign(d_lr.size(), {T(0), T(0)});
  for (size_t k = 0; k < d_lr.size(); ++k)
    for (int i = 0; i < s_d; ++i) {
      ev.grad_d[k][0] += g_dhr[k * size_t(s_d) + i][0];
      ev.grad_d[k][1] += g_dhr[k * size_t(s_d) + i][1];
    }

  if (la_plane && la_target && gamma != 0.0) {
    Grid<T> img = slice_plane_t<T>(ws.prob, *la_plane);
    ev.loss_la = clipped_ce(img, *la_target, clip);
    Grid<T> g_img(img.c, img.d, img.h, img.w);
    clipped_ce_grad(img, *la_target, clip, static_cast<T>(gamma), g_img);
    Grid<T> scattered =
        slice_plane_vjp_t<T>(*la_plane, g_img, ws.prob.d, ws.prob.h, ws.prob.w);
    kernels::axpy<T>(g_prob.v.size(), T(1), scattered.v.data(), g_prob.v.data());
  }

  ev.grad_z = decode_backward_z(mc, ws, g_prob);
  ev.total = ev.loss_sa + gamma * ev.loss_la;
  return ev;
}

template ObjectiveEval<float> evaluate_objective<float>(
    const ModelCache<float>&, const std::vector<float>&,
    const std::vector<std::array<double, 2>>&, const ScaleFactor&,
    const LabelVolume&, const PlaneSpec*, const LabelImage*, double, double, double);
template ObjectiveEval<double> evaluate_objective<double>(
    const ModelCache<double>&, const std::vector<double>&,
    const std::vector<std::array<double, 2>>&, const ScaleFactor&,
    const LabelVolume&, const PlaneSpec*, const LabelImage*, double, double, double);

}  // namespace detail

SaLossResult sa_loss(const GeneratorModel& m, const LatentVector& z,
                     const MotionParams& d_lr, const ScaleFactor& s,
                     const LabelVolume& lr_target, double clip) {
  detail::ModelCache<float> mc(m);
  auto ev = detail::evaluate_objective<float>(mc, z, d_lr.shifts, s, lr_target,
                                              nullptr, nullptr, 0.0, clip);
  SaLossResult r;
  r.loss = ev.loss_sa;
  r.grad_z = std::move(ev.grad_z);
  r.grad_d = std::move(ev.grad_d);
  return r;
}

LaLossResult la_loss(const GeneratorModel& m, const LatentVector& z,
                     const PlaneSpec& plane, const LabelImage& la_target,
                     double clip) {
  detail::ModelCache<float> mc(m);
  detail::DecodeWs<float> ws;
  detail::decode_forward<float>(mc, z, ws);
  Grid<float> img = slice_plane_t<float>(ws.prob, plane);
  LaLossResult r;
  r.loss = clipped_ce(img, la_target, clip);
  Grid<float> g_img(img.c, img.d, img.h, img.w);
  clipped_ce_grad(img, la_target, clip, 1.0f, g_img);
  Grid<float> g_prob =
      slice_plane_vjp_t<float>(plane, g_img, ws.prob.d, ws.prob.h, ws.prob.w);
  r.grad_z = detail::decode_backward_z<float>(mc, ws, g_prob);
  return r;
}

SuperResolveResult optimise(const GeneratorModel& m, const LabelVolume& lr_target,
                            const std::optional<LaTarget>& la,
                            const LatentOptConfig& cfg) {
  cfg.validate();
  lr_target.validate();
  const ModelPlan plan = make_plan(m.arch);
  const auto hr = m.arch.input_dims;
  if (hr[0] % lr_target.d != 0 || hr[1] % lr_target.h != 0 || hr[2] % lr_target.w != 0)
    throw ValidationError("optimise: model HR dims are not divisible by the LR dims");
  if (lr_target.num_classes() != m.arch.num_classes)
    throw SizeMismatchError("optimise: LR target class count does not match the model");
  const ScaleFactor s{double(hr[0]) / lr_target.d, double(hr[1]) / lr_target.h,
                      double(hr[2]) / lr_target.w};

  const bool use_la = la.has_value() && cfg.gamma != 0.0;
  const PlaneSpec* la_plane = use_la ? &la->first : nullptr;
  const LabelImage* la_img = use_la ? &la->second : nullptr;
  const double gamma = use_la ? cfg.gamma : 0.0;

  detail::ModelCache<float> mc(m);
  const int latent = plan.latent;
  const int n_lr = lr_target.d;
  const size_t nvar = size_t(latent) + 2 * size_t(n_lr);

  std::vector<float> z(size_t(latent), 0.0f);
  std::vector<std::array<double, 2>> d(size_t(n_lr), {0.0, 0.0});
  std::vector<float> g(nvar, 0.0f), am(nvar, 0.0f), av(nvar, 0.0f);

  OptTrace trace;
  std::vector<double> losses;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    auto ev = detail::evaluate_objective<float>(mc, z, d, s, lr_target, la_plane,
                                                la_img, gamma, cfg.prob_clip);
    if (!std::isfinite(ev.total)) {
      trace.stop_reason = StopReason::MaxIters;
      throw DivergenceError("optimise: non-finite loss at iteration " +
                                std::to_string(iter),
                            std::move(trace));
    }

    double gz2 = 0.0, gd2 = 0.0;
    for (float x : ev.grad_z) gz2 += double(x) * x;
    for (const auto& p : ev.grad_d) gd2 += double(p[0]) * p[0] + double(p[1]) * p[1];
    trace.rows.push_back({iter, ev.total, ev.loss_sa, ev.loss_la, std::sqrt(gz2),
                          std::sqrt(gd2)});
    losses.push_back(ev.total);

    if (static_cast<int>(losses.size()) > cfg.rel_change_window) {
      double mean_rel = 0.0;
      const size_t n = losses.size();
      for (int k = 0; k < cfg.rel_change_window; ++k) {
        const double prev = losses[n - 2 - k];
        const double curr = losses[n - 1 - k];
        mean_rel += std::abs(curr - prev) / std::max(prev, 1e-300);
      }
      mean_rel /= double(cfg.rel_change_window);
      if (mean_rel < cfg.rel_change_tol) {
        trace.stop_reason = StopReason::Converged;
        break;
      }
    }
    if (iter == cfg.max_iters) {
      trace.stop_reason = StopReason::MaxIters;
      break;
    }

    // joint Adam step on the concatenated (z, d) vector
    for (int j = 0; j < latent; ++j) g[size_t(j)] = ev.grad_z[size_t(j)];
    for (int k = 0; k < n_lr; ++k) {
      g[size_t(latent) + 2 * size_t(k)] = ev.grad_d[size_t(k)][0];
      g[size_t(latent) + 2 * size_t(k) + 1] = ev.grad_d[size_t(k)][1];
    }
    const float bc1 = 1.0f / (1.0f - std::pow(float(cfg.adam_beta1), float(iter)));
    const float bc2 = 1.0f / (1.0f - std::pow(float(cfg.adam_beta2), float(iter)));
    std::vector<float> vars(nvar);
    for (int j = 0; j < latent; ++j) vars[size_t(j)] = z[size_t(j)];
    for (int k = 0; k < n_lr; ++k) {
      vars[size_t(latent) + 2 * size_t(k)] = static_cast<float>(d[size_t(k)][0]);
      vars[size_t(latent) + 2 * size_t(k) + 1] = static_cast<float>(d[size_t(k)][1]);
    }
    kernels::adam_step(nvar, float(cfg.lr), float(cfg.adam_beta1),
                       float(cfg.adam_beta2), float(cfg.adam_eps), bc1, bc2, g.data(),
                       vars.data(), am.data(), av.data());
    for (int j = 0; j < latent; ++j) z[size_t(j)] = vars[size_t(j)];
    for (int k = 0; k < n_lr; ++k) {
      d[size_t(k)][0] = vars[size_t(latent) + 2 * size_t(k)];
      d[size_t(k)][1] = vars[size_t(latent) + 2 * size_t(k) + 1];
    }
  }

  SuperResolveResult res;
  res.trace = std::move(trace);
  res.z_hat = z;
  res.d_hat.shifts = d;
  detail::DecodeWs<float> ws;
  detail::decode_forward<float>(mc, z, ws);
  res.sr_prob = std::move(ws.prob);
  res.sr = argmax_labels(res.sr_prob, lr_target.label_names,
                         {lr_target.spacing[0] / s.sd, lr_target.spacing[1] / s.sh,
                          lr_target.spacing[2] / s.sw});
  return res;
}

}  // namespace segsr
