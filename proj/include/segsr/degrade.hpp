#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "segsr/common.hpp"
#include "segsr/volume.hpp"

namespace segsr {

// Per-slice in-plane displacement (d_h, d_w), in HR in-plane voxel units.
struct MotionParams {
  std::vector<std::array<double, 2>> shifts;

  size_t size() const { return shifts.size(); }
  static MotionParams zeros(int n) {
    MotionParams m;
    m.shifts.assign(size_t(n), {0.0, 0.0});
    return m;
  }
};

void save_motion(const MotionParams& m, const std::string& path);
MotionParams load_motion(const std::string& path);

// HR dims / LR dims per axis. Components >= 1.
struct ScaleFactor {
  double sd = 1.0, sh = 1.0, sw = 1.0;

  void validate() const;
  // LR size of src along one axis; throws if src is not divisible.
  static int lr_extent(int src, double s, const char* axis);
};

enum class MotionRegime { NoMotion, NormalMotion, SevereMotion, Custom };

const char* regime_name(MotionRegime r);
MotionRegime regime_from_name(const std::string& name);

struct DegradationSpec {
  ScaleFactor scale{5.0, 1.0, 1.0};
  double motion_mean_mm = 0.0;
  double motion_std_mm = 0.0;
  MotionRegime regime = MotionRegime::NoMotion;
  double label_flip_rate = 0.0;
  uint64_t rng_seed = 0;

  static DegradationSpec preset(MotionRegime r, ScaleFactor scale = {5.0, 1.0, 1.0},
                                uint64_t seed = 0, double flip_rate = 0.0);
  void validate() const;
};

enum class PlaneMode { FixedH, FixedW };

// Axis-aligned long-axis plane: FixedH selects the (D, W) image at height
// `index`, FixedW the (D, H) image at width `index`.
struct PlaneSpec {
  PlaneMode mode = PlaneMode::FixedH;
  int index = 0;
};

// --- differentiable operators (float production path, double verification) ---

template <typename T>
Grid<T> shift_slices_t(const Grid<T>& p, const MotionParams& d);

template <typename T>
void shift_slices_vjp_t(const Grid<T>& p, const MotionParams& d,
                        const Grid<T>& upstream, Grid<T>& grad_p,
                        std::vector<std::array<T, 2>>& grad_d);

template <typename T>
Grid<T> downsample_t(const Grid<T>& p, const ScaleFactor& s);

template <typename T>
Grid<T> downsample_vjp_t(const ScaleFactor& s, const Grid<T>& upstream, int src_d,
                         int src_h, int src_w);

template <typename T>
Grid<T> slice_plane_t(const Grid<T>& p, const PlaneSpec& r);

template <typename T>
Grid<T> slice_plane_vjp_t(const PlaneSpec& r, const Grid<T>& upstream, int src_d,
                          int src_h, int src_w);

inline ProbVolume shift_slices(const ProbVolume& p, const MotionParams& d) {
  return shift_slices_t<float>(p, d);
}
inline void shift_slices_vjp(const ProbVolume& p, const MotionParams& d,
                             const ProbVolume& upstream, ProbVolume& grad_p,
                             std::vector<std::array<float, 2>>& grad_d) {
  shift_slices_vjp_t<float>(p, d, upstream, grad_p, grad_d);
}
inline ProbVolume downsample(const ProbVolume& p, const ScaleFactor& s) {
  return downsample_t<float>(p, s);
}
inline ProbVolume downsample_vjp(const ProbVolume& p, const ScaleFactor& s,
                                 const ProbVolume& upstream) {
  return downsample_vjp_t<float>(s, upstream, p.d, p.h, p.w);
}
inline ProbImage slice_plane(const ProbVolume& p, const PlaneSpec& r) {
  return slice_plane_t<float>(p, r);
}
inline ProbVolume slice_plane_vjp(const ProbVolume& p, const PlaneSpec& r,
                                  const ProbImage& upstream) {
  return slice_plane_vjp_t<float>(r, upstream, p.d, p.h, p.w);
}

// Pure label-space plane extraction (evaluation + LA targets).
LabelImage slice_labels(const LabelVolume& v, const PlaneSpec& r);

// Per LR slice: amplitude ~ Normal(mu, sigma^2) truncated at 0 (mm), direction
// uniform on the circle; converted to in-plane voxels by the given spacing.
MotionParams sample_motion(int n_slices, double mu_mm, double sigma_mm,
                           double in_plane_spacing_mm, Rng& rng);

// Replicate each LR-slice shift across the s_d HR slices of its cell.
MotionParams broadcast_motion(const MotionParams& lr_shifts, int s_d);

// Forward simulator of the full degradation: one_hot -> per-LR-slice motion
// on the HR grid -> downsample -> argmax -> i.i.d. label flips. Returns the
// LR volume and the ground-truth per-LR-slice motion.
std::pair<LabelVolume, MotionParams> degrade(const LabelVolume& hr,
                                             const DegradationSpec& spec);

}  // namespace segsr
