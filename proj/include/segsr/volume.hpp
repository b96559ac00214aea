#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "segsr/common.hpp"

namespace segsr {

// Channel-major 4D block of probabilities (or gradients of them).
// Layout: v[((c*d + di)*h + hi)*w + wi].
template <typename T>
struct Grid {
  int c = 0, d = 0, h = 0, w = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int c_, int d_, int h_, int w_, T fill = T(0))
      : c(c_), d(d_), h(h_), w(w_), v(size_t(c_) * d_ * h_ * w_, fill) {}

  size_t voxels() const { return size_t(d) * h * w; }
  size_t size() const { return size_t(c) * voxels(); }
  bool same_shape(const Grid& o) const {
    return c == o.c && d == o.d && h == o.h && w == o.w;
  }
  size_t idx(int ci, int di, int hi, int wi) const {
    return ((size_t(ci) * d + di) * h + hi) * w + wi;
  }
  T& at(int ci, int di, int hi, int wi) { return v[idx(ci, di, hi, wi)]; }
  T at(int ci, int di, int hi, int wi) const { return v[idx(ci, di, hi, wi)]; }
  T* plane(int ci) { return v.data() + size_t(ci) * voxels(); }
  const T* plane(int ci) const { return v.data() + size_t(ci) * voxels(); }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

// Per-voxel class probabilities. 2D probability images reuse this type with
// d == 1.
using ProbVolume = Grid<float>;
using ProbImage = ProbVolume;

// Categorical 3D grid with physical spacing. Axis order (D, H, W) with depth
// the low-resolution stacking axis; spacing (sz, sy, sx) in mm.
struct LabelVolume {
  int d = 0, h = 0, w = 0;
  std::array<double, 3> spacing{2.0, 1.25, 1.25};
  std::vector<uint8_t> labels;
  std::vector<std::string> label_names{"BG", "LV", "MYO", "RV"};

  LabelVolume() = default;
  LabelVolume(int d_, int h_, int w_, std::array<double, 3> spacing_ = {2.0, 1.25, 1.25})
      : d(d_), h(h_), w(w_), spacing(spacing_), labels(size_t(d_) * h_ * w_, 0) {}

  int num_classes() const { return static_cast<int>(label_names.size()); }
  size_t voxels() const { return size_t(d) * h * w; }
  size_t idx(int di, int hi, int wi) const { return (size_t(di) * h + hi) * w + wi; }
  uint8_t& at(int di, int hi, int wi) { return labels[idx(di, hi, wi)]; }
  uint8_t at(int di, int hi, int wi) const { return labels[idx(di, hi, wi)]; }
  bool same_shape(const LabelVolume& o) const { return d == o.d && h == o.h && w == o.w; }

  void validate() const;  // throws ValidationError
};

// 2D label images (e.g. long-axis views) are label volumes with d == 1.
using LabelImage = LabelVolume;

struct DiceReport {
  std::map<std::string, double> per_label;  // foreground structures only
  double mean = 0.0;
};

ProbVolume one_hot(const LabelVolume& v);
LabelVolume argmax_labels(const ProbVolume& p,
                          const std::vector<std::string>& label_names,
                          std::array<double, 3> spacing);
// Convenience overload with the default names/spacing of an existing volume.
LabelVolume argmax_labels(const ProbVolume& p, const LabelVolume& like);

double dice(const LabelVolume& a, const LabelVolume& b, int label);
DiceReport dice_report(const LabelVolume& a, const LabelVolume& b);
double mean_foreground_dice(const LabelVolume& a, const LabelVolume& b);

// Numeric check of the per-voxel simplex invariant; throws ValidationError
// when violated beyond tol.
void check_simplex(const ProbVolume& p, double tol = 1e-5);

// Volume file pair: <base>.segvol raw payload + <base>.json sidecar header.
// A trailing ".segvol" or ".json" on the path is stripped.
void save_volume(const LabelVolume& v, const std::string& path);
LabelVolume load_volume(const std::string& path);

}  // namespace segsr
