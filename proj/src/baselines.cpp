#include "segsr/baselines.hpp"

#include <cmath>
#include <limits>

namespace segsr {

namespace {

int integer_scale(double s, const char* what) {
  int i = static_cast<int>(std::lround(s));
  if (i < 1 || std::abs(s - i) > 1e-9)
    throw ValidationError(std::string(what) + ": scale component must be a positive integer");
  return i;
}

// Felzenszwalb & Huttenlocher 1D squared distance transform.
void dt1d(const double* f, int n, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
          (2.0 * q - 2.0 * v[k]);
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

// Large finite stand-in for "no site"; keeps the parabola intersections
// finite. Grid diameters here are << 1e6, so sqrt(kNoSite) dominates any
// real distance.
constexpr double kNoSite = 1e15;

// Squared distance to the nearest site voxel.
std::vector<double> edt2_sq(const std::vector<bool>& site, int h, int w) {
  std::vector<double> d(size_t(h) * w);
  for (size_t i = 0; i < d.size(); ++i) d[i] = site[i] ? 0.0 : kNoSite;

  const int n = std::max(h, w);
  std::vector<double> f(size_t(n)), out(size_t(n)), z(size_t(n) + 1);
  std::vector<int> v(size_t(n));
  // columns
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = d[size_t(y) * w + x];
    dt1d(f.data(), h, out.data(), v.data(), z.data());
    for (int y = 0; y < h; ++y) d[size_t(y) * w + x] = out[y];
  }
  // rows
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = d[size_t(y) * w + x];
    dt1d(f.data(), w, out.data(), v.data(), z.data());
    for (int x = 0; x < w; ++x) d[size_t(y) * w + x] = out[x];
  }
  return d;
}

}  // namespace

namespace detail {

std::vector<double> signed_distance_2d(const uint8_t* labels, int h, int w,
                                       uint8_t cls) {
  const size_t n = size_t(h) * w;
  std::vector<bool> inside(n), outside(n);
  for (size_t i = 0; i < n; ++i) {
    inside[i] = labels[i] == cls;
    outside[i] = !inside[i];
  }
  std::vector<double> to_inside = edt2_sq(inside, h, w);
  std::vector<double> to_outside = edt2_sq(outside, h, w);
  std::vector<double> f(n);
  for (size_t i = 0; i < n; ++i)
    f[i] = inside[i] ? std::sqrt(to_outside[i]) : -std::sqrt(to_inside[i]);
  return f;
}

}  // namespace detail

LabelVolume nn_upsample(const LabelVolume& lr, const ScaleFactor& s) {
  lr.validate();
  s.validate();
  const int sd = integer_scale(s.sd, "nn_upsample");
  const int sh = integer_scale(s.sh, "nn_upsample");
  const int sw = integer_scale(s.sw, "nn_upsample");
  LabelVolume out(lr.d * sd, lr.h * sh, lr.w * sw,
                  {lr.spacing[0] / sd, lr.spacing[1] / sh, lr.spacing[2] / sw});
  out.label_names = lr.label_names;
  for (int z = 0; z < out.d; ++z)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        out.at(z, y, x) = lr.at(z / sd, y / sh, x / sw);
  return out;
}

LabelVolume sbi_upsample(const LabelVolume& lr, const ScaleFactor& s) {
  lr.validate();
  s.validate();
  const int sd = integer_scale(s.sd, "sbi_upsample");
  if (std::abs(s.sh - 1.0) > 1e-9 || std::abs(s.sw - 1.0) > 1e-9)
    throw ValidationError("sbi_upsample: in-plane scale must be 1 (depth-only interpolation)");

  const int C = lr.num_classes();
  const size_t plane = size_t(lr.h) * lr.w;

  // per (class, LR slice) signed distance fields
  std::vector<std::vector<double>> fields(size_t(C - 1) * lr.d);
  for (int c = 1; c < C; ++c)
    for (int k = 0; k < lr.d; ++k)
      fields[size_t(c - 1) * lr.d + k] = detail::signed_distance_2d(
          lr.labels.data() + size_t(k) * plane, lr.h, lr.w, uint8_t(c));

  LabelVolume out(lr.d * sd, lr.h, lr.w,
                  {lr.spacing[0] / sd, lr.spacing[1], lr.spacing[2]});
  out.label_names = lr.label_names;

  const int anchor0 = (sd - 1) / 2;  // cell-centre anchor of LR slice k: k*sd + anchor0
  for (int z = 0; z < out.d; ++z) {
    int k0, k1;
    double t;
    if (z <= anchor0) {
      k0 = k1 = 0;
      t = 0.0;
    } else if (z >= (lr.d - 1) * sd + anchor0) {
      k0 = k1 = lr.d - 1;
      t = 0.0;
    } else {
      k0 = (z - anchor0) / sd;
      k1 = k0 + 1;
      t = double(z - (k0 * sd + anchor0)) / double(sd);
      if (k1 >= lr.d) {  // exactly on the last anchor
        k1 = k0;
        t = 0.0;
      }
    }
    for (size_t i = 0; i < plane; ++i) {
      int best = 0;
      double bestf = 0.0;
      for (int c = 1; c < C; ++c) {
        const auto& f0 = fields[size_t(c - 1) * lr.d + k0];
        const auto& f1 = fields[size_t(c - 1) * lr.d + k1];
        double f = (1.0 - t) * f0[i] + t * f1[i];
        if (f > 0.0 && (best == 0 || f > bestf)) {
          best = c;
          bestf = f;
        }
      }
      out.labels[size_t(z) * plane + i] = static_cast<uint8_t>(best);
    }
  }
  return out;
}

}  // namespace segsr
