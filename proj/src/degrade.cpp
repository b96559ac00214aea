#include "segsr/degrade.hpp"

#include <cmath>

#include "json.hpp"

namespace segsr {

void save_motion(const MotionParams& m, const std::string& path) {
  nlohmann::json j;
  auto arr = nlohmann::json::array();
  for (const auto& s : m.shifts) arr.push_back({s[0], s[1]});
  j["shifts_vox"] = arr;
  std::string text = j.dump();
  write_file_bytes(path, text.data(), text.size());
}

MotionParams load_motion(const std::string& path) {
  auto bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed motion file " + path + ": " + e.what());
  }
  if (!j.contains("shifts_vox") || !j["shifts_vox"].is_array())
    throw FormatError("motion file missing shifts_vox: " + path);
  MotionParams m;
  for (const auto& s : j["shifts_vox"]) {
    if (!s.is_array() || s.size() != 2)
      throw FormatError("motion entry must be a [dh, dw] pair: " + path);
    m.shifts.push_back({s[0].get<double>(), s[1].get<double>()});
  }
  return m;
}

void ScaleFactor::validate() const {
  if (!(sd >= 1.0 && sh >= 1.0 && sw >= 1.0))
    throw ValidationError("ScaleFactor: components must be >= 1");
  if (!(std::isfinite(sd) && std::isfinite(sh) && std::isfinite(sw)))
    throw ValidationError("ScaleFactor: components must be finite");
}

int ScaleFactor::lr_extent(int src, double s, const char* axis) {
  if (!(s > 0.0)) throw ValidationError("ScaleFactor: non-positive scale");
  double q = double(src) / s;
  int out = static_cast<int>(std::lround(q));
  if (out < 1 || std::abs(q - out) > 1e-9)
    throw ValidationError(std::string("volume extent not divisible by scale along ") + axis);
  return out;
}

const char* regime_name(MotionRegime r) {
  switch (r) {
    case MotionRegime::NoMotion: return "no";
    case MotionRegime::NormalMotion: return "normal";
    case MotionRegime::SevereMotion: return "severe";
    case MotionRegime::Custom: return "custom";
  }
  return "?";
}

MotionRegime regime_from_name(const std::string& name) {
  if (name == "no") return MotionRegime::NoMotion;
  if (name == "normal") return MotionRegime::NormalMotion;
  if (name == "severe") return MotionRegime::SevereMotion;
  if (name == "custom") return MotionRegime::Custom;
  throw ValidationError("unknown motion regime: " + name);
}

DegradationSpec DegradationSpec::preset(MotionRegime r, ScaleFactor scale,
                                        uint64_t seed, double flip_rate) {
  DegradationSpec s;
  s.scale = scale;
  s.regime = r;
  s.rng_seed = seed;
  s.label_flip_rate = flip_rate;
  switch (r) {
    case MotionRegime::NoMotion:
      s.motion_mean_mm = 0.0;
      s.motion_std_mm = 0.0;
      break;
    case MotionRegime::NormalMotion:
      s.motion_mean_mm = 2.3;
      s.motion_std_mm = 0.87;
      break;
    case MotionRegime::SevereMotion:
      s.motion_mean_mm = 4.0 * 2.3;
      s.motion_std_mm = 4.0 * 0.87;
      break;
    case MotionRegime::Custom:
      break;
  }
  return s;
}

void DegradationSpec::validate() const {
  scale.validate();
  if (motion_mean_mm < 0.0 || motion_std_mm < 0.0)
    throw ValidationError("DegradationSpec: motion mean/std must be >= 0");
  if (!(label_flip_rate >= 0.0 && label_flip_rate < 1.0))
    throw ValidationError("DegradationSpec: label_flip_rate must be in [0,1)");
  auto near = [](double a, double b) { return std::abs(a - b) < 1e-12; };
  switch (regime) {
    case MotionRegime::NoMotion:
      if (!near(motion_mean_mm, 0.0) || !near(motion_std_mm, 0.0))
        throw ValidationError("NoMotion regime requires mu = sigma = 0");
      break;
    case MotionRegime::NormalMotion:
      if (!near(motion_mean_mm, 2.3) || !near(motion_std_mm, 0.87))
        throw ValidationError("NormalMotion regime requires mu = 2.3, sigma = 0.87");
      break;
    case MotionRegime::SevereMotion:
      if (!near(motion_mean_mm, 9.2) || !near(motion_std_mm, 3.48))
        throw ValidationError("SevereMotion regime requires mu = 9.2, sigma = 3.48");
      break;
    case MotionRegime::Custom:
      break;
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Grid<T> shift_slices_t(const Grid<T>& p, const MotionParams& d) {
  if (static_cast<int>(d.size()) != p.d)
    throw SizeMismatchError("shift_slices: one shift pair per depth slice required");
  for (const auto& s : d.shifts)
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]))
      throw ValidationError("shift_slices: non-finite shift");

  Grid<T> out(p.c, p.d, p.h, p.w);
  const size_t plane = size_t(p.h) * p.w;
  const size_t vox = p.voxels();
  for (int di = 0; di < p.d; ++di) {
    const double a = d.shifts[di][0], b = d.shifts[di][1];
    for (int h = 0; h < p.h; ++h) {
      const double y = h - a;
      const int y0 = static_cast<int>(std::floor(y));
      const T ty = static_cast<T>(y - y0);
      for (int w = 0; w < p.w; ++w) {
        const double x = w - b;
        const int x0 = static_cast<int>(std::floor(x));
        const T tx = static_cast<T>(x - x0);
        const T w00 = (T(1) - ty) * (T(1) - tx);
        const T w01 = (T(1) - ty) * tx;
        const T w10 = ty * (T(1) - tx);
        const T w11 = ty * tx;
        const bool in00 = y0 >= 0 && y0 < p.h && x0 >= 0 && x0 < p.w;
        const bool in01 = y0 >= 0 && y0 < p.h && x0 + 1 >= 0 && x0 + 1 < p.w;
        const bool in10 = y0 + 1 >= 0 && y0 + 1 < p.h && x0 >= 0 && x0 < p.w;
        const bool in11 = y0 + 1 >= 0 && y0 + 1 < p.h && x0 + 1 >= 0 && x0 + 1 < p.w;
        const size_t base = size_t(di) * plane + size_t(h) * p.w + w;
        for (int c = 0; c < p.c; ++c) {
          // out-of-bounds samples read the background one-hot value
          const T bg = c == 0 ? T(1) : T(0);
          const T* src = p.v.data() + size_t(c) * vox + size_t(di) * plane;
          const T v00 = in00 ? src[size_t(y0) * p.w + x0] : bg;
          const T v01 = in01 ? src[size_t(y0) * p.w + x0 + 1] : bg;
          const T v10 = in10 ? src[size_t(y0 + 1) * p.w + x0] : bg;
          const T v11 = in11 ? src[size_t(y0 + 1) * p.w + x0 + 1] : bg;
          out.v[size_t(c) * vox + base] = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11;
        }
      }
    }
  }
  return out;
}

template <typename T>
void shift_slices_vjp_t(const Grid<T>& p, const MotionParams& d,
                        const Grid<T>& upstream, Grid<T>& grad_p,
                        std::vector<std::array<T, 2>>& grad_d) {
  if (static_cast<int>(d.size()) != p.d)
    throw SizeMismatchError("shift_slices_vjp: one shift pair per depth slice required");
  if (!upstream.same_shape(p))
    throw SizeMismatchError("shift_slices_vjp: upstream shape mismatch");

  grad_p = Grid<T>(p.c, p.d, p.h, p.w);
  grad_d.assign(size_t(p.d), {T(0), T(0)});
  const size_t plane = size_t(p.h) * p.w;
  const size_t vox = p.voxels();
  for (int di = 0; di < p.d; ++di) {
    const double a = d.shifts[di][0], b = d.shifts[di][1];
    T ga = T(0), gb = T(0);
    for (int h = 0; h < p.h; ++h) {
      const double y = h - a;
      const int y0 = static_cast<int>(std::floor(y));
      const T ty = static_cast<T>(y - y0);
      for (int w = 0; w < p.w; ++w) {
        const double x = w - b;
        const int x0 = static_cast<int>(std::floor(x));
        const T tx = static_cast<T>(x - x0);
        const T w00 = (T(1) - ty) * (T(1) - tx);
        const T w01 = (T(1) - ty) * tx;
        const T w10 = ty * (T(1) - tx);
        const T w11 = ty * tx;
        const bool iny0 = y0 >= 0 && y0 < p.h;
        const bool iny1 = y0 + 1 >= 0 && y0 + 1 < p.h;
        const bool inx0 = x0 >= 0 && x0 < p.w;
        const bool inx1 = x0 + 1 >= 0 && x0 + 1 < p.w;
        const size_t base = size_t(di) * plane + size_t(h) * p.w + w;
        for (int c = 0; c < p.c; ++c) {
          const T g = upstream.v[size_t(c) * vox + base];
          if (g == T(0)) continue;
          const T bg = c == 0 ? T(1) : T(0);
          const T* src = p.v.data() + size_t(c) * vox + size_t(di) * plane;
          T* dst = grad_p.v.data() + size_t(c) * vox + size_t(di) * plane;
          const T v00 = (iny0 && inx0) ? src[size_t(y0) * p.w + x0] : bg;
          const T v01 = (iny0 && inx1) ? src[size_t(y0) * p.w + x0 + 1] : bg;
          const T v10 = (iny1 && inx0) ? src[size_t(y0 + 1) * p.w + x0] : bg;
          const T v11 = (iny1 && inx1) ? src[size_t(y0 + 1) * p.w + x0 + 1] : bg;
          if (iny0 && inx0) dst[size_t(y0) * p.w + x0] += g * w00;
          if (iny0 && inx1) dst[size_t(y0) * p.w + x0 + 1] += g * w01;
          if (iny1 && inx0) dst[size_t(y0 + 1) * p.w + x0] += g * w10;
          if (iny1 && inx1) dst[size_t(y0 + 1) * p.w + x0 + 1] += g * w11;
          // d(sample)/dy and /dx; shifts enter with opposite sign (y = h - a)
          const T dsy = (T(1) - tx) * (v10 - v00) + tx * (v11 - v01);
          const T dsx = (T(1) - ty) * (v01 - v00) + ty * (v11 - v10);
          ga -= g * dsy;
          gb -= g * dsx;
        }
      }
    }
    grad_d[di] = {ga, gb};
  }
}

namespace {

struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> t;
};

AxisTaps make_axis_taps(int out_n, int src_n, double s) {
  AxisTaps a;
  a.i0.resize(out_n);
  a.i1.resize(out_n);
  a.t.resize(out_n);
  for (int k = 0; k < out_n; ++k) {
    double u = (k + 0.5) * s - 0.5;  // cell-centre convention
    int i0 = static_cast<int>(std::floor(u));
    double t = u - i0;
    int i1 = i0 + 1;
    // clamp taps at the boundaries
    if (i0 < 0) i0 = 0;
    if (i0 > src_n - 1) i0 = src_n - 1;
    if (i1 < 0) i1 = 0;
    if (i1 > src_n - 1) i1 = src_n - 1;
    a.i0[k] = i0;
    a.i1[k] = i1;
    a.t[k] = t;
  }
  return a;
}

}  // namespace

template <typename T>
Grid<T> downsample_t(const Grid<T>& p, const ScaleFactor& s) {
  s.validate();
  const int od = ScaleFactor::lr_extent(p.d, s.sd, "depth");
  const int oh = ScaleFactor::lr_extent(p.h, s.sh, "height");
  const int ow = ScaleFactor::lr_extent(p.w, s.sw, "width");
  const AxisTaps tz = make_axis_taps(od, p.d, s.sd);
  const AxisTaps ty = make_axis_taps(oh, p.h, s.sh);
  const AxisTaps tx = make_axis_taps(ow, p.w, s.sw);

  Grid<T> out(p.c, od, oh, ow);
  const size_t svox = p.voxels();
  const size_t ovox = out.voxels();
  for (int c = 0; c < p.c; ++c) {
    const T* src = p.v.data() + size_t(c) * svox;
    T* dst = out.v.data() + size_t(c) * ovox;
    for (int kz = 0; kz < od; ++kz) {
      const double wz1 = tz.t[kz], wz0 = 1.0 - wz1;
      for (int ky = 0; ky < oh; ++ky) {
        const double wy1 = ty.t[ky], wy0 = 1.0 - wy1;
        for (int kx = 0; kx < ow; ++kx) {
          const double wx1 = tx.t[kx], wx0 = 1.0 - wx1;
          auto sample = [&](int zi, int yi, int xi) -> double {
            return double(src[(size_t(zi) * p.h + yi) * p.w + xi]);
          };
          double acc = 0.0;
          acc += wz0 * wy0 * wx0 * sample(tz.i0[kz], ty.i0[ky], tx.i0[kx]);
          acc += wz0 * wy0 * wx1 * sample(tz.i0[kz], ty.i0[ky], tx.i1[kx]);
          acc += wz0 * wy1 * wx0 * sample(tz.i0[kz], ty.i1[ky], tx.i0[kx]);
          acc += wz0 * wy1 * wx1 * sample(tz.i0[kz], ty.i1[ky], tx.i1[kx]);
          acc += wz1 * wy0 * wx0 * sample(tz.i1[kz], ty.i0[ky], tx.i0[kx]);
          acc += wz1 * wy0 * wx1 * sample(tz.i1[kz], ty.i0[ky], tx.i1[kx]);
          acc += wz1 * wy1 * wx0 * sample(tz.i1[kz], ty.i1[ky], tx.i0[kx]);
          acc += wz1 * wy1 * wx1 * sample(tz.i1[kz], ty.i1[ky], tx.i1[kx]);
          dst[(size_t(kz) * oh + ky) * ow + kx] = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

template <typename T>
Grid<T> downsample_vjp_t(const ScaleFactor& s, const Grid<T>& upstream, int src_d,
                         int src_h, int src_w) {
  s.validate();
  const int od = ScaleFactor::lr_extent(src_d, s.sd, "depth");
  const int oh = ScaleFactor::lr_extent(src_h, s.sh, "height");
  const int ow = ScaleFactor::lr_extent(src_w, s.sw, "width");
  if (upstream.d != od || upstream.h != oh || upstream.w != ow)
    throw SizeMismatchError("downsample_vjp: upstream shape mismatch");
  const AxisTaps tz = make_axis_taps(od, src_d, s.sd);
  const AxisTaps ty = make_axis_taps(oh, src_h, s.sh);
  const AxisTaps tx = make_axis_taps(ow, src_w, s.sw);

  Grid<T> grad(upstream.c, src_d, src_h, src_w);
  const size_t svox = grad.voxels();
  const size_t ovox = upstream.voxels();
  for (int c = 0; c < upstream.c; ++c) {
    const T* up = upstream.v.data() + size_t(c) * ovox;
    T* dst = grad.v.data() + size_t(c) * svox;
    for (int kz = 0; kz < od; ++kz) {
      const double wz1 = tz.t[kz], wz0 = 1.0 - wz1;
      for (int ky = 0; ky < oh; ++ky) {
        const double wy1 = ty.t[ky], wy0 = 1.0 - wy1;
        for (int kx = 0; kx < ow; ++kx) {
          const double wx1 = tx.t[kx], wx0 = 1.0 - wx1;
          const T g = up[(size_t(kz) * oh + ky) * ow + kx];
          if (g == T(0)) continue;
          auto add = [&](int zi, int yi, int xi, double wgt) {
            dst[(size_t(zi) * src_h + yi) * src_w + xi] += static_cast<T>(wgt * double(g));
          };
          add(tz.i0[kz], ty.i0[ky], tx.i0[kx], wz0 * wy0 * wx0);
          add(tz.i0[kz], ty.i0[ky], tx.i1[kx], wz0 * wy0 * wx1);
          add(tz.i0[kz], ty.i1[ky], tx.i0[kx], wz0 * wy1 * wx0);
          add(tz.i0[kz], ty.i1[ky], tx.i1[kx], wz0 * wy1 * wx1);
          add(tz.i1[kz], ty.i0[ky], tx.i0[kx], wz1 * wy0 * wx0);
          add(tz.i1[kz], ty.i0[ky], tx.i1[kx], wz1 * wy0 * wx1);
          add(tz.i1[kz], ty.i1[ky], tx.i0[kx], wz1 * wy1 * wx0);
          add(tz.i1[kz], ty.i1[ky], tx.i1[kx], wz1 * wy1 * wx1);
        }
      }
    }
  }
  return grad;
}

namespace {

void check_plane(const PlaneSpec& r, int h, int w) {
  if (r.mode == PlaneMode::FixedH) {
    if (r.index < 0 || r.index >= h)
      throw ValidationError("PlaneSpec: fixed-h index out of bounds");
  } else {
    if (r.index < 0 || r.index >= w)
      throw ValidationError("PlaneSpec: fixed-w index out of bounds");
  }
}

}  // namespace

template <typename T>
Grid<T> slice_plane_t(const Grid<T>& p, const PlaneSpec& r) {
  check_plane(r, p.h, p.w);
  const size_t vox = p.voxels();
  if (r.mode == PlaneMode::FixedH) {
    Grid<T> out(p.c, 1, p.d, p.w);
    for (int c = 0; c < p.c; ++c)
      for (int a = 0; a < p.d; ++a)
        for (int b = 0; b < p.w; ++b)
          out.at(c, 0, a, b) = p.v[size_t(c) * vox + (size_t(a) * p.h + r.index) * p.w + b];
    return out;
  }
  Grid<T> out(p.c, 1, p.d, p.h);
  for (int c = 0; c < p.c; ++c)
    for (int a = 0; a < p.d; ++a)
      for (int b = 0; b < p.h; ++b)
        out.at(c, 0, a, b) = p.v[size_t(c) * vox + (size_t(a) * p.h + b) * p.w + r.index];
  return out;
}

template <typename T>
Grid<T> slice_plane_vjp_t(const PlaneSpec& r, const Grid<T>& upstream, int src_d,
                          int src_h, int src_w) {
  check_plane(r, src_h, src_w);
  const int expect_b = r.mode == PlaneMode::FixedH ? src_w : src_h;
  if (upstream.d != 1 || upstream.h != src_d || upstream.w != expect_b)
    throw SizeMismatchError("slice_plane_vjp: upstream shape mismatch");
  Grid<T> grad(upstream.c, src_d, src_h, src_w);
  const size_t vox = grad.voxels();
  if (r.mode == PlaneMode::FixedH) {
    for (int c = 0; c < upstream.c; ++c)
      for (int a = 0; a < src_d; ++a)
        for (int b = 0; b < src_w; ++b)
          grad.v[size_t(c) * vox + (size_t(a) * src_h + r.index) * src_w + b] =
              upstream.at(c, 0, a, b);
  } else {
    for (int c = 0; c < upstream.c; ++c)
      for (int a = 0; a < src_d; ++a)
        for (int b = 0; b < src_h; ++b)
          grad.v[size_t(c) * vox + (size_t(a) * src_h + b) * src_w + r.index] =
              upstream.at(c, 0, a, b);
  }
  return grad;
}

LabelImage slice_labels(const LabelVolume& v, const PlaneSpec& r) {
  check_plane(r, v.h, v.w);
  if (r.mode == PlaneMode::FixedH) {
    LabelImage img(1, v.d, v.w, {1.0, v.spacing[0], v.spacing[2]});
    img.label_names = v.label_names;
    for (int a = 0; a < v.d; ++a)
      for (int b = 0; b < v.w; ++b) img.at(0, a, b) = v.at(a, r.index, b);
    return img;
  }
  LabelImage img(1, v.d, v.h, {1.0, v.spacing[0], v.spacing[1]});
  img.label_names = v.label_names;
  for (int a = 0; a < v.d; ++a)
    for (int b = 0; b < v.h; ++b) img.at(0, a, b) = v.at(a, b, r.index);
  return img;
}

MotionParams sample_motion(int n_slices, double mu_mm, double sigma_mm,
                           double in_plane_spacing_mm, Rng& rng) {
  if (!(in_plane_spacing_mm > 0.0))
    throw ValidationError("sample_motion: in-plane spacing must be > 0");
  if (sigma_mm < 0.0) throw ValidationError("sample_motion: sigma must be >= 0");
  MotionParams m;
  m.shifts.reserve(size_t(n_slices));
  for (int i = 0; i < n_slices; ++i) {
    double amp;
    if (sigma_mm == 0.0) {
      amp = std::max(0.0, mu_mm);
    } else {
      do {
        amp = rng.normal(mu_mm, sigma_mm);
      } while (amp < 0.0);  // truncate at 0
    }
    double theta = rng.uniform01() * 2.0 * M_PI;
    m.shifts.push_back({amp * std::sin(theta) / in_plane_spacing_mm,
                        amp * std::cos(theta) / in_plane_spacing_mm});
  }
  return m;
}

MotionParams broadcast_motion(const MotionParams& lr_shifts, int s_d) {
  if (s_d < 1) throw ValidationError("broadcast_motion: s_d must be >= 1");
  MotionParams hr;
  hr.shifts.reserve(lr_shifts.size() * size_t(s_d));
  for (const auto& s : lr_shifts.shifts)
    for (int i = 0; i < s_d; ++i) hr.shifts.push_back(s);
  return hr;
}

std::pair<LabelVolume, MotionParams> degrade(const LabelVolume& hr,
                                             const DegradationSpec& spec) {
  hr.validate();
  spec.validate();
  const int lr_d = ScaleFactor::lr_extent(hr.d, spec.scale.sd, "depth");
  const int lr_h = ScaleFactor::lr_extent(hr.h, spec.scale.sh, "height");
  const int lr_w = ScaleFactor::lr_extent(hr.w, spec.scale.sw, "width");
  (void)lr_h;
  (void)lr_w;
  const int s_d = static_cast<int>(std::lround(spec.scale.sd));
  if (std::abs(spec.scale.sd - s_d) > 1e-9)
    throw ValidationError("degrade: depth scale must be integer (LR slices are the acquisition unit)");
  if (std::abs(hr.spacing[1] - hr.spacing[2]) > 1e-9)
    throw ValidationError("degrade: anisotropic in-plane spacing is not supported");

  Rng rng(spec.rng_seed);
  MotionParams d_lr = sample_motion(lr_d, spec.motion_mean_mm, spec.motion_std_mm,
                                    hr.spacing[1], rng);
  MotionParams d_hr = broadcast_motion(d_lr, s_d);

  ProbVolume p = one_hot(hr);
  ProbVolume shifted = shift_slices(p, d_hr);
  ProbVolume lr_prob = downsample(shifted, spec.scale);

  LabelVolume lr = argmax_labels(lr_prob, hr.label_names,
                                 {hr.spacing[0] * spec.scale.sd,
                                  hr.spacing[1] * spec.scale.sh,
                                  hr.spacing[2] * spec.scale.sw});

  if (spec.label_flip_rate > 0.0) {
    const int c = lr.num_classes();
    for (auto& l : lr.labels) {
      if (rng.uniform01() < spec.label_flip_rate) {
        uint64_t k = rng.uniform_int(uint64_t(c - 1));
        l = static_cast<uint8_t>(k >= l ? k + 1 : k);
      }
    }
  }
  return {std::move(lr), std::move(d_lr)};
}

// explicit instantiations: float production path, double verification path
template Grid<float> shift_slices_t<float>(const Grid<float>&, const MotionParams&);
template Grid<double> shift_slices_t<double>(const Grid<double>&, const MotionParams&);
template void shift_slices_vjp_t<float>(const Grid<float>&, const MotionParams&,
                                        const Grid<float>&, Grid<float>&,
                                        std::vector<std::array<float, 2>>&);
template void shift_slices_vjp_t<double>(const Grid<double>&, const MotionParams&,
                                         const Grid<double>&, Grid<double>&,
                                         std::vector<std::array<double, 2>>&);
template Grid<float> downsample_t<float>(const Grid<float>&, const ScaleFactor&);
template Grid<double> downsample_t<double>(const Grid<double>&, const ScaleFactor&);
template Grid<float> downsample_vjp_t<float>(const ScaleFactor&, const Grid<float>&, int, int, int);
template Grid<double> downsample_vjp_t<double>(const ScaleFactor&, const Grid<double>&, int, int, int);
template Grid<float> slice_plane_t<float>(const Grid<float>&, const PlaneSpec&);
template Grid<double> slice_plane_t<double>(const Grid<double>&, const PlaneSpec&);
template Grid<float> slice_plane_vjp_t<float>(const PlaneSpec&, const Grid<float>&, int, int, int);
template Grid<double> slice_plane_vjp_t<double>(const PlaneSpec&, const Grid<double>&, int, int, int);

}  // namespace segsr
