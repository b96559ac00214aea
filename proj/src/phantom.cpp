#include "segsr/phantom.hpp"

#include <cmath>

namespace segsr {

namespace {

double half_extent(int n, double spacing) { return 0.5 * (n - 1) * spacing; }

}  // namespace

void PhantomParams::validate() const {
  for (int n : dims)
    if (n < 4) throw ValidationError("PhantomParams: grid too small");
  for (double s : spacing_mm)
    if (!(s > 0.0)) throw ValidationError("PhantomParams: spacing must be > 0");
  auto rng_ok = [](const std::array<double, 2>& r) {
    return r[0] > 0.0 && r[1] >= r[0];
  };
  if (!rng_ok(lv_long_semiaxis_mm) || !rng_ok(lv_short_semiaxis_mm) ||
      !rng_ok(myo_thickness_mm) || !rng_ok(rv_thickness_mm) ||
      !rng_ok(rv_angular_extent_deg))
    throw ValidationError("PhantomParams: ranges must satisfy 0 < lo <= hi");
  if (max_translation_mm < 0.0 || max_rotation_deg < 0.0)
    throw ValidationError("PhantomParams: jitter limits must be >= 0");
  if (!(basal_offset_scale > 0.0 && basal_offset_scale <= 1.0))
    throw ValidationError("PhantomParams: basal_offset_scale must be in (0,1]");

  // worst-case reach must stay inside the grid
  const double reach_z = lv_long_semiaxis_mm[1] + myo_thickness_mm[1];
  const double reach_xy = lv_short_semiaxis_mm[1] + myo_thickness_mm[1] +
                          rv_thickness_mm[1] + max_translation_mm;
  const double hz = half_extent(dims[0], spacing_mm[0]);
  const double hy = half_extent(dims[1], spacing_mm[1]);
  const double hx = half_extent(dims[2], spacing_mm[2]);
  if (reach_z > hz - spacing_mm[0] || reach_xy > hy - spacing_mm[1] ||
      reach_xy > hx - spacing_mm[2])
    throw ValidationError("PhantomParams: shapes cannot fit the grid after maximal jitter");
}

LabelVolume generate_phantom(const PhantomParams& p, int index) {
  p.validate();
  Rng rng(derive_seed(p.rng_seed, uint64_t(index)));

  const double az = rng.uniform(p.lv_long_semiaxis_mm[0], p.lv_long_semiaxis_mm[1]);
  const double ay = rng.uniform(p.lv_short_semiaxis_mm[0], p.lv_short_semiaxis_mm[1]);
  const double ax = rng.uniform(p.lv_short_semiaxis_mm[0], p.lv_short_semiaxis_mm[1]);
  const double tm = rng.uniform(p.myo_thickness_mm[0], p.myo_thickness_mm[1]);
  const double tr = rng.uniform(p.rv_thickness_mm[0], p.rv_thickness_mm[1]);
  const double ext = rng.uniform(p.rv_angular_extent_deg[0], p.rv_angular_extent_deg[1]) *
                     M_PI / 180.0;
  const double ty = rng.uniform(-p.max_translation_mm, p.max_translation_mm);
  const double tx = rng.uniform(-p.max_translation_mm, p.max_translation_mm);
  const double rot = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg) * M_PI / 180.0;

  const double cz = half_extent(p.dims[0], p.spacing_mm[0]);
  const double cy = half_extent(p.dims[1], p.spacing_mm[1]) + ty;
  const double cx = half_extent(p.dims[2], p.spacing_mm[2]) + tx;
  const double basal = p.basal_offset_scale * az;
  const double ey = ay + tm, ex = ax + tm, ez = az + tm;  // epicardial surface
  const double ry = ey + tr, rx = ex + tr;                // RV outer surface
  const double cosr = std::cos(rot), sinr = std::sin(rot);

  LabelVolume vol(p.dims[0], p.dims[1], p.dims[2], p.spacing_mm);
  for (int z = 0; z < p.dims[0]; ++z) {
    const double pz = z * p.spacing_mm[0] - cz;
    const bool below_base = pz <= basal;
    if (!below_base) continue;  // everything is cut at the basal plane
    const double zl = (pz / az) * (pz / az);
    const double ze = (pz / ez) * (pz / ez);
    for (int y = 0; y < p.dims[1]; ++y) {
      const double dy = y * p.spacing_mm[1] - cy;
      for (int x = 0; x < p.dims[2]; ++x) {
        const double dx = x * p.spacing_mm[2] - cx;
        // rotate into the canonical frame
        const double u = cosr * dy + sinr * dx;
        const double v = -sinr * dy + cosr * dx;
        uint8_t label = 0;
        if (zl + (u / ay) * (u / ay) + (v / ax) * (v / ax) <= 1.0) {
          label = 1;  // LV
        } else {
          const double epi = ze + (u / ey) * (u / ey) + (v / ex) * (v / ex);
          if (epi <= 1.0) {
            label = 2;  // MYO
          } else if (ze + (u / ry) * (u / ry) + (v / rx) * (v / rx) <= 1.0) {
            double phi = std::atan2(u, v);  // 0 along +x (width axis)
            if (std::abs(phi) <= 0.5 * ext) label = 3;  // RV
          }
        }
        vol.at(z, y, x) = label;
      }
    }
  }
  return vol;
}

DatasetSplits generate_dataset(const PhantomParams& p, int n,
                               std::array<double, 3> ratios) {
  p.validate();
  if (n < 3) throw ValidationError("generate_dataset: n must be >= 3");
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("generate_dataset: split ratios must sum to 1");
  for (double r : ratios)
    if (!(r > 0.0)) throw ValidationError("generate_dataset: split ratios must be > 0");
  const int n_train = static_cast<int>(std::lround(n * ratios[0]));
  const int n_val = static_cast<int>(std::lround(n * ratios[1]));
  const int n_test = n - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ValidationError("generate_dataset: degenerate split");

  DatasetSplits out;
  out.train.reserve(size_t(n_train));
  out.val.reserve(size_t(n_val));
  out.test.reserve(size_t(n_test));
  for (int i = 0; i < n; ++i) {
    LabelVolume v = generate_phantom(p, i);
    if (i < n_train) out.train.push_back(std::move(v));
    else if (i < n_train + n_val) out.val.push_back(std::move(v));
    else out.test.push_back(std::move(v));
  }
  return out;
}

}  // namespace segsr
