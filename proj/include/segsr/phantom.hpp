#pragma once

#include <array>
#include <vector>

#include "segsr/common.hpp"
#include "segsr/volume.hpp"

namespace segsr {

// Randomised cardiac-like phantom: LV = solid ellipsoid truncated at a basal
// plane, MYO = concentric shell, RV = in-plane crescent abutting the MYO.
// Class ids: BG=0, LV=1, MYO=2, RV=3. All length parameters in mm; the long
// axis of the LV runs along depth (Z).
struct PhantomParams {
  std::array<int, 3> dims{40, 64, 64};
  std::array<double, 3> spacing_mm{2.0, 1.25, 1.25};
  std::array<double, 2> lv_long_semiaxis_mm{25.0, 30.0};
  std::array<double, 2> lv_short_semiaxis_mm{14.0, 18.0};
  std::array<double, 2> myo_thickness_mm{5.0, 8.0};
  std::array<double, 2> rv_thickness_mm{6.0, 10.0};
  std::array<double, 2> rv_angular_extent_deg{130.0, 200.0};
  double max_translation_mm = 3.0;  // in-plane, uniform per axis
  double max_rotation_deg = 25.0;   // about the long axis
  double basal_offset_scale = 0.9;  // basal cut at centre_z + scale * LV long semi-axis
  uint64_t rng_seed = 0;

  void validate() const;  // throws when the shapes cannot fit the grid
};

// Deterministic per (rng_seed, index).
LabelVolume generate_phantom(const PhantomParams& p, int index);

struct DatasetSplits {
  std::vector<LabelVolume> train, val, test;
};

// Disjoint deterministic splits by index; counts are n*ratio rounded, with
// the remainder going to test.
DatasetSplits generate_dataset(const PhantomParams& p, int n,
                               std::array<double, 3> ratios);

}  // namespace segsr
