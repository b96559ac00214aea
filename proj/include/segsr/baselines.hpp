#pragma once

#include <vector>

#include "segsr/degrade.hpp"
#include "segsr/volume.hpp"

namespace segsr {

// Nearest-neighbour up-sampling: each LR voxel replicated into an
// s_d x s_h x s_w block. Integer scale required.
LabelVolume nn_upsample(const LabelVolume& lr, const ScaleFactor& s);

// Shape-based interpolation along the depth axis: per foreground class,
// signed Euclidean distance fields of the LR slices (positive inside) are
// linearly interpolated at the HR depth positions; each HR voxel takes the
// class of maximal positive interpolated distance, background if none.
// LR slice k anchors at HR depth k*s_d + (s_d-1)/2; end slices are clamped.
// Depth scale must be integer, in-plane scale must be 1.
LabelVolume sbi_upsample(const LabelVolume& lr, const ScaleFactor& s);

namespace detail {

// Signed distance (voxel units) of one class on a 2D slice: positive inside,
// negative outside, computed with the exact Euclidean distance transform.
std::vector<double> signed_distance_2d(const uint8_t* labels, int h, int w,
                                       uint8_t cls);

}  // namespace detail

}  // namespace segsr
