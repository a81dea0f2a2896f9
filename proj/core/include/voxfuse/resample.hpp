#pragma once

#include "voxfuse/volume.hpp"

namespace voxfuse {

enum class Interp { nearest, trilinear };

// Resamples onto target_spacing. New dims are round(dims * spacing / target),
// at least 1 per axis. Voxel centers anchor the grids: new index j samples the
// source at continuous index j * target/spacing, so index (0,0,0) keeps its
// world position and the affine translation is unchanged.
// Label-kind grids require Interp::nearest.
VoxelGrid resample(const VoxelGrid& grid, const Spacing& target_spacing, Interp interp);
LabelMap resample(const LabelMap& labels, const Spacing& target_spacing);

} // namespace voxfuse
