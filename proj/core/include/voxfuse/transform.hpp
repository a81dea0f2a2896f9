#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "voxfuse/resample.hpp"
#include "voxfuse/volume.hpp"

namespace voxfuse {

enum class TransformKind { identity, integer_offset, affine };

// Invertible inference-time augmentation transform acting on voxel
// coordinates: a feature at voxel p in the source appears at map(p) in the
// transformed volume. Integer offsets move data by whole voxels and round-trip
// without interpolation error; general affines interpolate on both legs.
struct TransformSpec {
    TransformKind kind = TransformKind::identity;
    std::array<std::int64_t, 3> offset{0, 0, 0}; // integer_offset
    Mat3 matrix = Mat3::identity();              // affine, voxel coords
    Vec3 translation{};                          // affine, voxel units

    static TransformSpec make_identity();
    static TransformSpec make_offset(std::int64_t dx, std::int64_t dy, std::int64_t dz);
    static TransformSpec make_affine(const Mat3& matrix, const Vec3& translation);

    Vec3 map(const Vec3& p) const;

    // invalid-transform when an affine matrix is singular (|det| <= 1e-9)
    void validate() const;
};

TransformSpec invert(const TransformSpec& spec);

// JSON object {kind, offset?, matrix?, translation?}; kind is one of
// "identity", "integer-offset", "affine".
TransformSpec parse_transform_json(const std::string& text);
std::string transform_to_json(const TransformSpec& spec);

// Values used for voxels whose pre-image lies outside the source volume.
struct FillPolicy {
    std::int32_t label_fill = 0;        // background
    float intensity_fill = -1024.0f;    // air, HU
    int probability_fill_class = 0;     // probabilities fill one-hot on this class
};

// How label maps are moved under general affines: plain nearest-neighbour
// lookup, or trilinear interpolation of the implicit one-hot planes followed
// by an argmax (ties to the lowest label index).
enum class LabelTransformMode { nearest, onehot_argmax };

// apply() resamples so that out[o] = in[map^-1(o)]. Same dims as the input;
// integer offsets use pure index shifts.
VoxelGrid apply(const TransformSpec& spec, const VoxelGrid& grid, Interp interp,
                const FillPolicy& fill = {});
LabelMap apply(const TransformSpec& spec, const LabelMap& labels, const FillPolicy& fill = {},
               LabelTransformMode mode = LabelTransformMode::nearest);

// Planes are moved individually with trilinear interpolation, then each voxel
// is renormalized to sum 1. Integer offsets on one-hot inputs stay one-hot
// views (exact, no materialization).
ProbabilityMap apply(const TransformSpec& spec, const ProbabilityMap& probs,
                     const FillPolicy& fill = {});

// 1 where the forward-then-inverse mapping keeps the voxel in-bounds, else 0.
// Restricts round-trip comparisons to voxels that never left the domain.
VoxelGrid valid_mask(const TransformSpec& spec, const Dims& dims);

} // namespace voxfuse
