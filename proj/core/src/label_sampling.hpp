#pragma once

// Internal label resampling shared by transform.cpp and the fusion engine.
// Sources may be z-slabs of a larger volume: bounds checks run against the
// full extent while data lives in slab coordinates.

#include <array>
#include <cmath>

#include "sampling.hpp"
#include "voxfuse/transform.hpp"
#include "voxfuse/volume.hpp"

namespace voxfuse::detail {

struct LabelSlabView {
    const Volume<std::int32_t>* slab = nullptr; // null = fully out of range
    std::int64_t z_offset = 0;                  // slab z 0 sits here in the full volume
    Dims full;

    bool in_full_bounds(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x >= 0 && x < full.nx && y >= 0 && y < full.ny && z >= 0 && z < full.nz;
    }
    std::int32_t at_full(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return slab->at(x, y, z - z_offset);
    }
};

inline std::int32_t sample_label_nearest(const LabelSlabView& view, const Vec3& p,
                                         std::int32_t fill_label) {
    if (!view.slab) return fill_label;
    const std::int64_t x = std::llround(p.x);
    const std::int64_t y = std::llround(p.y);
    const std::int64_t z = std::llround(p.z);
    if (!view.in_full_bounds(x, y, z)) return fill_label;
    return view.at_full(x, y, z);
}

// Trilinear transport of the implicit one-hot planes: corner weights are
// tallied per label, heaviest label wins, ties to the lowest index. Corners
// outside the full volume count toward the fill label.
inline std::int32_t sample_label_onehot_argmax(const LabelSlabView& view, const Vec3& p,
                                               std::int32_t fill_label) {
    if (!view.slab || !inside_continuous(p, view.full)) return fill_label;

    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(p.x));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(p.y));
    const std::int64_t z0 = static_cast<std::int64_t>(std::floor(p.z));
    const double fx = p.x - static_cast<double>(x0);
    const double fy = p.y - static_cast<double>(y0);
    const double fz = p.z - static_cast<double>(z0);

    std::array<std::int32_t, 8> labs{};
    std::array<double, 8> weights{};
    int distinct = 0;
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const double w =
                    (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
                if (w == 0.0) continue;
                const std::int64_t cx = x0 + dx, cy = y0 + dy, cz = z0 + dz;
                const std::int32_t lab =
                    view.in_full_bounds(cx, cy, cz) ? view.at_full(cx, cy, cz) : fill_label;
                int slot = 0;
                while (slot < distinct && labs[slot] != lab) ++slot;
                if (slot == distinct) {
                    labs[slot] = lab;
                    weights[slot] = 0.0;
                    ++distinct;
                }
                weights[slot] += w;
            }
        }
    }

    std::int32_t best = fill_label;
    double best_weight = -1.0;
    for (int i = 0; i < distinct; ++i) {
        if (weights[i] > best_weight || (weights[i] == best_weight && labs[i] < best)) {
            best_weight = weights[i];
            best = labs[i];
        }
    }
    return best;
}

inline std::int32_t sample_label(const LabelSlabView& view, const Vec3& p,
                                 LabelTransformMode mode, std::int32_t fill_label) {
    return mode == LabelTransformMode::nearest
               ? sample_label_nearest(view, p, fill_label)
               : sample_label_onehot_argmax(view, p, fill_label);
}

// Float slab with the same full-bounds semantics; out-of-slab-but-in-full
// corners must not occur (the caller pads the slab by one plane).
struct FloatSlabView {
    const Volume<float>* slab = nullptr;
    std::int64_t z_offset = 0;
    Dims full;
};

inline float sample_float_trilinear(const FloatSlabView& view, const Vec3& p, float fill_value) {
    if (!view.slab || !inside_continuous(p, view.full)) return fill_value;
    const Vec3 shifted{p.x, p.y, p.z - static_cast<double>(view.z_offset)};
    const auto get = [&view](std::int64_t x, std::int64_t y, std::int64_t z) {
        return view.slab->at(x, y, z);
    };
    return static_cast<float>(trilinear(get, view.slab->dims(), shifted));
}

} // namespace voxfuse::detail
