#pragma once

// Internal interpolation helpers shared by resample and transform.

#include <cmath>
#include <cstdint>

#include "voxfuse/types.hpp"

namespace voxfuse::detail {

inline bool inside_continuous(const Vec3& p, const Dims& d, double eps = 0.0) {
    return p.x >= -eps && p.x <= static_cast<double>(d.nx - 1) + eps && p.y >= -eps &&
           p.y <= static_cast<double>(d.ny - 1) + eps && p.z >= -eps &&
           p.z <= static_cast<double>(d.nz - 1) + eps;
}

inline bool inside_rounded(const Vec3& p, const Dims& d) {
    const std::int64_t x = std::llround(p.x);
    const std::int64_t y = std::llround(p.y);
    const std::int64_t z = std::llround(p.z);
    return x >= 0 && x < d.nx && y >= 0 && y < d.ny && z >= 0 && z < d.nz;
}

// get(x, y, z) with integer coordinates already guaranteed in bounds by the
// clamping below; p must satisfy inside_continuous.
template <class Get>
double trilinear(const Get& get, const Dims& d, const Vec3& p) {
    const double cx = std::clamp(p.x, 0.0, static_cast<double>(d.nx - 1));
    const double cy = std::clamp(p.y, 0.0, static_cast<double>(d.ny - 1));
    const double cz = std::clamp(p.z, 0.0, static_cast<double>(d.nz - 1));
    std::int64_t x0 = static_cast<std::int64_t>(std::floor(cx));
    std::int64_t y0 = static_cast<std::int64_t>(std::floor(cy));
    std::int64_t z0 = static_cast<std::int64_t>(std::floor(cz));
    x0 = std::min(x0, d.nx - 1);
    y0 = std::min(y0, d.ny - 1);
    z0 = std::min(z0, d.nz - 1);
    const std::int64_t x1 = std::min(x0 + 1, d.nx - 1);
    const std::int64_t y1 = std::min(y0 + 1, d.ny - 1);
    const std::int64_t z1 = std::min(z0 + 1, d.nz - 1);
    const double fx = cx - static_cast<double>(x0);
    const double fy = cy - static_cast<double>(y0);
    const double fz = cz - static_cast<double>(z0);

    const double c000 = get(x0, y0, z0), c100 = get(x1, y0, z0);
    const double c010 = get(x0, y1, z0), c110 = get(x1, y1, z0);
    const double c001 = get(x0, y0, z1), c101 = get(x1, y0, z1);
    const double c011 = get(x0, y1, z1), c111 = get(x1, y1, z1);

    const double c00 = c000 + fx * (c100 - c000);
    const double c10 = c010 + fx * (c110 - c010);
    const double c01 = c001 + fx * (c101 - c001);
    const double c11 = c011 + fx * (c111 - c011);
    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
}

template <class Get>
auto nearest(const Get& get, const Dims& d, const Vec3& p) {
    const std::int64_t x = std::clamp<std::int64_t>(std::llround(p.x), 0, d.nx - 1);
    const std::int64_t y = std::clamp<std::int64_t>(std::llround(p.y), 0, d.ny - 1);
    const std::int64_t z = std::clamp<std::int64_t>(std::llround(p.z), 0, d.nz - 1);
    return get(x, y, z);
}

} // namespace voxfuse::detail
