#include "voxfuse/resample.hpp"

#include <cmath>

#include "sampling.hpp"

namespace voxfuse {

namespace {

struct ResamplePlan {
    Dims out_dims;
    Vec3 scale; // continuous source index per unit target index
    GridMeta out_meta;
};

ResamplePlan plan_resample(const GridMeta& meta, const Spacing& target) {
    for (double s : target)
        if (!(s > 0.0)) fail(ErrorCode::invalid_argument, "target spacing must be positive");

    ResamplePlan plan;
    const auto new_extent = [](std::int64_t n, double old_sp, double new_sp) {
        return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * old_sp / new_sp));
    };
    plan.out_dims = {new_extent(meta.dims.nx, meta.spacing[0], target[0]),
                     new_extent(meta.dims.ny, meta.spacing[1], target[1]),
                     new_extent(meta.dims.nz, meta.spacing[2], target[2])};
    plan.scale = {target[0] / meta.spacing[0], target[1] / meta.spacing[1],
                  target[2] / meta.spacing[2]};

    plan.out_meta.dims = plan.out_dims;
    plan.out_meta.spacing = target;
    plan.out_meta.affine = meta.affine;
    // voxel (0,0,0) keeps its world position; direction columns absorb the
    // index rescaling so world anchoring is preserved
    for (int i = 0; i < 3; ++i) {
        plan.out_meta.affine.m[i][0] *= plan.scale.x;
        plan.out_meta.affine.m[i][1] *= plan.scale.y;
        plan.out_meta.affine.m[i][2] *= plan.scale.z;
    }
    return plan;
}

template <class T, class Sample>
std::vector<T> resample_data(const ResamplePlan& plan, const Sample& sample) {
    std::vector<T> out(static_cast<std::size_t>(plan.out_dims.voxel_count()));
    std::size_t i = 0;
    for (std::int64_t z = 0; z < plan.out_dims.nz; ++z) {
        for (std::int64_t y = 0; y < plan.out_dims.ny; ++y) {
            for (std::int64_t x = 0; x < plan.out_dims.nx; ++x, ++i) {
                const Vec3 p{static_cast<double>(x) * plan.scale.x,
                             static_cast<double>(y) * plan.scale.y,
                             static_cast<double>(z) * plan.scale.z};
                out[i] = sample(p);
            }
        }
    }
    return out;
}

} // namespace

VoxelGrid resample(const VoxelGrid& grid, const Spacing& target_spacing, Interp interp) {
    if (grid.kind() == ElementKind::label && interp != Interp::nearest)
        fail(ErrorCode::invalid_argument, "label volumes must be resampled with nearest");

    const ResamplePlan plan = plan_resample(grid.meta(), target_spacing);
    const auto get = [&grid](std::int64_t x, std::int64_t y, std::int64_t z) {
        return grid.at(x, y, z);
    };

    std::vector<float> data;
    if (interp == Interp::nearest) {
        data = resample_data<float>(
            plan, [&](const Vec3& p) { return detail::nearest(get, grid.dims(), p); });
    } else {
        data = resample_data<float>(plan, [&](const Vec3& p) {
            return static_cast<float>(detail::trilinear(get, grid.dims(), p));
        });
    }
    return VoxelGrid(plan.out_meta, grid.kind(), std::move(data));
}

LabelMap resample(const LabelMap& labels, const Spacing& target_spacing) {
    const ResamplePlan plan = plan_resample(labels.meta(), target_spacing);
    const auto get = [&labels](std::int64_t x, std::int64_t y, std::int64_t z) {
        return labels.at(x, y, z);
    };
    auto data = resample_data<std::int32_t>(
        plan, [&](const Vec3& p) { return detail::nearest(get, labels.dims(), p); });
    return LabelMap(Volume<std::int32_t>(plan.out_meta, ElementKind::label, std::move(data)),
                    labels.num_classes());
}

} // namespace voxfuse
