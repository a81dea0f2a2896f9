#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxfuse/error.hpp"
#include "voxfuse/types.hpp"

namespace voxfuse {

enum class ElementKind { intensity, label, probability, uncertainty };

const char* to_string(ElementKind kind);

namespace detail {
void validate_grid(const GridMeta& meta, std::size_t data_size);
}

// Dense 3D raster. Elements are stored x-fastest (index = x + nx*(y + ny*z)),
// matching the on-disk element order of the volume files we read and write.
template <class T>
class Volume {
public:
    Volume() = default;

    Volume(GridMeta meta, ElementKind kind, std::vector<T> data)
        : meta_(std::move(meta)), kind_(kind), data_(std::move(data)) {
        detail::validate_grid(meta_, data_.size());
    }

    Volume(Dims dims, Spacing spacing, Affine4 affine, ElementKind kind, std::vector<T> data)
        : Volume(GridMeta{dims, spacing, affine}, kind, std::move(data)) {}

    static Volume filled(GridMeta meta, ElementKind kind, T value) {
        std::vector<T> data(static_cast<std::size_t>(meta.dims.voxel_count()), value);
        return Volume(std::move(meta), kind, std::move(data));
    }

    const GridMeta& meta() const { return meta_; }
    const Dims& dims() const { return meta_.dims; }
    const Spacing& spacing() const { return meta_.spacing; }
    const Affine4& affine() const { return meta_.affine; }
    ElementKind kind() const { return kind_; }
    void set_kind(ElementKind kind) { kind_ = kind; }

    std::int64_t size() const { return meta_.dims.voxel_count(); }

    std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x + meta_.dims.nx * (y + meta_.dims.ny * z);
    }

    bool in_bounds(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x >= 0 && x < meta_.dims.nx && y >= 0 && y < meta_.dims.ny && z >= 0 &&
               z < meta_.dims.nz;
    }

    T at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return data_[static_cast<std::size_t>(index(x, y, z))];
    }
    T& at(std::int64_t x, std::int64_t y, std::int64_t z) {
        return data_[static_cast<std::size_t>(index(x, y, z))];
    }

    std::span<const T> values() const { return data_; }
    std::span<T> values() { return data_; }

private:
    GridMeta meta_;
    ElementKind kind_ = ElementKind::intensity;
    std::vector<T> data_;
};

using VoxelGrid = Volume<float>;

// Integer class labels in [0, num_classes), 0 = background.
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(Volume<std::int32_t> grid, int num_classes);

    static LabelMap filled(GridMeta meta, int num_classes, std::int32_t value);

    const Volume<std::int32_t>& grid() const { return grid_; }
    Volume<std::int32_t>& grid() { return grid_; }
    int num_classes() const { return num_classes_; }

    const GridMeta& meta() const { return grid_.meta(); }
    const Dims& dims() const { return grid_.dims(); }
    std::int64_t size() const { return grid_.size(); }
    std::int32_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return grid_.at(x, y, z);
    }
    std::span<const std::int32_t> values() const { return grid_.values(); }
    std::span<std::int32_t> values() { return grid_.values(); }

private:
    Volume<std::int32_t> grid_;
    int num_classes_ = 0;
};

// Per-voxel class-probability vectors. Two storage modes:
//  - dense: one contiguous plane per class (plane l occupies [l*V, (l+1)*V))
//  - one-hot view: backed by a LabelMap, never materialized
class ProbabilityMap {
public:
    static ProbabilityMap dense(GridMeta meta, int num_classes, std::vector<float> planes);
    static ProbabilityMap onehot(std::shared_ptr<const LabelMap> labels);
    static ProbabilityMap onehot(LabelMap labels);

    bool is_onehot() const { return labels_ != nullptr; }
    int num_classes() const { return num_classes_; }
    const GridMeta& meta() const { return meta_; }
    const Dims& dims() const { return meta_.dims; }
    std::int64_t size() const { return meta_.dims.voxel_count(); }

    float value(std::int64_t voxel, int label) const {
        if (labels_) return labels_->values()[static_cast<std::size_t>(voxel)] == label ? 1.0f : 0.0f;
        return planes_[static_cast<std::size_t>(label) * static_cast<std::size_t>(size()) +
                       static_cast<std::size_t>(voxel)];
    }

    // One class plane in voxel order. Works for both storage modes.
    void copy_plane(int label, std::span<float> out) const;

    // Dense storage only.
    std::span<const float> plane(int label) const;

    // One-hot view only.
    const LabelMap& labels() const;

private:
    ProbabilityMap() = default;

    GridMeta meta_;
    int num_classes_ = 0;
    std::vector<float> planes_;                  // dense mode
    std::shared_ptr<const LabelMap> labels_;     // one-hot mode
};

// Per-voxel label-averaged ensemble variance. Values are kept in double
// precision; they are narrowed to float32 only when written to disk.
class UncertaintyMap {
public:
    UncertaintyMap() = default;
    UncertaintyMap(GridMeta meta, std::vector<double> values);

    const GridMeta& meta() const { return meta_; }
    const Dims& dims() const { return meta_.dims; }
    std::int64_t size() const { return meta_.dims.voxel_count(); }

    double value(std::int64_t voxel) const { return values_[static_cast<std::size_t>(voxel)]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    VoxelGrid to_grid() const;

private:
    GridMeta meta_;
    std::vector<double> values_;
};

} // namespace voxfuse
