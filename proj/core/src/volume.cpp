#include "voxfuse/volume.hpp"

#include <algorithm>
#include <cmath>

namespace voxfuse {

namespace {
constexpr double kProbTolerance = 1e-4;
}

bool same_geometry(const GridMeta& a, const GridMeta& b, double tol) {
    if (!(a.dims == b.dims)) return false;
    for (int i = 0; i < 3; ++i)
        if (std::abs(a.spacing[i] - b.spacing[i]) > tol) return false;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            if (std::abs(a.affine.m[i][j] - b.affine.m[i][j]) > tol) return false;
    return true;
}

const char* to_string(ElementKind kind) {
    switch (kind) {
        case ElementKind::intensity: return "intensity";
        case ElementKind::label: return "label";
        case ElementKind::probability: return "probability";
        case ElementKind::uncertainty: return "uncertainty";
    }
    return "?";
}

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::io_error: return "io-error";
        case ErrorCode::input_missing: return "input-missing";
        case ErrorCode::unsupported_format: return "unsupported-format";
        case ErrorCode::corrupt_input: return "corrupt-input";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::invalid_transform: return "invalid-transform";
        case ErrorCode::invalid_spec: return "invalid-spec";
        case ErrorCode::incompatible_member: return "incompatible-member";
        case ErrorCode::incompatible_volumes: return "incompatible-volumes";
        case ErrorCode::empty_ensemble: return "empty-ensemble";
        case ErrorCode::empty_domain: return "empty-domain";
        case ErrorCode::corrupt_votes: return "corrupt-votes";
        case ErrorCode::undefined_correlation: return "undefined-correlation";
    }
    return "?";
}

namespace detail {

void validate_grid(const GridMeta& meta, std::size_t data_size) {
    if (meta.dims.nx <= 0 || meta.dims.ny <= 0 || meta.dims.nz <= 0)
        fail(ErrorCode::invalid_argument, "volume dimensions must be positive");
    for (double s : meta.spacing)
        if (!(s > 0.0)) fail(ErrorCode::invalid_argument, "voxel spacing must be positive");
    if (std::abs(meta.affine.det3()) <= 1e-12)
        fail(ErrorCode::invalid_argument, "voxel-to-world affine is not invertible");
    if (data_size != static_cast<std::size_t>(meta.dims.voxel_count()))
        fail(ErrorCode::invalid_argument, "data length does not match volume dimensions");
}

} // namespace detail

LabelMap::LabelMap(Volume<std::int32_t> grid, int num_classes)
    : grid_(std::move(grid)), num_classes_(num_classes) {
    if (num_classes_ < 2)
        fail(ErrorCode::invalid_argument, "label map needs at least 2 classes");
    for (std::int32_t v : grid_.values()) {
        if (v < 0 || v >= num_classes_)
            fail(ErrorCode::corrupt_input,
                 "label value " + std::to_string(v) + " outside [0, " +
                     std::to_string(num_classes_) + ")");
    }
    grid_.set_kind(ElementKind::label);
}

LabelMap LabelMap::filled(GridMeta meta, int num_classes, std::int32_t value) {
    return LabelMap(Volume<std::int32_t>::filled(std::move(meta), ElementKind::label, value),
                    num_classes);
}

ProbabilityMap ProbabilityMap::dense(GridMeta meta, int num_classes, std::vector<float> planes) {
    if (num_classes < 2) fail(ErrorCode::invalid_argument, "probability map needs >= 2 classes");
    const std::size_t count = static_cast<std::size_t>(std::max<std::int64_t>(meta.dims.voxel_count(), 0));
    detail::validate_grid(meta, count);
    if (planes.size() != count * static_cast<std::size_t>(num_classes))
        fail(ErrorCode::invalid_argument, "probability plane data length mismatch");

    for (float& p : planes) {
        if (!(p >= -kProbTolerance && p <= 1.0f + kProbTolerance))
            fail(ErrorCode::invalid_argument,
                 "probability value " + std::to_string(p) + " outside [0,1] beyond tolerance");
        p = std::clamp(p, 0.0f, 1.0f);
    }
    for (std::size_t v = 0; v < count; ++v) {
        double sum = 0.0;
        for (int l = 0; l < num_classes; ++l)
            sum += planes[static_cast<std::size_t>(l) * count + v];
        if (std::abs(sum - 1.0) > kProbTolerance)
            fail(ErrorCode::invalid_argument,
                 "per-voxel probability sum " + std::to_string(sum) + " deviates from 1");
    }

    ProbabilityMap map;
    map.meta_ = std::move(meta);
    map.num_classes_ = num_classes;
    map.planes_ = std::move(planes);
    return map;
}

ProbabilityMap ProbabilityMap::onehot(std::shared_ptr<const LabelMap> labels) {
    if (!labels) fail(ErrorCode::invalid_argument, "null label map");
    ProbabilityMap map;
    map.meta_ = labels->meta();
    map.num_classes_ = labels->num_classes();
    map.labels_ = std::move(labels);
    return map;
}

ProbabilityMap ProbabilityMap::onehot(LabelMap labels) {
    return onehot(std::make_shared<const LabelMap>(std::move(labels)));
}

void ProbabilityMap::copy_plane(int label, std::span<float> out) const {
    const std::size_t count = static_cast<std::size_t>(size());
    if (out.size() != count) fail(ErrorCode::invalid_argument, "plane buffer size mismatch");
    if (label < 0 || label >= num_classes_)
        fail(ErrorCode::invalid_argument, "class index out of range");
    if (labels_) {
        const auto values = labels_->values();
        for (std::size_t v = 0; v < count; ++v) out[v] = values[v] == label ? 1.0f : 0.0f;
    } else {
        const float* src = planes_.data() + static_cast<std::size_t>(label) * count;
        std::copy(src, src + count, out.begin());
    }
}

std::span<const float> ProbabilityMap::plane(int label) const {
    if (labels_) fail(ErrorCode::invalid_argument, "one-hot probability map has no dense planes");
    if (label < 0 || label >= num_classes_)
        fail(ErrorCode::invalid_argument, "class index out of range");
    const std::size_t count = static_cast<std::size_t>(size());
    return {planes_.data() + static_cast<std::size_t>(label) * count, count};
}

const LabelMap& ProbabilityMap::labels() const {
    if (!labels_) fail(ErrorCode::invalid_argument, "dense probability map has no backing labels");
    return *labels_;
}

UncertaintyMap::UncertaintyMap(GridMeta meta, std::vector<double> values)
    : meta_(std::move(meta)), values_(std::move(values)) {
    detail::validate_grid(meta_, values_.size());
}

VoxelGrid UncertaintyMap::to_grid() const {
    std::vector<float> data(values_.begin(), values_.end());
    return VoxelGrid(meta_, ElementKind::uncertainty, std::move(data));
}

} // namespace voxfuse
