#include "voxfuse/transform.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "label_sampling.hpp"
#include "sampling.hpp"

namespace voxfuse {

namespace {
constexpr double kDetThreshold = 1e-9;

// Pull mapping: out[o] = in[spec^-1(o)]. Precomputed so the per-voxel work is
// one matrix-vector product.
struct PullMap {
    TransformKind kind;
    std::array<std::int64_t, 3> offset{}; // already negated
    Mat3 inv_matrix = Mat3::identity();
    Vec3 inv_translation{};

    static PullMap from(const TransformSpec& spec) {
        spec.validate();
        PullMap pull;
        pull.kind = spec.kind;
        if (spec.kind == TransformKind::integer_offset)
            pull.offset = {-spec.offset[0], -spec.offset[1], -spec.offset[2]};
        if (spec.kind == TransformKind::affine) {
            pull.inv_matrix = spec.matrix.inverse();
            pull.inv_translation = spec.translation;
        }
        return pull;
    }

    Vec3 map(const Vec3& o) const {
        if (kind == TransformKind::identity) return o;
        if (kind == TransformKind::integer_offset)
            return {o.x + static_cast<double>(offset[0]), o.y + static_cast<double>(offset[1]),
                    o.z + static_cast<double>(offset[2])};
        return inv_matrix * (o - inv_translation);
    }
};

template <class T, class SampleAt>
std::vector<T> pull_voxels(const Dims& dims, const PullMap& pull, const SampleAt& sample) {
    std::vector<T> out(static_cast<std::size_t>(dims.voxel_count()));
    std::size_t i = 0;
    for (std::int64_t z = 0; z < dims.nz; ++z)
        for (std::int64_t y = 0; y < dims.ny; ++y)
            for (std::int64_t x = 0; x < dims.nx; ++x, ++i)
                out[i] = sample(pull.map({static_cast<double>(x), static_cast<double>(y),
                                          static_cast<double>(z)}));
    return out;
}

// Integer offsets never touch floating point.
template <class T>
std::vector<T> shift_voxels(const Volume<T>& src, const std::array<std::int64_t, 3>& pull_offset,
                            T fill_value) {
    const Dims& d = src.dims();
    std::vector<T> out(static_cast<std::size_t>(d.voxel_count()), fill_value);
    std::size_t i = 0;
    for (std::int64_t z = 0; z < d.nz; ++z) {
        const std::int64_t sz = z + pull_offset[2];
        for (std::int64_t y = 0; y < d.ny; ++y) {
            const std::int64_t sy = y + pull_offset[1];
            for (std::int64_t x = 0; x < d.nx; ++x, ++i) {
                const std::int64_t sx = x + pull_offset[0];
                if (src.in_bounds(sx, sy, sz)) out[i] = src.at(sx, sy, sz);
            }
        }
    }
    return out;
}

} // namespace

TransformSpec TransformSpec::make_identity() { return {}; }

TransformSpec TransformSpec::make_offset(std::int64_t dx, std::int64_t dy, std::int64_t dz) {
    TransformSpec spec;
    spec.kind = TransformKind::integer_offset;
    spec.offset = {dx, dy, dz};
    return spec;
}

TransformSpec TransformSpec::make_affine(const Mat3& matrix, const Vec3& translation) {
    TransformSpec spec;
    spec.kind = TransformKind::affine;
    spec.matrix = matrix;
    spec.translation = translation;
    spec.validate();
    return spec;
}

Vec3 TransformSpec::map(const Vec3& p) const {
    switch (kind) {
        case TransformKind::identity: return p;
        case TransformKind::integer_offset:
            return {p.x + static_cast<double>(offset[0]), p.y + static_cast<double>(offset[1]),
                    p.z + static_cast<double>(offset[2])};
        case TransformKind::affine: return matrix * p + translation;
    }
    return p;
}

void TransformSpec::validate() const {
    if (kind != TransformKind::affine) return;
    const double det = matrix.det();
    if (std::abs(det) <= kDetThreshold) {
        std::ostringstream msg;
        msg << "affine matrix is singular (det = " << det << ", threshold " << kDetThreshold
            << ")";
        fail(ErrorCode::invalid_transform, msg.str());
    }
}

TransformSpec invert(const TransformSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case TransformKind::identity: return spec;
        case TransformKind::integer_offset:
            return TransformSpec::make_offset(-spec.offset[0], -spec.offset[1], -spec.offset[2]);
        case TransformKind::affine: {
            const Mat3 inv = spec.matrix.inverse();
            const Vec3 t = inv * spec.translation;
            return TransformSpec::make_affine(inv, {-t.x, -t.y, -t.z});
        }
    }
    return spec;
}

TransformSpec parse_transform_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::invalid_spec, std::string("transform JSON parse error: ") + e.what());
    }
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "identity") return TransformSpec::make_identity();
        if (kind == "integer-offset") {
            const auto& off = j.at("offset");
            if (!off.is_array() || off.size() != 3)
                fail(ErrorCode::invalid_spec, "offset must be a 3-element array");
            for (const auto& v : off)
                if (!v.is_number_integer())
                    fail(ErrorCode::invalid_spec, "offset components must be whole numbers");
            return TransformSpec::make_offset(off[0].get<std::int64_t>(),
                                              off[1].get<std::int64_t>(),
                                              off[2].get<std::int64_t>());
        }
        if (kind == "affine") {
            const auto& mat = j.at("matrix");
            if (!mat.is_array() || mat.size() != 3)
                fail(ErrorCode::invalid_spec, "matrix must be a 3x3 array");
            Mat3 m;
            for (int i = 0; i < 3; ++i) {
                if (!mat[i].is_array() || mat[i].size() != 3)
                    fail(ErrorCode::invalid_spec, "matrix must be a 3x3 array");
                for (int k = 0; k < 3; ++k) m.m[i][k] = mat[i][k].get<double>();
            }
            Vec3 t;
            if (j.contains("translation")) {
                const auto& tr = j.at("translation");
                if (!tr.is_array() || tr.size() != 3)
                    fail(ErrorCode::invalid_spec, "translation must be a 3-element array");
                t = {tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()};
            }
            return TransformSpec::make_affine(m, t);
        }
        fail(ErrorCode::invalid_spec, "unknown transform kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::invalid_spec, std::string("malformed transform JSON: ") + e.what());
    }
}

std::string transform_to_json(const TransformSpec& spec) {
    nlohmann::json j;
    switch (spec.kind) {
        case TransformKind::identity: j["kind"] = "identity"; break;
        case TransformKind::integer_offset:
            j["kind"] = "integer-offset";
            j["offset"] = {spec.offset[0], spec.offset[1], spec.offset[2]};
            break;
        case TransformKind::affine: {
            j["kind"] = "affine";
            j["matrix"] = {{spec.matrix.m[0][0], spec.matrix.m[0][1], spec.matrix.m[0][2]},
                           {spec.matrix.m[1][0], spec.matrix.m[1][1], spec.matrix.m[1][2]},
                           {spec.matrix.m[2][0], spec.matrix.m[2][1], spec.matrix.m[2][2]}};
            j["translation"] = {spec.translation.x, spec.translation.y, spec.translation.z};
            break;
        }
    }
    return j.dump();
}

VoxelGrid apply(const TransformSpec& spec, const VoxelGrid& grid, Interp interp,
                const FillPolicy& fill) {
    if (grid.kind() == ElementKind::label && interp != Interp::nearest)
        fail(ErrorCode::invalid_argument, "label volumes must be transformed with nearest");
    if (spec.kind == TransformKind::identity) {
        spec.validate();
        return grid;
    }

    const float fill_value =
        grid.kind() == ElementKind::label ? static_cast<float>(fill.label_fill)
                                          : fill.intensity_fill;
    const PullMap pull = PullMap::from(spec);

    if (spec.kind == TransformKind::integer_offset) {
        auto data = shift_voxels(grid, pull.offset, fill_value);
        return VoxelGrid(grid.meta(), grid.kind(), std::move(data));
    }

    const auto get = [&grid](std::int64_t x, std::int64_t y, std::int64_t z) {
        return grid.at(x, y, z);
    };
    std::vector<float> data;
    if (interp == Interp::nearest) {
        data = pull_voxels<float>(grid.dims(), pull, [&](const Vec3& p) {
            if (!detail::inside_rounded(p, grid.dims())) return fill_value;
            return detail::nearest(get, grid.dims(), p);
        });
    } else {
        data = pull_voxels<float>(grid.dims(), pull, [&](const Vec3& p) {
            if (!detail::inside_continuous(p, grid.dims())) return fill_value;
            return static_cast<float>(detail::trilinear(get, grid.dims(), p));
        });
    }
    return VoxelGrid(grid.meta(), grid.kind(), std::move(data));
}

LabelMap apply(const TransformSpec& spec, const LabelMap& labels, const FillPolicy& fill,
               LabelTransformMode mode) {
    if (fill.label_fill < 0 || fill.label_fill >= labels.num_classes())
        fail(ErrorCode::invalid_argument, "fill label outside the label range");
    if (spec.kind == TransformKind::identity) {
        spec.validate();
        return labels;
    }

    const PullMap pull = PullMap::from(spec);
    std::vector<std::int32_t> data;
    if (spec.kind == TransformKind::integer_offset) {
        data = shift_voxels(labels.grid(), pull.offset, fill.label_fill);
    } else {
        const detail::LabelSlabView view{&labels.grid(), 0, labels.dims()};
        data = pull_voxels<std::int32_t>(labels.dims(), pull, [&](const Vec3& p) {
            return detail::sample_label(view, p, mode, fill.label_fill);
        });
    }
    return LabelMap(Volume<std::int32_t>(labels.meta(), ElementKind::label, std::move(data)),
                    labels.num_classes());
}

ProbabilityMap apply(const TransformSpec& spec, const ProbabilityMap& probs,
                     const FillPolicy& fill) {
    spec.validate();
    if (fill.probability_fill_class < 0 || fill.probability_fill_class >= probs.num_classes())
        fail(ErrorCode::invalid_argument, "probability fill class outside the label range");
    if (spec.kind == TransformKind::identity) return probs;

    // Index shifts of one-hot maps stay one-hot views; no interpolation, no
    // materialization.
    if (spec.kind == TransformKind::integer_offset && probs.is_onehot()) {
        FillPolicy label_fill = fill;
        label_fill.label_fill = fill.probability_fill_class;
        return ProbabilityMap::onehot(apply(spec, probs.labels(), label_fill));
    }

    const Dims& d = probs.dims();
    const int L = probs.num_classes();
    const std::size_t count = static_cast<std::size_t>(d.voxel_count());
    const PullMap pull = PullMap::from(spec);

    std::vector<float> planes(count * static_cast<std::size_t>(L));
    std::vector<double> sample(static_cast<std::size_t>(L));
    std::size_t i = 0;
    for (std::int64_t z = 0; z < d.nz; ++z) {
        for (std::int64_t y = 0; y < d.ny; ++y) {
            for (std::int64_t x = 0; x < d.nx; ++x, ++i) {
                const Vec3 p = pull.map(
                    {static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)});
                double sum = 0.0;
                if (detail::inside_continuous(p, d)) {
                    for (int l = 0; l < L; ++l) {
                        const auto get = [&probs, &d, l](std::int64_t gx, std::int64_t gy,
                                                         std::int64_t gz) {
                            return probs.value(gx + d.nx * (gy + d.ny * gz), l);
                        };
                        const double v = std::max(0.0, detail::trilinear(get, d, p));
                        sample[static_cast<std::size_t>(l)] = v;
                        sum += v;
                    }
                }
                if (sum <= 1e-12) {
                    for (int l = 0; l < L; ++l)
                        sample[static_cast<std::size_t>(l)] =
                            l == fill.probability_fill_class ? 1.0 : 0.0;
                    sum = 1.0;
                }
                // interpolation preserves the per-voxel sum only up to
                // rounding; renormalize to restore it exactly
                for (int l = 0; l < L; ++l)
                    planes[static_cast<std::size_t>(l) * count + i] =
                        static_cast<float>(sample[static_cast<std::size_t>(l)] / sum);
            }
        }
    }
    return ProbabilityMap::dense(probs.meta(), L, std::move(planes));
}

VoxelGrid valid_mask(const TransformSpec& spec, const Dims& dims) {
    spec.validate();
    GridMeta meta;
    meta.dims = dims;

    const std::size_t count = static_cast<std::size_t>(dims.voxel_count());
    std::vector<float> data(count, 0.0f);

    if (spec.kind == TransformKind::identity) {
        std::fill(data.begin(), data.end(), 1.0f);
    } else if (spec.kind == TransformKind::integer_offset) {
        std::size_t i = 0;
        for (std::int64_t z = 0; z < dims.nz; ++z) {
            const bool zok = z + spec.offset[2] >= 0 && z + spec.offset[2] < dims.nz;
            for (std::int64_t y = 0; y < dims.ny; ++y) {
                const bool yok = y + spec.offset[1] >= 0 && y + spec.offset[1] < dims.ny;
                for (std::int64_t x = 0; x < dims.nx; ++x, ++i) {
                    const bool xok = x + spec.offset[0] >= 0 && x + spec.offset[0] < dims.nx;
                    data[i] = (xok && yok && zok) ? 1.0f : 0.0f;
                }
            }
        }
    } else {
        constexpr double eps = 1e-6;
        std::size_t i = 0;
        for (std::int64_t z = 0; z < dims.nz; ++z)
            for (std::int64_t y = 0; y < dims.ny; ++y)
                for (std::int64_t x = 0; x < dims.nx; ++x, ++i) {
                    const Vec3 fwd = spec.map({static_cast<double>(x), static_cast<double>(y),
                                               static_cast<double>(z)});
                    data[i] = detail::inside_continuous(fwd, dims, eps) ? 1.0f : 0.0f;
                }
    }
    VoxelGrid mask(meta, ElementKind::label, std::move(data));
    return mask;
}

} // namespace voxfuse
