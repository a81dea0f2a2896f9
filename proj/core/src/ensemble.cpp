#include "voxfuse/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "label_sampling.hpp"
#include "voxfuse/log.hpp"
#include "voxfuse/nifti.hpp"
#include "voxfuse/parallel.hpp"

namespace voxfuse {

namespace {
constexpr const char* kClassPlaceholder = "{class}";
}

bool PredictionSource::is_probability() const {
    return path.string().find(kClassPlaceholder) != std::string::npos;
}

std::filesystem::path PredictionSource::class_path(int label) const {
    std::string s = path.string();
    const std::string token = kClassPlaceholder;
    const std::string repl = std::to_string(label);
    for (std::size_t pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos))
        s.replace(pos, token.size(), repl);
    return s;
}

// --- manifest ---------------------------------------------------------------

namespace {

PredictionSource source_from_json(const nlohmann::json& j, int index) {
    if (!j.is_object()) fail(ErrorCode::invalid_spec, "manifest member must be a JSON object");
    PredictionSource src;
    src.member_id = j.value("member_id", "member" + std::to_string(index));
    src.model_tag = j.value("model_tag", "");
    if (j.contains("transform")) src.transform = parse_transform_json(j.at("transform").dump());
    if (!j.contains("path") || !j.at("path").is_string())
        fail(ErrorCode::invalid_spec,
             "manifest member '" + src.member_id + "' is missing its path");
    src.path = j.at("path").get<std::string>();
    return src;
}

} // namespace

Manifest parse_manifest_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::invalid_spec, std::string("manifest JSON parse error: ") + e.what());
    }

    Manifest manifest;
    const nlohmann::json* members = nullptr;
    if (j.is_array()) {
        members = &j;
    } else if (j.is_object() && j.contains("members") && j.at("members").is_array()) {
        if (j.contains("scan_id")) manifest.scan_id = j.at("scan_id").get<std::string>();
        if (j.contains("num_classes")) manifest.num_classes = j.at("num_classes").get<int>();
        members = &j.at("members");
    } else {
        fail(ErrorCode::invalid_spec,
             "manifest must be a JSON array of members or an object with a 'members' array");
    }

    int index = 0;
    for (const auto& entry : *members) manifest.sources.push_back(source_from_json(entry, index++));

    std::set<std::string> seen;
    for (const auto& src : manifest.sources)
        if (!seen.insert(src.member_id).second)
            fail(ErrorCode::invalid_spec, "duplicate member_id '" + src.member_id + "'");
    return manifest;
}

std::string manifest_to_json(const Manifest& manifest) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& src : manifest.sources) {
        nlohmann::json j;
        j["member_id"] = src.member_id;
        if (!src.model_tag.empty()) j["model_tag"] = src.model_tag;
        j["transform"] = nlohmann::json::parse(transform_to_json(src.transform));
        j["path"] = src.path.string();
        members.push_back(std::move(j));
    }
    if (!manifest.scan_id && !manifest.num_classes) return members.dump(2);
    nlohmann::json j;
    if (manifest.scan_id) j["scan_id"] = *manifest.scan_id;
    if (manifest.num_classes) j["num_classes"] = *manifest.num_classes;
    j["members"] = std::move(members);
    return j.dump(2);
}

// --- accumulator ------------------------------------------------------------

VarianceAccumulator::VarianceAccumulator(GridMeta meta, int num_classes)
    : meta_(std::move(meta)), num_classes_(num_classes) {
    if (num_classes_ < 2) fail(ErrorCode::invalid_argument, "accumulator needs >= 2 classes");
    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    detail::validate_grid(meta_, count);
    mean_.assign(count * static_cast<std::size_t>(num_classes_), 0.0);
    m2_.assign(count * static_cast<std::size_t>(num_classes_), 0.0);
}

void VarianceAccumulator::accumulate(const ProbabilityMap& member) {
    if (!(member.dims() == meta_.dims) || member.num_classes() != num_classes_)
        fail(ErrorCode::incompatible_member,
             "member shape or class count does not match the accumulator");

    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    const double n = static_cast<double>(members_seen_ + 1);
    for (int l = 0; l < num_classes_; ++l) {
        double* mean = mean_.data() + static_cast<std::size_t>(l) * count;
        double* m2 = m2_.data() + static_cast<std::size_t>(l) * count;
        if (member.is_onehot()) {
            const auto labels = member.labels().values();
            for (std::size_t v = 0; v < count; ++v) {
                const double x = labels[v] == l ? 1.0 : 0.0;
                const double delta = x - mean[v];
                mean[v] += delta / n;
                m2[v] += delta * (x - mean[v]);
            }
        } else {
            const auto plane = member.plane(l);
            for (std::size_t v = 0; v < count; ++v) {
                const double x = plane[v];
                const double delta = x - mean[v];
                mean[v] += delta / n;
                m2[v] += delta * (x - mean[v]);
            }
        }
    }
    ++members_seen_;
}

VarianceAccumulator VarianceAccumulator::merge(const VarianceAccumulator& a,
                                               const VarianceAccumulator& b) {
    if (!(a.meta_.dims == b.meta_.dims) || a.num_classes_ != b.num_classes_)
        fail(ErrorCode::incompatible_member, "accumulators cover different domains");
    if (a.members_seen_ == 0) return b;
    if (b.members_seen_ == 0) return a;

    VarianceAccumulator out(a.meta_, a.num_classes_);
    const double na = static_cast<double>(a.members_seen_);
    const double nb = static_cast<double>(b.members_seen_);
    const double n = na + nb;
    for (std::size_t i = 0; i < out.mean_.size(); ++i) {
        const double delta = b.mean_[i] - a.mean_[i];
        out.mean_[i] = (na * a.mean_[i] + nb * b.mean_[i]) / n;
        out.m2_[i] = a.m2_[i] + b.m2_[i] + delta * delta * (na * nb / n);
    }
    out.members_seen_ = a.members_seen_ + b.members_seen_;
    return out;
}

double VarianceAccumulator::mean_at(std::int64_t voxel, int label) const {
    return mean_[static_cast<std::size_t>(label) * static_cast<std::size_t>(meta_.dims.voxel_count()) +
                 static_cast<std::size_t>(voxel)];
}

double VarianceAccumulator::m2_at(std::int64_t voxel, int label) const {
    return m2_[static_cast<std::size_t>(label) * static_cast<std::size_t>(meta_.dims.voxel_count()) +
               static_cast<std::size_t>(voxel)];
}

std::span<const double> VarianceAccumulator::mean_plane(int label) const {
    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    return {mean_.data() + static_cast<std::size_t>(label) * count, count};
}

std::span<const double> VarianceAccumulator::m2_plane(int label) const {
    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    return {m2_.data() + static_cast<std::size_t>(label) * count, count};
}

// --- votes ------------------------------------------------------------------

VoteTable::VoteTable(GridMeta meta, int num_classes)
    : meta_(std::move(meta)), num_classes_(num_classes) {
    if (num_classes_ < 2) fail(ErrorCode::invalid_argument, "vote table needs >= 2 classes");
    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    detail::validate_grid(meta_, count);
    counts_.assign(count * static_cast<std::size_t>(num_classes_), 0);
}

VoteTable VoteTable::from_counts(GridMeta meta, int num_classes, int num_members,
                                 std::vector<std::uint32_t> counts) {
    VoteTable table(std::move(meta), num_classes);
    if (counts.size() != table.counts_.size())
        fail(ErrorCode::invalid_argument, "vote count table has the wrong size");
    table.counts_ = std::move(counts);
    table.num_members_ = num_members;
    return table;
}

void VoteTable::add_member(const LabelMap& member) {
    if (!(member.dims() == meta_.dims) || member.num_classes() != num_classes_)
        fail(ErrorCode::incompatible_member,
             "member shape or class count does not match the vote table");
    add_labels(member.values());
}

void VoteTable::add_labels(std::span<const std::int32_t> labels) {
    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    if (labels.size() != count)
        fail(ErrorCode::incompatible_member, "label span does not cover the vote table domain");
    for (const std::int32_t lab : labels)
        if (lab < 0 || lab >= num_classes_)
            fail(ErrorCode::incompatible_member,
                 "label value " + std::to_string(lab) + " outside [0, " +
                     std::to_string(num_classes_) + ")");
    for (std::size_t v = 0; v < count; ++v)
        ++counts_[static_cast<std::size_t>(labels[v]) * count + v];
    ++num_members_;
}

std::uint32_t VoteTable::count(std::int64_t voxel, int label) const {
    return counts_[static_cast<std::size_t>(label) *
                       static_cast<std::size_t>(meta_.dims.voxel_count()) +
                   static_cast<std::size_t>(voxel)];
}

LabelMap VoteTable::majority_labels() const {
    if (num_members_ < 1) fail(ErrorCode::empty_ensemble, "no members voted");
    const std::size_t count = static_cast<std::size_t>(meta_.dims.voxel_count());
    std::vector<std::int32_t> out(count, 0);
    for (std::size_t v = 0; v < count; ++v) {
        std::uint32_t best = counts_[v]; // label 0
        std::int32_t best_label = 0;
        for (int l = 1; l < num_classes_; ++l) {
            const std::uint32_t c = counts_[static_cast<std::size_t>(l) * count + v];
            if (c > best) {
                best = c;
                best_label = l;
            }
        }
        out[v] = best_label;
    }
    return LabelMap(Volume<std::int32_t>(meta_, ElementKind::label, std::move(out)),
                    num_classes_);
}

// --- uncertainty ------------------------------------------------------------

UncertaintyMap voxel_uncertainty(const VarianceAccumulator& acc, VarianceKind kind,
                                 bool exclude_background) {
    const std::int64_t n = acc.members_seen();
    if (n < 1) fail(ErrorCode::empty_ensemble, "uncertainty of an empty accumulator");
    if (kind == VarianceKind::sample && n < 2)
        fail(ErrorCode::invalid_argument, "sample variance needs at least 2 members");

    const int first = exclude_background ? 1 : 0;
    const int L = acc.num_classes();
    if (first >= L) fail(ErrorCode::invalid_argument, "no labels left to average over");
    const double divisor =
        kind == VarianceKind::population ? static_cast<double>(n) : static_cast<double>(n - 1);
    const std::size_t count = static_cast<std::size_t>(acc.meta().dims.voxel_count());

    std::vector<double> values(count, 0.0);
    for (int l = first; l < L; ++l) {
        const auto m2 = acc.m2_plane(l);
        for (std::size_t v = 0; v < count; ++v) values[v] += m2[v];
    }
    const double scale = 1.0 / (divisor * static_cast<double>(L - first));
    const double cap = kind == VarianceKind::population ? 0.25 : 0.5;
    for (double& v : values) v = std::clamp(v * scale, 0.0, cap);
    return UncertaintyMap(acc.meta(), std::move(values));
}

UncertaintyMap onehot_uncertainty(const VoteTable& votes, bool exclude_background) {
    const int n = votes.num_members();
    if (n < 1) fail(ErrorCode::empty_ensemble, "uncertainty of an empty vote table");
    const int first = exclude_background ? 1 : 0;
    const int L = votes.num_classes();
    if (first >= L) fail(ErrorCode::invalid_argument, "no labels left to average over");

    const std::size_t count = static_cast<std::size_t>(votes.meta().dims.voxel_count());
    std::vector<double> values(count, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_labels = 1.0 / static_cast<double>(L - first);

    for (std::size_t v = 0; v < count; ++v) {
        std::uint32_t total = 0;
        double var_sum = 0.0;
        for (int l = 0; l < L; ++l) {
            const std::uint32_t c = votes.count(static_cast<std::int64_t>(v), l);
            total += c;
            if (l >= first) {
                const double q = static_cast<double>(c) * inv_n;
                var_sum += q * (1.0 - q);
            }
        }
        if (total != static_cast<std::uint32_t>(n))
            fail(ErrorCode::corrupt_votes,
                 "vote counts sum to " + std::to_string(total) + ", expected " +
                     std::to_string(n));
        values[v] = std::clamp(var_sum * inv_labels, 0.0, 0.25);
    }
    return UncertaintyMap(votes.meta(), std::move(values));
}

double mean_uncertainty(const UncertaintyMap& map, const VoxelGrid* mask) {
    const std::size_t count = static_cast<std::size_t>(map.size());
    if (mask && !(mask->dims() == map.dims()))
        fail(ErrorCode::incompatible_volumes, "mask dimensions do not match the uncertainty map");

    double sum = 0.0;
    std::size_t included = 0;
    const auto values = map.values();
    if (!mask) {
        for (std::size_t v = 0; v < count; ++v) sum += values[v];
        included = count;
    } else {
        const auto mask_values = mask->values();
        for (std::size_t v = 0; v < count; ++v) {
            if (mask_values[v] != 0.0f) {
                sum += values[v];
                ++included;
            }
        }
    }
    if (included == 0) fail(ErrorCode::empty_domain, "mask excludes every voxel");
    return sum / static_cast<double>(included);
}

// --- fusion -----------------------------------------------------------------

LabelMap fuse_majority(const std::vector<LabelMap>& members) {
    if (members.empty()) fail(ErrorCode::empty_ensemble, "majority fusion of zero members");
    VoteTable votes(members.front().meta(), members.front().num_classes());
    for (const auto& member : members) votes.add_member(member);
    return votes.majority_labels();
}

std::pair<LabelMap, ProbabilityMap> fuse_mean_probability(
    const std::vector<ProbabilityMap>& members) {
    if (members.empty()) fail(ErrorCode::empty_ensemble, "mean fusion of zero members");
    const GridMeta& meta = members.front().meta();
    const int L = members.front().num_classes();
    const std::size_t count = static_cast<std::size_t>(meta.dims.voxel_count());

    std::vector<double> sums(count * static_cast<std::size_t>(L), 0.0);
    for (const auto& member : members) {
        if (!(member.dims() == meta.dims) || member.num_classes() != L)
            fail(ErrorCode::incompatible_member, "member shape or class count mismatch");
        for (int l = 0; l < L; ++l) {
            double* dst = sums.data() + static_cast<std::size_t>(l) * count;
            if (member.is_onehot()) {
                const auto labels = member.labels().values();
                for (std::size_t v = 0; v < count; ++v)
                    if (labels[v] == l) dst[v] += 1.0;
            } else {
                const auto plane = member.plane(l);
                for (std::size_t v = 0; v < count; ++v) dst[v] += plane[v];
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(members.size());
    std::vector<float> planes(sums.size());
    std::vector<std::int32_t> argmax(count, 0);
    std::vector<double> best(count, -1.0);
    for (int l = 0; l < L; ++l) {
        const double* src = sums.data() + static_cast<std::size_t>(l) * count;
        float* dst = planes.data() + static_cast<std::size_t>(l) * count;
        for (std::size_t v = 0; v < count; ++v) {
            const double mean = src[v] * inv_n;
            dst[v] = static_cast<float>(mean);
            if (mean > best[v]) { // strict: ties stay with the lower label
                best[v] = mean;
                argmax[v] = l;
            }
        }
    }

    LabelMap fused(Volume<std::int32_t>(meta, ElementKind::label, std::move(argmax)), L);
    return {std::move(fused), ProbabilityMap::dense(meta, L, std::move(planes))};
}

// --- reports ----------------------------------------------------------------

std::string scan_report_to_json(const ScanReport& report) {
    nlohmann::json j;
    j["scan_id"] = report.scan_id;
    j["ensemble_size"] = report.ensemble_size;
    j["mean_uncertainty"] = report.mean_uncertainty;
    j["num_voxels"] = report.num_voxels;
    j["num_classes"] = report.num_classes;
    if (report.fused_prediction_path) j["fused_prediction_path"] = *report.fused_prediction_path;
    return j.dump(2);
}

ScanReport parse_scan_report_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt_input, std::string("scan report parse error: ") + e.what());
    }
    try {
        ScanReport report;
        report.scan_id = j.at("scan_id").get<std::string>();
        report.ensemble_size = j.at("ensemble_size").get<int>();
        report.mean_uncertainty = j.at("mean_uncertainty").get<double>();
        report.num_voxels = j.value("num_voxels", std::int64_t{0});
        report.num_classes = j.value("num_classes", 0);
        if (j.contains("fused_prediction_path"))
            report.fused_prediction_path = j.at("fused_prediction_path").get<std::string>();
        return report;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt_input, std::string("malformed scan report: ") + e.what());
    }
}

// --- fusion engine ----------------------------------------------------------

namespace {

struct MemberPlan {
    const PredictionSource* source = nullptr;
    bool probability = false;
};

// z-range of member data needed to fill output chunk [z0, z1), padded for
// interpolation. Empty range means every voxel takes the fill value.
std::pair<std::int64_t, std::int64_t> source_z_range(const TransformSpec& spec, const Dims& dims,
                                                     std::int64_t z0, std::int64_t z1) {
    switch (spec.kind) {
        case TransformKind::identity: return {z0, z1};
        case TransformKind::integer_offset: {
            const std::int64_t lo = std::max<std::int64_t>(0, z0 + spec.offset[2]);
            const std::int64_t hi = std::min<std::int64_t>(dims.nz, z1 + spec.offset[2]);
            return {lo, std::max(lo, hi)};
        }
        case TransformKind::affine: {
            double zmin = std::numeric_limits<double>::infinity();
            double zmax = -zmin;
            for (int corner = 0; corner < 8; ++corner) {
                const Vec3 p{corner & 1 ? static_cast<double>(dims.nx - 1) : 0.0,
                             corner & 2 ? static_cast<double>(dims.ny - 1) : 0.0,
                             corner & 4 ? static_cast<double>(z1 - 1) : static_cast<double>(z0)};
                zmin = std::min(zmin, spec.map(p).z);
                zmax = std::max(zmax, spec.map(p).z);
            }
            const std::int64_t lo =
                std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(zmin)) - 1);
            const std::int64_t hi =
                std::min<std::int64_t>(dims.nz, static_cast<std::int64_t>(std::ceil(zmax)) + 2);
            return {lo, std::max(lo, hi)};
        }
    }
    return {z0, z1};
}

GridMeta chunk_meta(const GridMeta& full, std::int64_t z0, std::int64_t z1) {
    GridMeta meta = full;
    meta.dims.nz = z1 - z0;
    for (int i = 0; i < 3; ++i)
        meta.affine.m[i][3] += static_cast<double>(z0) * meta.affine.m[i][2];
    return meta;
}

// Inverse-transformed hard labels of one member over output chunk [z0, z1).
std::vector<std::int32_t> member_label_chunk(const PredictionSource& source, const GridMeta& full,
                                             int num_classes, std::int64_t z0, std::int64_t z1,
                                             const EnsembleOptions& options) {
    const Dims& dims = full.dims;
    const std::size_t chunk_count =
        static_cast<std::size_t>(dims.nx * dims.ny * (z1 - z0));
    const auto [src0, src1] = source_z_range(source.transform, dims, z0, z1);

    std::optional<Volume<std::int32_t>> slab;
    if (src1 > src0) slab = read_label_subvolume(source.path, num_classes, src0, src1);

    std::vector<std::int32_t> out(chunk_count, options.fill.label_fill);
    if (!slab) return out;

    const TransformSpec& spec = source.transform;
    if (spec.kind == TransformKind::identity) {
        std::copy(slab->values().begin(), slab->values().end(), out.begin());
        return out;
    }

    if (spec.kind == TransformKind::integer_offset) {
        std::size_t i = 0;
        for (std::int64_t z = z0; z < z1; ++z) {
            const std::int64_t sz = z + spec.offset[2];
            const bool zok = sz >= 0 && sz < dims.nz;
            for (std::int64_t y = 0; y < dims.ny; ++y) {
                const std::int64_t sy = y + spec.offset[1];
                const bool yok = sy >= 0 && sy < dims.ny;
                for (std::int64_t x = 0; x < dims.nx; ++x, ++i) {
                    const std::int64_t sx = x + spec.offset[0];
                    if (zok && yok && sx >= 0 && sx < dims.nx)
                        out[i] = slab->at(sx, sy, sz - src0);
                }
            }
        }
        return out;
    }

    const detail::LabelSlabView view{&*slab, src0, dims};
    std::size_t i = 0;
    for (std::int64_t z = z0; z < z1; ++z)
        for (std::int64_t y = 0; y < dims.ny; ++y)
            for (std::int64_t x = 0; x < dims.nx; ++x, ++i)
                out[i] = detail::sample_label(
                    view,
                    spec.map({static_cast<double>(x), static_cast<double>(y),
                              static_cast<double>(z)}),
                    options.label_mode, options.fill.label_fill);
    return out;
}

// Inverse-transformed, renormalized probability planes of one member over the
// chunk. Planes are read class by class so only one class slab is resident.
std::vector<float> member_probability_chunk(const PredictionSource& source, const GridMeta& full,
                                            int num_classes, std::int64_t z0, std::int64_t z1,
                                            const EnsembleOptions& options) {
    const Dims& dims = full.dims;
    const std::size_t chunk_count = static_cast<std::size_t>(dims.nx * dims.ny * (z1 - z0));
    const auto [src0, src1] = source_z_range(source.transform, dims, z0, z1);
    const TransformSpec& spec = source.transform;
    const int fill_class = options.fill.probability_fill_class;

    std::vector<float> planes(chunk_count * static_cast<std::size_t>(num_classes), 0.0f);
    std::vector<double> sums(chunk_count, 0.0);

    for (int l = 0; l < num_classes; ++l) {
        std::optional<VoxelGrid> slab;
        if (src1 > src0) slab = read_subvolume(source.class_path(l), src0, src1);
        const float fill_value = l == fill_class ? 1.0f : 0.0f;
        float* dst = planes.data() + static_cast<std::size_t>(l) * chunk_count;

        if (slab && spec.kind == TransformKind::identity) {
            std::copy(slab->values().begin(), slab->values().end(), dst);
        } else if (slab) {
            const detail::FloatSlabView view{&*slab, src0, dims};
            std::size_t i = 0;
            for (std::int64_t z = z0; z < z1; ++z)
                for (std::int64_t y = 0; y < dims.ny; ++y)
                    for (std::int64_t x = 0; x < dims.nx; ++x, ++i) {
                        const Vec3 p = spec.map({static_cast<double>(x), static_cast<double>(y),
                                                 static_cast<double>(z)});
                        dst[i] = std::max(0.0f, detail::sample_float_trilinear(view, p, fill_value));
                    }
        } else {
            std::fill(dst, dst + chunk_count, fill_value);
        }
        for (std::size_t v = 0; v < chunk_count; ++v) sums[v] += dst[v];
    }

    for (std::size_t v = 0; v < chunk_count; ++v) {
        if (sums[v] <= 1e-12) {
            for (int l = 0; l < num_classes; ++l)
                planes[static_cast<std::size_t>(l) * chunk_count + v] =
                    l == fill_class ? 1.0f : 0.0f;
        } else {
            const double inv = 1.0 / sums[v];
            for (int l = 0; l < num_classes; ++l) {
                float& p = planes[static_cast<std::size_t>(l) * chunk_count + v];
                p = static_cast<float>(p * inv);
            }
        }
    }
    return planes;
}

std::vector<std::int32_t> argmax_planes(std::span<const float> planes, int num_classes,
                                        std::size_t count) {
    std::vector<std::int32_t> labels(count, 0);
    std::vector<float> best(planes.begin(), planes.begin() + static_cast<std::ptrdiff_t>(count));
    for (int l = 1; l < num_classes; ++l) {
        const float* plane = planes.data() + static_cast<std::size_t>(l) * count;
        for (std::size_t v = 0; v < count; ++v) {
            if (plane[v] > best[v]) {
                best[v] = plane[v];
                labels[v] = l;
            }
        }
    }
    return labels;
}

} // namespace

EnsembleResult run_ensemble(const std::vector<PredictionSource>& sources,
                            const EnsembleOptions& options) {
    if (sources.empty()) fail(ErrorCode::empty_ensemble, "ensemble manifest lists no members");
    const int L = options.num_classes;
    if (L < 2) fail(ErrorCode::invalid_argument, "num_classes must be at least 2");

    {
        std::set<std::string> ids;
        for (const auto& src : sources) {
            if (!ids.insert(src.member_id).second)
                fail(ErrorCode::invalid_spec, "duplicate member_id '" + src.member_id + "'");
            src.transform.validate();
        }
    }

    // Geometry probe; a bad member fails the run before any work starts.
    bool any_probability = false;
    GridMeta full;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& src = sources[i];
        const int class_count = src.is_probability() ? L : 1;
        any_probability |= src.is_probability();
        for (int l = 0; l < class_count; ++l) {
            const auto path = src.is_probability() ? src.class_path(l) : src.path;
            const VolumeHeader header = read_volume_header(path);
            if (i == 0 && l == 0) {
                full = header.meta;
            } else if (!same_geometry(header.meta, full)) {
                fail(ErrorCode::incompatible_member,
                     "member '" + src.member_id + "' (" + path.string() +
                         ") does not match the ensemble geometry");
            }
        }
    }
    if (options.mask && !(options.mask->dims() == full.dims))
        fail(ErrorCode::incompatible_volumes, "mask dimensions do not match the scan");

    const int N = static_cast<int>(sources.size());
    const std::int64_t voxels = full.dims.voxel_count();
    const int workers = resolve_thread_count(options.threads);

    // Chunk height along z so per-worker state stays within the memory
    // budget. Output determinism never depends on the partition: fused labels
    // and voxel variances are pure per-voxel reductions in manifest order.
    const double per_voxel_bytes =
        any_probability ? 24.0 * L + 16.0 : 8.0 * L + static_cast<double>(N) * 4.0 + 16.0;
    const double budget_bytes =
        std::max<double>(1.0, static_cast<double>(options.memory_budget_mb)) * 1024.0 * 1024.0;
    const std::int64_t plane_bytes =
        static_cast<std::int64_t>(static_cast<double>(full.dims.nx * full.dims.ny) * per_voxel_bytes);
    const std::int64_t chunk_z = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(budget_bytes / static_cast<double>(workers) /
                                  static_cast<double>(std::max<std::int64_t>(plane_bytes, 1))),
        1, full.dims.nz);
    const auto chunks = split_ranges(full.dims.nz, chunk_z);
    log::debug("fusion over " + std::to_string(chunks.size()) + " z-chunk(s) of height " +
               std::to_string(chunk_z));

    std::vector<std::int32_t> fused(static_cast<std::size_t>(voxels), 0);
    std::vector<double> uncertainty(static_cast<std::size_t>(voxels), 0.0);

    parallel_for(static_cast<std::int64_t>(chunks.size()), workers, [&](std::int64_t ci) {
        const auto [z0, z1] = chunks[static_cast<std::size_t>(ci)];
        const GridMeta cmeta = chunk_meta(full, z0, z1);
        const std::size_t chunk_count = static_cast<std::size_t>(cmeta.dims.voxel_count());
        const std::size_t out_offset = static_cast<std::size_t>(z0 * full.dims.nx * full.dims.ny);

        std::vector<std::int32_t> fused_chunk;
        UncertaintyMap unc_chunk;

        if (!any_probability) {
            // Hard-label members: tally votes once; the closed-form one-hot
            // variance and majority labels both come from the same counts.
            VoteTable votes(cmeta, L);
            for (const auto& src : sources)
                votes.add_labels(member_label_chunk(src, full, L, z0, z1, options));
            const LabelMap majority = votes.majority_labels();
            fused_chunk.assign(majority.values().begin(), majority.values().end());
            unc_chunk = onehot_uncertainty(votes, options.exclude_background);
            if (options.variance == VarianceKind::sample) {
                if (N < 2)
                    fail(ErrorCode::invalid_argument, "sample variance needs at least 2 members");
                const double scale = static_cast<double>(N) / static_cast<double>(N - 1);
                for (double& v : unc_chunk.values()) v *= scale;
            }
        } else {
            VarianceAccumulator acc(cmeta, L);
            VoteTable votes(cmeta, L);
            const bool need_votes = options.fusion == FusionMode::majority;
            for (const auto& src : sources) {
                if (src.is_probability()) {
                    auto planes = member_probability_chunk(src, full, L, z0, z1, options);
                    if (need_votes) votes.add_labels(argmax_planes(planes, L, chunk_count));
                    acc.accumulate(ProbabilityMap::dense(cmeta, L, std::move(planes)));
                } else {
                    auto labels = member_label_chunk(src, full, L, z0, z1, options);
                    if (need_votes) votes.add_labels(labels);
                    acc.accumulate(ProbabilityMap::onehot(LabelMap(
                        Volume<std::int32_t>(cmeta, ElementKind::label, std::move(labels)), L)));
                }
            }
            unc_chunk = voxel_uncertainty(acc, options.variance, options.exclude_background);
            if (need_votes) {
                const LabelMap majority = votes.majority_labels();
                fused_chunk.assign(majority.values().begin(), majority.values().end());
            } else {
                std::vector<float> means(chunk_count * static_cast<std::size_t>(L));
                for (int l = 0; l < L; ++l) {
                    const auto plane = acc.mean_plane(l);
                    std::copy(plane.begin(), plane.end(),
                              means.begin() + static_cast<std::ptrdiff_t>(
                                                  static_cast<std::size_t>(l) * chunk_count));
                }
                fused_chunk = argmax_planes(means, L, chunk_count);
            }
        }

        std::copy(fused_chunk.begin(), fused_chunk.end(),
                  fused.begin() + static_cast<std::ptrdiff_t>(out_offset));
        std::copy(unc_chunk.values().begin(), unc_chunk.values().end(),
                  uncertainty.begin() + static_cast<std::ptrdiff_t>(out_offset));
    });

    EnsembleResult result{
        LabelMap(Volume<std::int32_t>(full, ElementKind::label, std::move(fused)), L),
        UncertaintyMap(full, std::move(uncertainty)),
        {}};
    result.report.scan_id = options.scan_id;
    result.report.ensemble_size = N;
    result.report.mean_uncertainty = mean_uncertainty(result.uncertainty, options.mask);
    result.report.num_voxels = voxels;
    result.report.num_classes = L;
    return result;
}

} // namespace voxfuse
