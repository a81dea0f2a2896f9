#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxfuse/transform.hpp"
#include "voxfuse/volume.hpp"

namespace voxfuse {

// One ensemble member: a prediction volume on disk plus the augmentation
// transform that was applied to the model input. The member is mapped back
// into the original space (via the inverse transform) before fusion.
//
// path points at a label volume, or at a per-class probability plane set when
// it contains a "{class}" placeholder (expanded to 0..L-1).
struct PredictionSource {
    std::string member_id;
    std::string model_tag;
    TransformSpec transform;
    std::filesystem::path path;

    bool is_probability() const;
    std::filesystem::path class_path(int label) const;
};

struct Manifest {
    std::optional<std::string> scan_id;
    std::optional<int> num_classes;
    std::vector<PredictionSource> sources;
};

// Accepts either a bare JSON array of sources or {scan_id?, num_classes?, members: [...]}.
Manifest parse_manifest_json(const std::string& text);
std::string manifest_to_json(const Manifest& manifest);

enum class VarianceKind { population, sample };

// Streaming per-voxel-per-label mean/M2 over ensemble members (Welford
// update, Chan merge). Planes are class-major: entry (v,l) lives at l*V + v.
// For full-size scans the fusion engine instantiates one accumulator per
// z-chunk so the dense L-by-V planes are never resident at once.
class VarianceAccumulator {
public:
    VarianceAccumulator() = default;
    VarianceAccumulator(GridMeta meta, int num_classes);

    void accumulate(const ProbabilityMap& member);
    static VarianceAccumulator merge(const VarianceAccumulator& a, const VarianceAccumulator& b);

    std::int64_t members_seen() const { return members_seen_; }
    int num_classes() const { return num_classes_; }
    const GridMeta& meta() const { return meta_; }

    double mean_at(std::int64_t voxel, int label) const;
    double m2_at(std::int64_t voxel, int label) const;

    std::span<const double> mean_plane(int label) const;
    std::span<const double> m2_plane(int label) const;

private:
    GridMeta meta_;
    int num_classes_ = 0;
    std::int64_t members_seen_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

// Per-voxel label-count table for hard-label (one-hot) members.
class VoteTable {
public:
    VoteTable() = default;
    VoteTable(GridMeta meta, int num_classes);
    static VoteTable from_counts(GridMeta meta, int num_classes, int num_members,
                                 std::vector<std::uint32_t> counts);

    void add_member(const LabelMap& member);
    void add_labels(std::span<const std::int32_t> labels);

    int num_members() const { return num_members_; }
    int num_classes() const { return num_classes_; }
    const GridMeta& meta() const { return meta_; }
    std::uint32_t count(std::int64_t voxel, int label) const;

    // Highest vote count, ties to the lowest label index.
    LabelMap majority_labels() const;

private:
    GridMeta meta_;
    int num_classes_ = 0;
    int num_members_ = 0;
    std::vector<std::uint32_t> counts_; // class-major, like the accumulator
};

// value(v) = mean over labels of var[p(v,l)]. Population variance divides M2
// by N (this fixed ensemble is the whole population; N=1 gives 0), sample
// variance by N-1. exclude_background drops label 0 from the average.
UncertaintyMap voxel_uncertainty(const VarianceAccumulator& acc,
                                 VarianceKind kind = VarianceKind::population,
                                 bool exclude_background = false);

// Closed form for one-hot members: with q_l = count_l / N the per-label
// population variance is q_l(1-q_l), so the label average is (1 - sum q^2)/L.
UncertaintyMap onehot_uncertainty(const VoteTable& votes,
                                  bool exclude_background = false);

// Plain average over the masked voxels (mask: nonzero = included), or the
// whole volume when mask is null.
double mean_uncertainty(const UncertaintyMap& map, const VoxelGrid* mask = nullptr);

LabelMap fuse_majority(const std::vector<LabelMap>& members);
std::pair<LabelMap, ProbabilityMap> fuse_mean_probability(const std::vector<ProbabilityMap>& members);

struct ScanReport {
    std::string scan_id;
    int ensemble_size = 0;
    double mean_uncertainty = 0.0;
    std::int64_t num_voxels = 0;
    int num_classes = 0;
    std::optional<std::string> fused_prediction_path;
};

std::string scan_report_to_json(const ScanReport& report);
ScanReport parse_scan_report_json(const std::string& text);

enum class FusionMode { majority, mean_probability };

struct EnsembleOptions {
    std::string scan_id = "scan";
    int num_classes = 0; // required
    FusionMode fusion = FusionMode::majority;
    FillPolicy fill;
    VarianceKind variance = VarianceKind::population;
    bool exclude_background = false;
    LabelTransformMode label_mode = LabelTransformMode::nearest;
    int threads = 0;                   // 0 = hardware
    std::int64_t memory_budget_mb = 512;
    const VoxelGrid* mask = nullptr;   // optional domain for the report mean
};

struct EnsembleResult {
    LabelMap fused;
    UncertaintyMap uncertainty;
    ScanReport report;
};

// Reads every member, maps it back through its inverse transform, fuses, and
// computes the uncertainty map plus its scalar mean. Work is chunked along z
// so resident accumulator state respects memory_budget_mb; any unreadable or
// geometry-mismatched member fails the whole run.
EnsembleResult run_ensemble(const std::vector<PredictionSource>& sources,
                            const EnsembleOptions& options);

} // namespace voxfuse
