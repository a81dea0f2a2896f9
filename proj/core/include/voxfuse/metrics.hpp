#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxfuse/volume.hpp"

namespace voxfuse {

struct ClassDsc {
    int label = 0;
    double dsc = 0.0;
    std::int64_t gt_voxels = 0;
    std::int64_t pred_voxels = 0;
    std::int64_t intersection = 0;
    bool detected = false; // dsc > 0
    bool absent = false;   // missing from both volumes; excluded everywhere
};

struct DscReport {
    std::string scan_id;
    int num_classes = 0;
    std::vector<ClassDsc> classes; // one entry per label 0..L-1
};

// DSC_c = 2|P_c n G_c| / (|P_c| + |G_c|) for every class present in either
// volume. Computed from a single confusion-matrix pass.
DscReport dsc_per_class(const LabelMap& pred, const LabelMap& gt);

struct GroupSummary {
    std::string name;
    // Percentiles over the detected (dsc > 0) classes only; unset when the
    // group has no detected class.
    std::optional<double> median;
    std::optional<double> p16;
    std::optional<double> p84;
    double detection_ratio = 0.0; // detected / present-in-gt
    int num_classes = 0;          // group classes present in gt
    int num_detected = 0;
};

// Classes absent from both volumes are dropped before anything else; classes
// present in gt but completely missed stay in the detection-ratio denominator
// but not in the percentile set.
GroupSummary group_summary(const DscReport& report, const std::string& name,
                           const std::vector<int>& labels);

// Linear interpolation between closest ranks of the sorted values
// (q = 50 is the standard median). q in [0, 100].
double percentile(std::vector<double> values, double q);

// "0.83 -0.41 +0.10 (78%)": median with distances down to p16 and up to p84;
// the detection ratio is appended only when below 100%.
std::string format_group_summary(const GroupSummary& summary);

enum class DenominatorKind { total_volume, gt_foreground };

struct CorrectionReport {
    std::string scan_id;
    std::int64_t differing_voxels = 0;
    DenominatorKind denominator = DenominatorKind::total_volume;
    std::int64_t denominator_voxels = 0;
    double percentage = 0.0;
};

// Voxels where pred differs from the corrected reference; a surrogate for the
// manual effort needed to fix an automated segmentation. gt_foreground
// restricts both the count and the denominator to reference foreground.
CorrectionReport correction_effort(const LabelMap& pred, const LabelMap& reference,
                                   DenominatorKind denom = DenominatorKind::total_volume);

using LabelGroups = std::map<std::string, std::vector<int>>;

// {"group name": [label ids], ...}
LabelGroups parse_label_groups_json(const std::string& text);

struct MetricsResult {
    DscReport dsc;
    std::vector<GroupSummary> groups;
    CorrectionReport correction;
};

std::string metrics_to_json(const MetricsResult& result);
std::string metrics_to_csv(const MetricsResult& result);

} // namespace voxfuse
