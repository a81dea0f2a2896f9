#include "voxfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "voxfuse/parallel.hpp"

namespace voxfuse {

DscReport dsc_per_class(const LabelMap& pred, const LabelMap& gt) {
    if (!(pred.dims() == gt.dims()) || pred.num_classes() != gt.num_classes())
        fail(ErrorCode::incompatible_volumes,
             "prediction and ground truth differ in shape or class count");

    const int L = gt.num_classes();
    const auto pv = pred.values();
    const auto gv = gt.values();

    // one confusion-matrix pass (row = gt label, column = predicted label);
    // workers tally private tables that are merged by addition
    const std::size_t cells = static_cast<std::size_t>(L) * static_cast<std::size_t>(L);
    const auto ranges = split_ranges(static_cast<std::int64_t>(pv.size()),
                                     std::max<std::int64_t>(1 << 20, 1));
    std::vector<std::vector<std::int64_t>> tables(ranges.size());
    parallel_for(static_cast<std::int64_t>(ranges.size()), 0, [&](std::int64_t r) {
        auto& table = tables[static_cast<std::size_t>(r)];
        table.assign(cells, 0);
        const auto [lo, hi] = ranges[static_cast<std::size_t>(r)];
        for (std::int64_t i = lo; i < hi; ++i)
            ++table[static_cast<std::size_t>(gv[static_cast<std::size_t>(i)]) *
                        static_cast<std::size_t>(L) +
                    static_cast<std::size_t>(pv[static_cast<std::size_t>(i)])];
    });
    std::vector<std::int64_t> confusion(cells, 0);
    for (const auto& table : tables)
        for (std::size_t i = 0; i < cells; ++i) confusion[i] += table[i];

    DscReport report;
    report.num_classes = L;
    report.classes.resize(static_cast<std::size_t>(L));
    for (int c = 0; c < L; ++c) {
        ClassDsc& entry = report.classes[static_cast<std::size_t>(c)];
        entry.label = c;
        std::int64_t gt_count = 0, pred_count = 0;
        for (int k = 0; k < L; ++k) {
            gt_count += confusion[static_cast<std::size_t>(c) * static_cast<std::size_t>(L) +
                                  static_cast<std::size_t>(k)];
            pred_count += confusion[static_cast<std::size_t>(k) * static_cast<std::size_t>(L) +
                                    static_cast<std::size_t>(c)];
        }
        entry.gt_voxels = gt_count;
        entry.pred_voxels = pred_count;
        entry.intersection = confusion[static_cast<std::size_t>(c) * static_cast<std::size_t>(L) +
                                       static_cast<std::size_t>(c)];
        entry.absent = gt_count == 0 && pred_count == 0;
        if (!entry.absent)
            entry.dsc = 2.0 * static_cast<double>(entry.intersection) /
                        static_cast<double>(gt_count + pred_count);
        entry.detected = entry.dsc > 0.0;
    }
    return report;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorCode::empty_domain, "percentile of an empty list");
    if (q < 0.0 || q > 100.0) fail(ErrorCode::invalid_argument, "percentile q outside [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

GroupSummary group_summary(const DscReport& report, const std::string& name,
                           const std::vector<int>& labels) {
    GroupSummary summary;
    summary.name = name;

    std::vector<double> detected_dsc;
    int present_in_gt = 0;
    int considered = 0;
    for (int label : labels) {
        if (label < 0 || label >= report.num_classes)
            fail(ErrorCode::invalid_argument,
                 "group '" + name + "' references label " + std::to_string(label) +
                     " outside [0, " + std::to_string(report.num_classes) + ")");
        const ClassDsc& entry = report.classes[static_cast<std::size_t>(label)];
        if (entry.absent) continue;
        ++considered;
        if (entry.gt_voxels > 0) ++present_in_gt;
        if (entry.detected) detected_dsc.push_back(entry.dsc);
    }
    if (considered == 0)
        fail(ErrorCode::empty_domain,
             "group '" + name + "' has no classes present in either volume");

    summary.num_classes = present_in_gt;
    summary.num_detected = static_cast<int>(detected_dsc.size());
    summary.detection_ratio =
        present_in_gt > 0
            ? static_cast<double>(summary.num_detected) / static_cast<double>(present_in_gt)
            : 0.0;
    if (!detected_dsc.empty()) {
        // completely missed classes are excluded so they do not distort the
        // distribution; the detection ratio accounts for them
        summary.median = percentile(detected_dsc, 50.0);
        summary.p16 = percentile(detected_dsc, 16.0);
        summary.p84 = percentile(detected_dsc, 84.0);
    }
    return summary;
}

std::string format_group_summary(const GroupSummary& summary) {
    if (!summary.median) return "n/a (0%)";
    char buf[96];
    const double med = *summary.median;
    const double down = med - *summary.p16;
    const double up = *summary.p84 - med;
    if (summary.detection_ratio < 1.0) {
        std::snprintf(buf, sizeof(buf), "%.2f -%.2f +%.2f (%.0f%%)", med, down, up,
                      100.0 * summary.detection_ratio);
    } else {
        std::snprintf(buf, sizeof(buf), "%.2f -%.2f +%.2f", med, down, up);
    }
    return buf;
}

CorrectionReport correction_effort(const LabelMap& pred, const LabelMap& reference,
                                   DenominatorKind denom) {
    if (!(pred.dims() == reference.dims()))
        fail(ErrorCode::incompatible_volumes, "prediction and reference differ in shape");

    CorrectionReport report;
    report.denominator = denom;
    const auto pv = pred.values();
    const auto rv = reference.values();
    if (denom == DenominatorKind::total_volume) {
        std::int64_t differing = 0;
        for (std::size_t i = 0; i < pv.size(); ++i) differing += pv[i] != rv[i];
        report.differing_voxels = differing;
        report.denominator_voxels = static_cast<std::int64_t>(pv.size());
    } else {
        // restricted to reference foreground so the percentage stays in [0, 100]
        std::int64_t differing = 0, foreground = 0;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            if (rv[i] == 0) continue;
            ++foreground;
            differing += pv[i] != rv[i];
        }
        if (foreground == 0)
            fail(ErrorCode::empty_domain, "reference volume has no foreground voxels");
        report.differing_voxels = differing;
        report.denominator_voxels = foreground;
    }
    report.percentage = 100.0 * static_cast<double>(report.differing_voxels) /
                        static_cast<double>(report.denominator_voxels);
    return report;
}

LabelGroups parse_label_groups_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::invalid_spec, std::string("label-group JSON parse error: ") + e.what());
    }
    if (!j.is_object())
        fail(ErrorCode::invalid_spec, "label-group file must map group names to label arrays");

    LabelGroups groups;
    for (const auto& [name, labels] : j.items()) {
        if (!labels.is_array())
            fail(ErrorCode::invalid_spec, "group '" + name + "' must be an array of label ids");
        std::vector<int>& ids = groups[name];
        for (const auto& v : labels) {
            if (!v.is_number_integer())
                fail(ErrorCode::invalid_spec, "group '" + name + "' holds a non-integer label");
            ids.push_back(v.get<int>());
        }
    }
    return groups;
}

namespace {

const char* denominator_name(DenominatorKind kind) {
    return kind == DenominatorKind::total_volume ? "total-volume" : "gt-foreground";
}

nlohmann::json summary_json(const GroupSummary& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["median"] = s.median ? nlohmann::json(*s.median) : nlohmann::json(nullptr);
    j["p16"] = s.p16 ? nlohmann::json(*s.p16) : nlohmann::json(nullptr);
    j["p84"] = s.p84 ? nlohmann::json(*s.p84) : nlohmann::json(nullptr);
    j["percentiles_defined"] = s.median.has_value();
    j["detection_ratio"] = s.detection_ratio;
    j["num_classes"] = s.num_classes;
    j["num_detected"] = s.num_detected;
    j["formatted"] = format_group_summary(s);
    return j;
}

} // namespace

std::string metrics_to_json(const MetricsResult& result) {
    nlohmann::json j;
    if (!result.dsc.scan_id.empty()) j["scan_id"] = result.dsc.scan_id;
    j["num_classes"] = result.dsc.num_classes;

    nlohmann::json per_class = nlohmann::json::array();
    for (const ClassDsc& c : result.dsc.classes) {
        nlohmann::json e;
        e["label"] = c.label;
        e["absent"] = c.absent;
        if (!c.absent) {
            e["dsc"] = c.dsc;
            e["gt_voxels"] = c.gt_voxels;
            e["pred_voxels"] = c.pred_voxels;
            e["intersection"] = c.intersection;
            e["detected"] = c.detected;
        }
        per_class.push_back(std::move(e));
    }
    j["per_class"] = std::move(per_class);

    nlohmann::json groups = nlohmann::json::object();
    for (const GroupSummary& s : result.groups) groups[s.name] = summary_json(s);
    j["groups"] = std::move(groups);

    nlohmann::json corr;
    corr["differing_voxels"] = result.correction.differing_voxels;
    corr["denominator"] = denominator_name(result.correction.denominator);
    corr["denominator_voxels"] = result.correction.denominator_voxels;
    corr["percentage"] = result.correction.percentage;
    j["correction"] = std::move(corr);
    return j.dump(2);
}

std::string metrics_to_csv(const MetricsResult& result) {
    std::ostringstream out;
    out << "label,absent,dsc,gt_voxels,pred_voxels,intersection,detected\n";
    for (const ClassDsc& c : result.dsc.classes) {
        out << c.label << ',' << (c.absent ? 1 : 0) << ',';
        if (c.absent)
            out << ",,,,";
        else
            out << c.dsc << ',' << c.gt_voxels << ',' << c.pred_voxels << ',' << c.intersection
                << ',' << (c.detected ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

} // namespace voxfuse
