#include "voxfuse/selection.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voxfuse/ensemble.hpp"
#include "voxfuse/error.hpp"

namespace voxfuse {

std::vector<CandidateScan> rank(std::vector<CandidateScan> candidates, SelectionMode mode) {
    if (candidates.empty()) fail(ErrorCode::empty_domain, "no candidate scans to rank");
    const bool ascending = mode == SelectionMode::lowest_uncertainty;
    std::sort(candidates.begin(), candidates.end(),
              [ascending](const CandidateScan& a, const CandidateScan& b) {
                  if (a.mean_uncertainty != b.mean_uncertainty)
                      return ascending ? a.mean_uncertainty < b.mean_uncertainty
                                       : a.mean_uncertainty > b.mean_uncertainty;
                  return a.scan_id < b.scan_id;
              });
    return candidates;
}

std::vector<CandidateScan> select(const std::vector<CandidateScan>& candidates,
                                  const SelectionPolicy& policy) {
    if (candidates.empty()) fail(ErrorCode::empty_domain, "no candidate scans to select from");
    if (!policy.budget_scans && !policy.cost_cap)
        fail(ErrorCode::invalid_argument, "selection policy needs a scan budget or a cost cap");
    if (policy.budget_scans && *policy.budget_scans < 0)
        fail(ErrorCode::invalid_argument, "scan budget must be non-negative");
    if (policy.cost_cap && !(*policy.cost_cap > 0.0))
        fail(ErrorCode::invalid_argument, "cost cap must be positive");

    const std::vector<CandidateScan> ranked = rank(candidates, policy.mode);
    std::vector<CandidateScan> chosen;
    double remaining = policy.cost_cap.value_or(0.0);
    for (const CandidateScan& scan : ranked) {
        if (policy.budget_scans && static_cast<std::int64_t>(chosen.size()) >= *policy.budget_scans)
            break;
        if (policy.cost_cap) {
            if (!scan.annotation_cost)
                fail(ErrorCode::invalid_argument,
                     "scan '" + scan.scan_id + "' has no annotation cost estimate");
            // strict greedy prefix: stop at the first scan that does not fit
            if (*scan.annotation_cost > remaining) break;
            remaining -= *scan.annotation_cost;
        }
        chosen.push_back(scan);
    }
    return chosen;
}

namespace {

double pearson_checked(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        fail(ErrorCode::invalid_argument, "correlation inputs differ in length");
    const std::size_t n = xs.size();
    if (n < 2) fail(ErrorCode::undefined_correlation, "correlation needs at least 2 points");

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        fail(ErrorCode::undefined_correlation, "correlation undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0; // 1-based average rank
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double pearson(std::span<const double> xs, std::span<const double> ys) {
    return pearson_checked(xs, ys);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        fail(ErrorCode::invalid_argument, "correlation inputs differ in length");
    const std::vector<double> rx = fractional_ranks(xs);
    const std::vector<double> ry = fractional_ranks(ys);
    return pearson_checked(rx, ry);
}

std::vector<RankedScan> rank_and_select(const std::vector<CandidateScan>& candidates,
                                        const SelectionPolicy& policy) {
    SelectionPolicy effective = policy;
    if (!effective.budget_scans && !effective.cost_cap)
        effective.budget_scans = static_cast<std::int64_t>(candidates.size());

    const std::vector<CandidateScan> ranked = rank(candidates, effective.mode);
    const std::vector<CandidateScan> chosen = select(candidates, effective);

    std::vector<RankedScan> out;
    out.reserve(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        RankedScan r;
        r.scan = ranked[i];
        r.rank = static_cast<int>(i) + 1;
        r.selected = i < chosen.size(); // selection is a prefix of the ranking
        out.push_back(std::move(r));
    }
    return out;
}

std::string ranking_to_json(const std::vector<RankedScan>& ranking) {
    nlohmann::json j = nlohmann::json::array();
    for (const RankedScan& r : ranking) {
        nlohmann::json e;
        e["scan_id"] = r.scan.scan_id;
        e["mean_uncertainty"] = r.scan.mean_uncertainty;
        e["rank"] = r.rank;
        e["selected"] = r.selected;
        if (r.scan.correction_percentage) e["correction_percentage"] = *r.scan.correction_percentage;
        if (r.scan.annotation_cost) e["annotation_cost"] = *r.scan.annotation_cost;
        j.push_back(std::move(e));
    }
    return j.dump(2);
}

namespace {

CandidateScan candidate_from_json(const nlohmann::json& j, const std::string& origin) {
    if (!j.is_object())
        fail(ErrorCode::corrupt_input, origin + ": candidate entry must be a JSON object");
    try {
        CandidateScan scan;
        scan.scan_id = j.at("scan_id").get<std::string>();
        scan.mean_uncertainty = j.at("mean_uncertainty").get<double>();
        if (j.contains("correction_percentage"))
            scan.correction_percentage = j.at("correction_percentage").get<double>();
        if (j.contains("annotation_cost"))
            scan.annotation_cost = j.at("annotation_cost").get<double>();
        return scan;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt_input, origin + ": malformed scan report: " + e.what());
    }
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, path.string() + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

std::vector<CandidateScan> load_candidates(const std::string& reports_path) {
    namespace fs = std::filesystem;
    const fs::path path(reports_path);
    if (!fs::exists(path)) fail(ErrorCode::input_missing, reports_path + ": no such file");

    std::vector<CandidateScan> candidates;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file() && entry.path().extension() == ".json")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(slurp(file));
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorCode::corrupt_input, file.string() + ": " + e.what());
            }
            candidates.push_back(candidate_from_json(j, file.string()));
        }
    } else {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(slurp(path));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::corrupt_input, reports_path + ": " + e.what());
        }
        if (j.is_array())
            for (const auto& entry : j) candidates.push_back(candidate_from_json(entry, reports_path));
        else
            candidates.push_back(candidate_from_json(j, reports_path));
    }
    if (candidates.empty())
        fail(ErrorCode::empty_domain, reports_path + ": no scan reports found");
    return candidates;
}

} // namespace voxfuse
