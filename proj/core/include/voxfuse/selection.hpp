#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace voxfuse {

struct CandidateScan {
    std::string scan_id;
    double mean_uncertainty = 0.0;
    std::optional<double> correction_percentage;
    std::optional<double> annotation_cost; // voxels or minutes
};

// lowest_uncertainty is the default policy: low-uncertainty scans need the
// least correction effort while contributing comparable training value.
// highest_uncertainty is kept for classical active-learning comparisons.
enum class SelectionMode { lowest_uncertainty, highest_uncertainty };

struct SelectionPolicy {
    SelectionMode mode = SelectionMode::lowest_uncertainty;
    std::optional<std::int64_t> budget_scans; // K
    std::optional<double> cost_cap;
};

// Sorted by mean_uncertainty (ascending for lowest mode), ties broken by
// scan_id so the order never depends on input order.
std::vector<CandidateScan> rank(std::vector<CandidateScan> candidates, SelectionMode mode);

// Greedy prefix of rank(): take scans in order until K is reached or the next
// scan does not fit the remaining cost cap. Strict prefix - nothing after the
// first unaffordable scan is considered.
std::vector<CandidateScan> select(const std::vector<CandidateScan>& candidates,
                                  const SelectionPolicy& policy);

// Product-moment correlation; undefined-correlation for n < 2 or zero
// variance in either argument.
double pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson on fractional ranks, ties averaged.
double spearman(std::span<const double> xs, std::span<const double> ys);

struct RankedScan {
    CandidateScan scan;
    int rank = 0;
    bool selected = false;
};

std::vector<RankedScan> rank_and_select(const std::vector<CandidateScan>& candidates,
                                        const SelectionPolicy& policy);

std::string ranking_to_json(const std::vector<RankedScan>& ranking);

// Candidates from ScanReport JSON objects: either one report per file in a
// directory, or a JSON array in a single file.
std::vector<CandidateScan> load_candidates(const std::string& reports_path);

} // namespace voxfuse
