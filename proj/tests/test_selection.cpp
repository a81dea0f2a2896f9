#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "voxfuse/selection.hpp"

using namespace voxfuse;
using namespace testutil;

namespace {

CandidateScan scan(const std::string& id, double uncertainty,
                   std::optional<double> cost = std::nullopt) {
    CandidateScan s;
    s.scan_id = id;
    s.mean_uncertainty = uncertainty;
    s.annotation_cost = cost;
    return s;
}

std::vector<std::string> ids(const std::vector<CandidateScan>& scans) {
    std::vector<std::string> out;
    for (const auto& s : scans) out.push_back(s.scan_id);
    return out;
}

} // namespace

TEST_SUITE("scan-selection") {

TEST_CASE("ranking sorts by uncertainty with scan_id tie-break") {
    CHECK(ids(rank({scan("only", 0.1)}, SelectionMode::lowest_uncertainty)) ==
          std::vector<std::string>{"only"});

    const std::vector<CandidateScan> candidates = {scan("a", 0.02), scan("b", 0.01),
                                                   scan("c", 0.03)};
    CHECK(ids(rank(candidates, SelectionMode::lowest_uncertainty)) ==
          std::vector<std::string>{"b", "a", "c"});
    CHECK(ids(rank(candidates, SelectionMode::highest_uncertainty)) ==
          std::vector<std::string>{"c", "a", "b"});
}

TEST_CASE("equal uncertainties rank by scan_id regardless of input order") {
    std::vector<CandidateScan> candidates = {scan("delta", 0.5), scan("alpha", 0.5),
                                             scan("charlie", 0.5), scan("bravo", 0.5)};
    const std::vector<std::string> expected = {"alpha", "bravo", "charlie", "delta"};
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.scan_id < b.scan_id; });
    do {
        CHECK(ids(rank(candidates, SelectionMode::lowest_uncertainty)) == expected);
    } while (std::next_permutation(candidates.begin(), candidates.end(),
                                   [](const auto& a, const auto& b) {
                                       return a.scan_id < b.scan_id;
                                   }));
}

TEST_CASE("rank output is a permutation and re-ranking is idempotent") {
    std::vector<CandidateScan> candidates;
    Rng rng(5);
    for (int i = 0; i < 12; ++i)
        candidates.push_back(scan("s" + std::to_string(i), rng.next_unit() * 0.25));

    const auto ranked = rank(candidates, SelectionMode::lowest_uncertainty);
    REQUIRE(ranked.size() == candidates.size());
    auto sorted_in = ids(candidates);
    auto sorted_out = ids(ranked);
    std::sort(sorted_in.begin(), sorted_in.end());
    std::sort(sorted_out.begin(), sorted_out.end());
    CHECK(sorted_in == sorted_out);
    CHECK(ids(rank(ranked, SelectionMode::lowest_uncertainty)) == ids(ranked));
}

TEST_CASE("budgeted selection takes a ranked prefix") {
    const std::vector<CandidateScan> candidates = {scan("a", 0.02), scan("b", 0.01),
                                                   scan("c", 0.03), scan("d", 0.005),
                                                   scan("e", 0.04), scan("f", 0.015)};
    SelectionPolicy policy;
    policy.budget_scans = 3;
    CHECK(ids(select(candidates, policy)) == std::vector<std::string>{"d", "b", "f"});

    policy.budget_scans = static_cast<std::int64_t>(candidates.size());
    CHECK(ids(select(candidates, policy)) ==
          ids(rank(candidates, SelectionMode::lowest_uncertainty)));

    policy.budget_scans = 0;
    CHECK(select(candidates, policy).empty());
}

TEST_CASE("cost caps follow the strict greedy prefix rule") {
    // ranked order will be x (60k), y (50k), z (30k) by uncertainty
    const std::vector<CandidateScan> candidates = {scan("x", 0.01, 60000.0),
                                                   scan("y", 0.02, 50000.0),
                                                   scan("z", 0.03, 30000.0)};
    SelectionPolicy policy;
    policy.cost_cap = 100000.0;
    // 60k fits; 50k exceeds the remaining 40k, so the prefix stops there
    CHECK(ids(select(candidates, policy)) == std::vector<std::string>{"x"});

    policy.cost_cap = 20000.0; // below the cheapest ranked scan
    CHECK(select(candidates, policy).empty());

    policy.cost_cap = 150000.0;
    CHECK(ids(select(candidates, policy)) == std::vector<std::string>{"x", "y", "z"});

    SelectionPolicy no_costs;
    no_costs.cost_cap = 10.0;
    CHECK_THROWS_AS(select({scan("p", 0.1)}, no_costs), Error);
}

TEST_CASE("selection validates its inputs") {
    try {
        select({}, SelectionPolicy{});
        FAIL("expected empty-domain");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_domain);
    }
    SelectionPolicy nothing; // neither budget nor cap
    CHECK_THROWS_AS(select({scan("a", 0.1)}, nothing), Error);
}

TEST_CASE("pearson on documented fixtures") {
    const std::vector<double> xs = {1.0, 2.0, 3.0};
    const std::vector<double> linear = {3.0, 5.0, 7.0}; // 2x + 1
    CHECK(pearson(xs, linear) == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<double> negated = {-1.0, -2.0, -3.0};
    CHECK(pearson(xs, negated) == doctest::Approx(-1.0).epsilon(1e-12));

    const std::vector<double> ys = {1.0, 3.0, 2.0};
    CHECK(pearson(xs, ys) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("spearman ranks before correlating") {
    const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> monotone = {10.0, 100.0, 1000.0, 10000.0};
    CHECK(spearman(xs, monotone) == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<double> reversed = {4.0, 3.0, 2.0, 1.0};
    CHECK(spearman(xs, reversed) == doctest::Approx(-1.0).epsilon(1e-12));

    const std::vector<double> ys = {1.0, 2.0, 4.0, 3.0};
    CHECK(spearman(xs, ys) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("degenerate correlations are an explicit error") {
    const std::vector<double> xs = {1.0, 2.0, 3.0};
    const std::vector<double> constant = {5.0, 5.0, 5.0};
    try {
        pearson(xs, constant);
        FAIL("expected undefined-correlation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::undefined_correlation);
    }
    CHECK_THROWS_AS(pearson(std::vector<double>{1.0}, std::vector<double>{2.0}), Error);
    CHECK_THROWS_AS(spearman(xs, constant), Error);
}

TEST_CASE("correlations are symmetric and transform-invariant") {
    Rng rng(9);
    std::vector<double> xs(20), ys(20);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.next_unit();
        ys[i] = rng.next_unit();
    }
    CHECK(pearson(xs, ys) == doctest::Approx(pearson(ys, xs)).epsilon(1e-12));
    CHECK(spearman(xs, ys) == doctest::Approx(spearman(ys, xs)).epsilon(1e-12));

    // positive affine transform leaves pearson unchanged
    std::vector<double> affine(xs);
    for (auto& v : affine) v = 3.5 * v + 2.0;
    CHECK(pearson(affine, ys) == doctest::Approx(pearson(xs, ys)).epsilon(1e-10));

    // any strictly increasing transform leaves spearman unchanged
    std::vector<double> cubed(xs);
    for (auto& v : cubed) v = v * v * v;
    CHECK(spearman(cubed, ys) == doctest::Approx(spearman(xs, ys)).epsilon(1e-12));
}

TEST_CASE("rank_and_select emits ranks and a selection prefix") {
    const std::vector<CandidateScan> candidates = {scan("a", 0.03), scan("b", 0.01),
                                                   scan("c", 0.02)};
    SelectionPolicy policy;
    policy.budget_scans = 2;
    const auto ranking = rank_and_select(candidates, policy);
    REQUIRE(ranking.size() == 3);
    CHECK(ranking[0].scan.scan_id == "b");
    CHECK(ranking[0].rank == 1);
    CHECK(ranking[0].selected);
    CHECK(ranking[1].scan.scan_id == "c");
    CHECK(ranking[1].selected);
    CHECK(ranking[2].scan.scan_id == "a");
    CHECK_FALSE(ranking[2].selected);

    const std::string json = ranking_to_json(ranking);
    CHECK(json.find("\"scan_id\": \"b\"") != std::string::npos);
    CHECK(json.find("\"rank\": 1") != std::string::npos);
    CHECK(json.find("\"selected\": false") != std::string::npos);
}

TEST_CASE("candidates load from report files and arrays") {
    TempDir dir;
    write_file(dir / "a.json",
               R"({"scan_id": "a", "ensemble_size": 6, "mean_uncertainty": 0.02,
                   "num_voxels": 100, "num_classes": 5})");
    write_file(dir / "b.json",
               R"({"scan_id": "b", "mean_uncertainty": 0.01, "correction_percentage": 1.5})");
    const auto from_dir = load_candidates(dir.path().string());
    REQUIRE(from_dir.size() == 2);
    CHECK(from_dir[0].scan_id == "a");
    CHECK(from_dir[1].correction_percentage == 1.5);

    write_file(dir / "consolidated.json",
               R"([{"scan_id": "x", "mean_uncertainty": 0.1},
                   {"scan_id": "y", "mean_uncertainty": 0.2, "annotation_cost": 42}])");
    const auto from_array = load_candidates((dir / "consolidated.json").string());
    REQUIRE(from_array.size() == 2);
    CHECK(from_array[1].annotation_cost == 42.0);

    CHECK_THROWS_AS(load_candidates((dir / "missing.json").string()), Error);
}

} // TEST_SUITE
