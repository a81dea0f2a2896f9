#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "voxfuse/ensemble.hpp"
#include "voxfuse/nifti.hpp"
#include "voxfuse/transform.hpp"

using namespace voxfuse;
using namespace testutil;

namespace {

ProbabilityMap uniform_prob(const Dims& dims, int L, const std::vector<float>& vec) {
    const std::size_t count = static_cast<std::size_t>(dims.voxel_count());
    std::vector<float> planes(count * static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l)
        std::fill_n(planes.begin() + static_cast<std::ptrdiff_t>(l * count), count,
                    vec[static_cast<std::size_t>(l)]);
    return ProbabilityMap::dense(make_meta(dims), L, std::move(planes));
}

LabelMap uniform_labels(const Dims& dims, int L, std::int32_t value) {
    return LabelMap::filled(make_meta(dims), L, value);
}

// sequential single-accumulator run, used as the merge oracle
VarianceAccumulator sequential(const std::vector<ProbabilityMap>& members) {
    VarianceAccumulator acc(members.front().meta(), members.front().num_classes());
    for (const auto& m : members) acc.accumulate(m);
    return acc;
}

} // namespace

TEST_SUITE("ensemble-core") {

TEST_CASE("first member becomes the mean with zero spread") {
    const Dims dims{4, 4, 4};
    auto planes = random_probability_planes(dims, 3, 1);
    const ProbabilityMap member = ProbabilityMap::dense(make_meta(dims), 3, planes);

    VarianceAccumulator acc(make_meta(dims), 3);
    acc.accumulate(member);
    REQUIRE(acc.members_seen() == 1);
    for (std::int64_t v = 0; v < member.size(); ++v)
        for (int l = 0; l < 3; ++l) {
            CHECK(acc.mean_at(v, l) == doctest::Approx(member.value(v, l)).epsilon(1e-12));
            CHECK(acc.m2_at(v, l) == 0.0);
        }
}

TEST_CASE("identical members leave M2 at exactly zero") {
    const Dims dims{4, 4, 4};
    const ProbabilityMap member =
        ProbabilityMap::dense(make_meta(dims), 3, random_probability_planes(dims, 3, 2));
    VarianceAccumulator acc(make_meta(dims), 3);
    acc.accumulate(member);
    acc.accumulate(member);
    for (std::int64_t v = 0; v < member.size(); ++v)
        for (int l = 0; l < 3; ++l) REQUIRE(acc.m2_at(v, l) == 0.0);
}

TEST_CASE("two members at 0.2 and 0.8 give mean 0.5 and M2 0.18") {
    const Dims dims{2, 2, 2};
    VarianceAccumulator acc(make_meta(dims), 2);
    acc.accumulate(uniform_prob(dims, 2, {0.2f, 0.8f}));
    acc.accumulate(uniform_prob(dims, 2, {0.8f, 0.2f}));
    CHECK(acc.mean_at(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(acc.m2_at(0, 0) == doctest::Approx(0.18).epsilon(1e-6));
}

TEST_CASE("merge with an empty accumulator is the identity") {
    const Dims dims{4, 4, 4};
    const ProbabilityMap member =
        ProbabilityMap::dense(make_meta(dims), 3, random_probability_planes(dims, 3, 3));
    VarianceAccumulator acc(make_meta(dims), 3);
    acc.accumulate(member);
    const VarianceAccumulator empty(make_meta(dims), 3);

    for (const VarianceAccumulator& merged :
         {VarianceAccumulator::merge(acc, empty), VarianceAccumulator::merge(empty, acc)}) {
        REQUIRE(merged.members_seen() == 1);
        for (std::int64_t v = 0; v < member.size(); ++v)
            for (int l = 0; l < 3; ++l)
                CHECK(merged.mean_at(v, l) == acc.mean_at(v, l));
    }
}

TEST_CASE("merge is symmetric and matches sequential accumulation") {
    const Dims dims{8, 8, 8};
    std::vector<ProbabilityMap> members;
    for (int i = 0; i < 6; ++i)
        members.push_back(
            ProbabilityMap::dense(make_meta(dims), 4, random_probability_planes(dims, 4, 50 + i)));

    VarianceAccumulator left(make_meta(dims), 4), right(make_meta(dims), 4);
    for (int i = 0; i < 3; ++i) left.accumulate(members[static_cast<std::size_t>(i)]);
    for (int i = 3; i < 6; ++i) right.accumulate(members[static_cast<std::size_t>(i)]);

    const VarianceAccumulator ab = VarianceAccumulator::merge(left, right);
    const VarianceAccumulator ba = VarianceAccumulator::merge(right, left);
    const VarianceAccumulator seq = sequential(members);
    REQUIRE(ab.members_seen() == 6);

    for (std::int64_t v = 0; v < dims.voxel_count(); ++v)
        for (int l = 0; l < 4; ++l) {
            CHECK(std::abs(ab.mean_at(v, l) - ba.mean_at(v, l)) < 1e-9);
            CHECK(std::abs(ab.m2_at(v, l) - ba.m2_at(v, l)) < 1e-9);
            CHECK(std::abs(ab.mean_at(v, l) - seq.mean_at(v, l)) < 1e-9);
            CHECK(std::abs(ab.m2_at(v, l) - seq.m2_at(v, l)) < 1e-9);
        }

    // three-way associativity
    VarianceAccumulator a2(make_meta(dims), 4), b2(make_meta(dims), 4), c2(make_meta(dims), 4);
    for (int i = 0; i < 2; ++i) a2.accumulate(members[static_cast<std::size_t>(i)]);
    for (int i = 2; i < 4; ++i) b2.accumulate(members[static_cast<std::size_t>(i)]);
    for (int i = 4; i < 6; ++i) c2.accumulate(members[static_cast<std::size_t>(i)]);
    const VarianceAccumulator lhs =
        VarianceAccumulator::merge(VarianceAccumulator::merge(a2, b2), c2);
    const VarianceAccumulator rhs =
        VarianceAccumulator::merge(a2, VarianceAccumulator::merge(b2, c2));
    for (std::int64_t v = 0; v < dims.voxel_count(); ++v)
        for (int l = 0; l < 4; ++l)
            CHECK(std::abs(lhs.m2_at(v, l) - rhs.m2_at(v, l)) < 1e-9);
}

TEST_CASE("hand-derived voxel uncertainties") {
    const Dims dims{1, 1, 1};

    SUBCASE("votes {1,1,2} with L=3 give 4/27 on both paths") {
        VoteTable votes(make_meta(dims), 3);
        votes.add_labels(std::vector<std::int32_t>{1});
        votes.add_labels(std::vector<std::int32_t>{1});
        votes.add_labels(std::vector<std::int32_t>{2});
        const UncertaintyMap closed = onehot_uncertainty(votes);
        CHECK(std::abs(closed.value(0) - 4.0 / 27.0) < 1e-12);

        VarianceAccumulator acc(make_meta(dims), 3);
        for (std::int32_t lab : {1, 1, 2})
            acc.accumulate(ProbabilityMap::onehot(uniform_labels(dims, 3, lab)));
        const UncertaintyMap generic = voxel_uncertainty(acc);
        CHECK(std::abs(generic.value(0) - 4.0 / 27.0) < 1e-12);
    }

    SUBCASE("two fully disagreeing members with L=2 hit the 0.25 bound exactly") {
        VoteTable votes(make_meta(dims), 2);
        votes.add_labels(std::vector<std::int32_t>{0});
        votes.add_labels(std::vector<std::int32_t>{1});
        CHECK(onehot_uncertainty(votes).value(0) == 0.25);

        VarianceAccumulator acc(make_meta(dims), 2);
        acc.accumulate(ProbabilityMap::onehot(uniform_labels(dims, 2, 0)));
        acc.accumulate(ProbabilityMap::onehot(uniform_labels(dims, 2, 1)));
        CHECK(voxel_uncertainty(acc).value(0) == 0.25);
    }

    SUBCASE("uniform votes over L=4 with N=4 give 0.1875") {
        VoteTable votes(make_meta(dims), 4);
        for (std::int32_t lab : {0, 1, 2, 3})
            votes.add_labels(std::vector<std::int32_t>{lab});
        CHECK(onehot_uncertainty(votes).value(0) == 0.1875); // (1 - 4/16) / 4
    }

    SUBCASE("unanimous votes give zero") {
        VoteTable votes(make_meta(dims), 4);
        for (int i = 0; i < 5; ++i) votes.add_labels(std::vector<std::int32_t>{2});
        CHECK(onehot_uncertainty(votes).value(0) == 0.0);
    }
}

TEST_CASE("N=1 yields all zeros, empty accumulators are an error") {
    const Dims dims{4, 4, 4};
    VarianceAccumulator acc(make_meta(dims), 3);
    try {
        voxel_uncertainty(acc);
        FAIL("expected empty-ensemble");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_ensemble);
    }
    acc.accumulate(ProbabilityMap::onehot(random_labels(dims, 3, 4)));
    const UncertaintyMap single = voxel_uncertainty(acc);
    for (double v : single.values()) REQUIRE(v == 0.0);
    CHECK_THROWS_AS(voxel_uncertainty(acc, VarianceKind::sample), Error);
}

TEST_CASE("zero-variance law holds exactly for identical members") {
    const LabelMap member = random_labels({8, 8, 8}, 5, 9);
    for (int n : {1, 3, 6}) {
        std::vector<LabelMap> members(static_cast<std::size_t>(n), member);
        CHECK(labels_equal(fuse_majority(members), member));

        VoteTable votes(member.meta(), 5);
        for (const auto& m : members) votes.add_member(m);
        CHECK(mean_uncertainty(onehot_uncertainty(votes)) == 0.0);
    }
}

TEST_CASE("mean uncertainty averages the map") {
    const Dims dims{8, 8, 8};
    std::vector<double> values(512, 0.0);
    for (std::size_t i = 0; i < 256; ++i) values[i] = 0.2;
    const UncertaintyMap map(make_meta(dims), std::move(values));
    CHECK(mean_uncertainty(map) == doctest::Approx(0.1).epsilon(1e-12));

    // mask restricted to the 0.2 half
    std::vector<float> mask_data(512, 0.0f);
    for (std::size_t i = 0; i < 256; ++i) mask_data[i] = 1.0f;
    const VoxelGrid mask(make_meta(dims), ElementKind::label, std::move(mask_data));
    CHECK(mean_uncertainty(map, &mask) == doctest::Approx(0.2).epsilon(1e-12));

    const VoxelGrid empty_mask(make_meta(dims), ElementKind::label,
                               std::vector<float>(512, 0.0f));
    try {
        mean_uncertainty(map, &empty_mask);
        FAIL("expected empty-domain");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_domain);
    }
}

TEST_CASE("noisier ensembles score strictly higher mean uncertainty") {
    const Dims dims{16, 16, 16};
    const LabelMap gt = random_labels(dims, 4, 31);
    Rng rng(32);

    auto noisy_votes = [&](double flip) {
        VoteTable votes(gt.meta(), 4);
        for (int m = 0; m < 5; ++m) {
            std::vector<std::int32_t> labels(gt.values().begin(), gt.values().end());
            for (auto& v : labels)
                if (rng.next_unit() < flip) v = static_cast<std::int32_t>(rng.next_below(4));
            votes.add_labels(labels);
        }
        return votes;
    };
    const double low = mean_uncertainty(onehot_uncertainty(noisy_votes(0.02)));
    const double high = mean_uncertainty(onehot_uncertainty(noisy_votes(0.4)));
    CHECK(low < high);
}

TEST_CASE("closed form equals the generic Welford path on one-hot ensembles") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const Dims dims{16, 16, 16};
        const int L = 2 + static_cast<int>(rng.next_below(9));
        const int N = 1 + static_cast<int>(rng.next_below(7));

        VoteTable votes(make_meta(dims), L);
        VarianceAccumulator acc(make_meta(dims), L);
        for (int m = 0; m < N; ++m) {
            const LabelMap member = random_labels(dims, L, rng.next_u64());
            votes.add_member(member);
            acc.accumulate(ProbabilityMap::onehot(member));
        }
        const UncertaintyMap closed = onehot_uncertainty(votes);
        const UncertaintyMap generic = voxel_uncertainty(acc);
        double max_diff = 0.0;
        for (std::int64_t v = 0; v < dims.voxel_count(); ++v)
            max_diff = std::max(max_diff, std::abs(closed.value(v) - generic.value(v)));
        CHECK(max_diff < 1e-6);
        for (double v : closed.values()) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 0.25);
        }
    }
}

TEST_CASE("majority fusion follows the brute-force mode oracle") {
    SUBCASE("documented examples") {
        const Dims dims{1, 1, 1};
        CHECK(fuse_majority({uniform_labels(dims, 3, 2)}).at(0, 0, 0) == 2);
        CHECK(fuse_majority({uniform_labels(dims, 3, 1), uniform_labels(dims, 3, 1),
                             uniform_labels(dims, 3, 2)})
                  .at(0, 0, 0) == 1);
        // tie {2, 1} resolves to the lower label
        CHECK(fuse_majority({uniform_labels(dims, 3, 2), uniform_labels(dims, 3, 1)})
                  .at(0, 0, 0) == 1);
    }

    SUBCASE("random ensembles") {
        Rng rng(55);
        for (int trial = 0; trial < 10; ++trial) {
            const Dims dims{8, 8, 8};
            const int L = 2 + static_cast<int>(rng.next_below(4));
            const int N = 1 + static_cast<int>(rng.next_below(7));
            std::vector<LabelMap> members;
            for (int m = 0; m < N; ++m) members.push_back(random_labels(dims, L, rng.next_u64()));

            const LabelMap fused = fuse_majority(members);
            for (std::int64_t v = 0; v < dims.voxel_count(); ++v) {
                std::vector<std::int32_t> votes;
                for (const auto& m : members)
                    votes.push_back(m.values()[static_cast<std::size_t>(v)]);
                REQUIRE(fused.values()[static_cast<std::size_t>(v)] == oracle_mode(votes, L));
            }
        }
    }
}

TEST_CASE("member order never changes fusion or uncertainty") {
    Rng rng(66);
    const Dims dims{8, 8, 8};
    std::vector<LabelMap> members;
    for (int m = 0; m < 5; ++m) members.push_back(random_labels(dims, 4, 200 + m));

    const LabelMap fused = fuse_majority(members);
    VoteTable votes(make_meta(dims), 4);
    for (const auto& m : members) votes.add_member(m);
    const UncertaintyMap unc = onehot_uncertainty(votes);

    std::vector<LabelMap> shuffled = members;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[0], shuffled[2]);
    const LabelMap fused2 = fuse_majority(shuffled);
    VoteTable votes2(make_meta(dims), 4);
    for (const auto& m : shuffled) votes2.add_member(m);

    CHECK(labels_equal(fused, fused2));
    const UncertaintyMap unc2 = onehot_uncertainty(votes2);
    for (std::int64_t v = 0; v < dims.voxel_count(); ++v) REQUIRE(unc.value(v) == unc2.value(v));
    (void)rng;
}

TEST_CASE("mean-probability fusion averages then takes the argmax") {
    const Dims dims{2, 2, 2};

    SUBCASE("identical members reproduce any member's argmax") {
        const ProbabilityMap member = uniform_prob(dims, 3, {0.2f, 0.5f, 0.3f});
        const auto [fused, probs] = fuse_mean_probability({member, member});
        for (std::int32_t v : fused.values()) REQUIRE(v == 1);
        CHECK(probs.value(0, 1) == doctest::Approx(0.5).epsilon(1e-6));
    }

    SUBCASE("disagreeing one-hot members tie toward label 0") {
        const auto [fused, probs] = fuse_mean_probability(
            {ProbabilityMap::onehot(uniform_labels(dims, 2, 0)),
             ProbabilityMap::onehot(uniform_labels(dims, 2, 1))});
        CHECK(probs.value(0, 0) == doctest::Approx(0.5));
        CHECK(probs.value(0, 1) == doctest::Approx(0.5));
        for (std::int32_t v : fused.values()) REQUIRE(v == 0);
    }

    SUBCASE("(0.6,0.4) and (0.1,0.9) average to (0.35,0.65) and label 1") {
        const auto [fused, probs] = fuse_mean_probability(
            {uniform_prob(dims, 2, {0.6f, 0.4f}), uniform_prob(dims, 2, {0.1f, 0.9f})});
        CHECK(probs.value(0, 0) == doctest::Approx(0.35).epsilon(1e-6));
        CHECK(probs.value(0, 1) == doctest::Approx(0.65).epsilon(1e-6));
        for (std::int32_t v : fused.values()) REQUIRE(v == 1);
    }
}

TEST_CASE("shape and class mismatches are rejected") {
    VarianceAccumulator acc(make_meta({4, 4, 4}), 3);
    try {
        acc.accumulate(ProbabilityMap::onehot(random_labels({4, 4, 5}, 3, 1)));
        FAIL("expected incompatible-member");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::incompatible_member);
    }
    CHECK_THROWS_AS(acc.accumulate(ProbabilityMap::onehot(random_labels({4, 4, 4}, 4, 1))),
                    Error);
    CHECK_THROWS_AS(VarianceAccumulator::merge(acc, VarianceAccumulator(make_meta({2, 2, 2}), 3)),
                    Error);
    CHECK_THROWS_AS(fuse_majority({random_labels({4, 4, 4}, 3, 1), random_labels({4, 4, 5}, 3, 2)}),
                    Error);
}

TEST_CASE("vote tables validate their counts") {
    const Dims dims{2, 1, 1};
    // voxel 0 sums to 2, voxel 1 sums to 1: corrupt
    VoteTable bad = VoteTable::from_counts(make_meta(dims), 2, 2, {1, 1, 1, 0});
    try {
        onehot_uncertainty(bad);
        FAIL("expected corrupt-votes");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::corrupt_votes);
    }
}

TEST_CASE("exclude-background averages over the foreground labels only") {
    const Dims dims{1, 1, 1};
    VoteTable votes(make_meta(dims), 3);
    votes.add_labels(std::vector<std::int32_t>{1});
    votes.add_labels(std::vector<std::int32_t>{1});
    votes.add_labels(std::vector<std::int32_t>{2});
    // per-label variances: (0, 2/9, 2/9); foreground mean = 2/9
    CHECK(onehot_uncertainty(votes, true).value(0) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
}

// --- manifest + engine -------------------------------------------------------

TEST_CASE("manifests parse from arrays and objects") {
    const Manifest bare = parse_manifest_json(
        R"([{"member_id": "a", "path": "a.nii"}, {"path": "b.nii"}])");
    REQUIRE(bare.sources.size() == 2);
    CHECK(bare.sources[0].member_id == "a");
    CHECK(bare.sources[1].member_id == "member1");
    CHECK(bare.sources[0].transform.kind == TransformKind::identity);

    const Manifest obj = parse_manifest_json(
        R"({"scan_id": "s1", "num_classes": 5, "members": [
            {"member_id": "m", "path": "m.nii",
             "transform": {"kind": "integer-offset", "offset": [1, 0, 0]}}]})");
    CHECK(obj.scan_id == "s1");
    CHECK(obj.num_classes == 5);
    CHECK(obj.sources[0].transform.kind == TransformKind::integer_offset);

    CHECK_THROWS_AS(parse_manifest_json(R"([{"member_id": "x"}])"), Error); // no path
    CHECK_THROWS_AS(
        parse_manifest_json(R"([{"member_id": "x", "path": "a"}, {"member_id": "x", "path": "b"}])"),
        Error);
}

TEST_CASE("probability sources expand their class placeholder") {
    PredictionSource src;
    src.path = "pred/member0/class_{class}.nii.gz";
    CHECK(src.is_probability());
    CHECK(src.class_path(7) == fs::path("pred/member0/class_7.nii.gz"));
    src.path = "plain.nii.gz";
    CHECK_FALSE(src.is_probability());
}

TEST_CASE("run_ensemble with a single identity member reproduces it") {
    TempDir dir;
    const LabelMap member = random_labels({12, 10, 8}, 4, 91);
    write_label_map(member, dir / "m0.nii.gz");

    PredictionSource src;
    src.member_id = "m0";
    src.path = dir / "m0.nii.gz";

    EnsembleOptions options;
    options.num_classes = 4;
    const EnsembleResult result = run_ensemble({src}, options);
    CHECK(labels_equal(result.fused, member));
    CHECK(result.report.mean_uncertainty == 0.0);
    CHECK(result.report.ensemble_size == 1);
    CHECK(result.report.num_voxels == 12 * 10 * 8);
}

TEST_CASE("run_ensemble undoes member transforms before fusing") {
    TempDir dir;
    const Dims dims{16, 16, 16};
    const LabelMap gt = random_labels(dims, 5, 17);

    std::vector<PredictionSource> sources;
    std::vector<TransformSpec> specs = {
        TransformSpec::make_identity(),     TransformSpec::make_offset(2, 0, 0),
        TransformSpec::make_offset(-1, 1, 0), TransformSpec::make_offset(0, -2, 1),
        TransformSpec::make_offset(1, 1, -1), TransformSpec::make_offset(0, 0, 2),
    };
    for (std::size_t i = 0; i < specs.size(); ++i) {
        // the member is the ground truth as seen through its augmentation
        const LabelMap member = apply(specs[i], gt);
        const fs::path path = dir / ("m" + std::to_string(i) + ".nii.gz");
        write_label_map(member, path);
        PredictionSource src;
        src.member_id = "m" + std::to_string(i);
        src.transform = specs[i];
        src.path = path;
        sources.push_back(src);
    }

    EnsembleOptions options;
    options.num_classes = 5;
    options.threads = 2;
    const EnsembleResult result = run_ensemble(sources, options);
    CHECK(result.report.ensemble_size == 6);

    // voxels inside every member's valid mask are reconstructed exactly, so
    // fusion is unanimous and the uncertainty is zero there
    for (std::int64_t z = 3; z < 13; ++z)
        for (std::int64_t y = 3; y < 13; ++y)
            for (std::int64_t x = 3; x < 13; ++x) {
                REQUIRE(result.fused.at(x, y, z) == gt.at(x, y, z));
                REQUIRE(result.uncertainty.value(result.fused.grid().index(x, y, z)) == 0.0);
            }
}

TEST_CASE("run_ensemble reports the declared ensemble size") {
    TempDir dir;
    const Dims dims{10, 10, 10};
    const LabelMap gt = random_labels(dims, 4, 23);

    // best model plus six offset augmentations: seven inferences
    std::vector<TransformSpec> specs = {TransformSpec::make_identity()};
    for (int axis = 0; axis < 3; ++axis)
        for (int sign : {-1, 1}) {
            std::array<std::int64_t, 3> d{0, 0, 0};
            d[static_cast<std::size_t>(axis)] = sign;
            specs.push_back(TransformSpec::make_offset(d[0], d[1], d[2]));
        }

    std::vector<PredictionSource> sources;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const fs::path path = dir / ("m" + std::to_string(i) + ".nii.gz");
        write_label_map(apply(specs[i], gt), path);
        PredictionSource src;
        src.member_id = "m" + std::to_string(i);
        src.transform = specs[i];
        src.path = path;
        sources.push_back(src);
    }

    EnsembleOptions options;
    options.num_classes = 4;
    const EnsembleResult result = run_ensemble(sources, options);
    CHECK(result.report.ensemble_size == 7);
}

TEST_CASE("run_ensemble fails whole when a member is missing or mismatched") {
    TempDir dir;
    write_label_map(random_labels({8, 8, 8}, 3, 5), dir / "good.nii.gz");
    write_label_map(random_labels({8, 8, 9}, 3, 5), dir / "odd.nii.gz");

    PredictionSource good;
    good.member_id = "good";
    good.path = dir / "good.nii.gz";

    PredictionSource missing = good;
    missing.member_id = "missing";
    missing.path = dir / "nope.nii.gz";

    PredictionSource odd = good;
    odd.member_id = "odd";
    odd.path = dir / "odd.nii.gz";

    EnsembleOptions options;
    options.num_classes = 3;
    try {
        run_ensemble({good, missing}, options);
        FAIL("expected input-missing");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::input_missing);
    }
    try {
        run_ensemble({good, odd}, options);
        FAIL("expected incompatible-member");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::incompatible_member);
    }
}

TEST_CASE("run_ensemble accepts dense probability members") {
    TempDir dir;
    const Dims dims{8, 8, 8};
    const int L = 3;

    // two probability members, one sharper than the other
    for (int m = 0; m < 2; ++m) {
        auto planes = random_probability_planes(dims, L, 400 + static_cast<unsigned>(m));
        for (int l = 0; l < L; ++l) {
            std::vector<float> plane(planes.begin() + l * dims.voxel_count(),
                                     planes.begin() + (l + 1) * dims.voxel_count());
            VoxelGrid grid(make_meta(dims), ElementKind::probability, std::move(plane));
            write_volume(grid, dir / ("m" + std::to_string(m) + "_c" + std::to_string(l) + ".nii"));
        }
    }

    std::vector<PredictionSource> sources(2);
    sources[0].member_id = "m0";
    sources[0].path = dir.path().string() + "/m0_c{class}.nii";
    sources[1].member_id = "m1";
    sources[1].path = dir.path().string() + "/m1_c{class}.nii";

    EnsembleOptions options;
    options.num_classes = L;
    options.fusion = FusionMode::mean_probability;
    const EnsembleResult result = run_ensemble(sources, options);

    // oracle: average the two dense maps directly
    std::vector<ProbabilityMap> members;
    for (int m = 0; m < 2; ++m)
        members.push_back(ProbabilityMap::dense(
            make_meta(dims), L, random_probability_planes(dims, L, 400 + static_cast<unsigned>(m))));
    const auto [expected_fused, expected_probs] = fuse_mean_probability(members);
    CHECK(labels_equal(result.fused, expected_fused));
    CHECK(result.report.mean_uncertainty > 0.0);
    CHECK(result.report.mean_uncertainty <= 0.25);
}

TEST_CASE("run_ensemble chunking does not change results") {
    TempDir dir;
    const Dims dims{32, 32, 64};
    std::vector<PredictionSource> sources;
    for (int m = 0; m < 3; ++m) {
        const fs::path path = dir / ("m" + std::to_string(m) + ".nii.gz");
        write_label_map(random_labels(dims, 4, 600 + static_cast<unsigned>(m)), path);
        PredictionSource src;
        src.member_id = "m" + std::to_string(m);
        src.path = path;
        sources.push_back(src);
    }

    EnsembleOptions one_chunk;
    one_chunk.num_classes = 4;
    one_chunk.threads = 1;

    EnsembleOptions many_chunks = one_chunk;
    many_chunks.memory_budget_mb = 1; // floor: forces chunk_z = 1
    many_chunks.threads = 4;

    const EnsembleResult a = run_ensemble(sources, one_chunk);
    const EnsembleResult b = run_ensemble(sources, many_chunks);
    CHECK(labels_equal(a.fused, b.fused));
    for (std::int64_t v = 0; v < dims.voxel_count(); ++v)
        REQUIRE(a.uncertainty.value(v) == b.uncertainty.value(v));
    CHECK(a.report.mean_uncertainty == b.report.mean_uncertainty);
}

TEST_CASE("scan reports round-trip through JSON") {
    ScanReport report;
    report.scan_id = "case-7";
    report.ensemble_size = 6;
    report.mean_uncertainty = 0.0123456789;
    report.num_voxels = 123456;
    report.num_classes = 126;
    report.fused_prediction_path = "out/fused.nii.gz";

    const ScanReport back = parse_scan_report_json(scan_report_to_json(report));
    CHECK(back.scan_id == report.scan_id);
    CHECK(back.ensemble_size == report.ensemble_size);
    CHECK(back.mean_uncertainty == report.mean_uncertainty);
    CHECK(back.num_voxels == report.num_voxels);
    CHECK(back.num_classes == report.num_classes);
    CHECK(back.fused_prediction_path == report.fused_prediction_path);
}

} // TEST_SUITE
