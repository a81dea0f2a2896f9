#include <benchmark/benchmark.h>

#include <vector>

#include "voxfuse/ensemble.hpp"
#include "voxfuse/rng.hpp"

using namespace voxfuse;

namespace {

GridMeta meta_for(std::int64_t n) {
    GridMeta meta;
    meta.dims = {n, n, n};
    return meta;
}

LabelMap random_member(std::int64_t n, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int32_t> data(static_cast<std::size_t>(n * n * n));
    for (auto& v : data)
        v = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint32_t>(num_classes)));
    return LabelMap(Volume<std::int32_t>(meta_for(n), ElementKind::label, std::move(data)),
                    num_classes);
}

} // namespace

static void BM_WelfordAccumulate(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const int L = static_cast<int>(state.range(1));
    const ProbabilityMap member = ProbabilityMap::onehot(random_member(n, L, 1));
    for (auto _ : state) {
        VarianceAccumulator acc(meta_for(n), L);
        for (int m = 0; m < 6; ++m) acc.accumulate(member);
        benchmark::DoNotOptimize(acc.members_seen());
    }
    state.SetItemsProcessed(state.iterations() * 6 * n * n * n * L);
}
BENCHMARK(BM_WelfordAccumulate)->Args({32, 5})->Args({64, 5})->Args({64, 20});

static void BM_VoteTally(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const int L = static_cast<int>(state.range(1));
    std::vector<LabelMap> members;
    for (int m = 0; m < 6; ++m)
        members.push_back(random_member(n, L, 10 + static_cast<std::uint64_t>(m)));
    for (auto _ : state) {
        VoteTable votes(meta_for(n), L);
        for (const auto& m : members) votes.add_member(m);
        const UncertaintyMap unc = onehot_uncertainty(votes);
        benchmark::DoNotOptimize(unc.value(0));
    }
    state.SetItemsProcessed(state.iterations() * 6 * n * n * n);
}
BENCHMARK(BM_VoteTally)->Args({32, 5})->Args({64, 5})->Args({64, 126});

static void BM_FuseMajority(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    std::vector<LabelMap> members;
    for (int m = 0; m < 6; ++m)
        members.push_back(random_member(n, 5, 20 + static_cast<std::uint64_t>(m)));
    for (auto _ : state) {
        const LabelMap fused = fuse_majority(members);
        benchmark::DoNotOptimize(fused.at(0, 0, 0));
    }
    state.SetItemsProcessed(state.iterations() * 6 * n * n * n);
}
BENCHMARK(BM_FuseMajority)->Arg(32)->Arg(64);

static void BM_MeanUncertainty(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    VoteTable votes(meta_for(n), 5);
    for (int m = 0; m < 6; ++m) votes.add_member(random_member(n, 5, 30 + static_cast<std::uint64_t>(m)));
    const UncertaintyMap unc = onehot_uncertainty(votes);
    for (auto _ : state) benchmark::DoNotOptimize(mean_uncertainty(unc));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MeanUncertainty)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
