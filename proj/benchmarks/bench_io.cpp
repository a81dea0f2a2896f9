#include <benchmark/benchmark.h>

#include <filesystem>

#include "voxfuse/nifti.hpp"
#include "voxfuse/resample.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/transform.hpp"

using namespace voxfuse;

namespace {

VoxelGrid random_volume(std::int64_t n, std::uint64_t seed) {
    Rng rng(seed);
    GridMeta meta;
    meta.dims = {n, n, n};
    std::vector<float> data(static_cast<std::size_t>(n * n * n));
    for (auto& v : data) v = static_cast<float>(rng.next_unit());
    return VoxelGrid(meta, ElementKind::intensity, std::move(data));
}

std::filesystem::path bench_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

static void BM_NiftiWriteRead(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const bool gz = state.range(1) != 0;
    const VoxelGrid grid = random_volume(n, 7);
    const auto path = bench_path(gz ? "voxfuse-bench.nii.gz" : "voxfuse-bench.nii");
    for (auto _ : state) {
        write_volume(grid, path);
        const VoxelGrid back = read_volume(path);
        benchmark::DoNotOptimize(back.at(0, 0, 0));
    }
    std::filesystem::remove(path);
    state.SetBytesProcessed(state.iterations() * n * n * n * 4 * 2);
}
BENCHMARK(BM_NiftiWriteRead)->Args({64, 0})->Args({64, 1})->Args({128, 0});

static void BM_TrilinearResample(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const VoxelGrid grid = random_volume(n, 9);
    for (auto _ : state) {
        const VoxelGrid out = resample(grid, {2.0, 2.0, 2.0}, Interp::trilinear);
        benchmark::DoNotOptimize(out.at(0, 0, 0));
    }
    state.SetItemsProcessed(state.iterations() * (n / 2) * (n / 2) * (n / 2));
}
BENCHMARK(BM_TrilinearResample)->Arg(64)->Arg(128);

static void BM_AffineApply(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const VoxelGrid grid = random_volume(n, 11);
    Mat3 rot = Mat3::identity();
    rot.m = {{{0.995, -0.0998, 0.0}, {0.0998, 0.995, 0.0}, {0.0, 0.0, 1.0}}};
    const TransformSpec spec = TransformSpec::make_affine(rot, {1.0, -2.0, 0.5});
    for (auto _ : state) {
        const VoxelGrid out = apply(spec, grid, Interp::trilinear);
        benchmark::DoNotOptimize(out.at(0, 0, 0));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_AffineApply)->Arg(64)->Arg(128);
