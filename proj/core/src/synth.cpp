#include "voxfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "voxfuse/ensemble.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/parallel.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/selection.hpp"

namespace voxfuse {

namespace {

void validate_phantom_spec(const PhantomSpec& spec) {
    if (spec.dims.nx < 8 || spec.dims.ny < 8 || spec.dims.nz < 8)
        fail(ErrorCode::invalid_spec, "phantom dims must be at least 8 per axis");
    if (spec.num_classes < 2) fail(ErrorCode::invalid_spec, "phantom needs at least 2 classes");
}

bool all_classes_present(std::span<const std::int32_t> values, int num_classes) {
    std::vector<char> seen(static_cast<std::size_t>(num_classes), 0);
    int remaining = num_classes;
    for (std::int32_t v : values) {
        if (!seen[static_cast<std::size_t>(v)]) {
            seen[static_cast<std::size_t>(v)] = 1;
            if (--remaining == 0) return true;
        }
    }
    return false;
}

std::vector<std::int32_t> nested_spheres(const PhantomSpec& spec, std::uint64_t attempt_seed) {
    const Dims& d = spec.dims;
    Rng rng(attempt_seed);
    const Vec3 center{0.5 * static_cast<double>(d.nx - 1) + (rng.next_unit() - 0.5),
                      0.5 * static_cast<double>(d.ny - 1) + (rng.next_unit() - 0.5),
                      0.5 * static_cast<double>(d.nz - 1) + (rng.next_unit() - 0.5)};
    const double radius = 0.45 * static_cast<double>(std::min({d.nx, d.ny, d.nz}));
    const int shells = spec.num_classes - 1;
    const double band = radius / static_cast<double>(shells);

    std::vector<std::int32_t> data(static_cast<std::size_t>(d.voxel_count()), 0);
    std::size_t i = 0;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x, ++i) {
                const double dx = static_cast<double>(x) - center.x;
                const double dy = static_cast<double>(y) - center.y;
                const double dz = static_cast<double>(z) - center.z;
                const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
                if (r < radius)
                    data[i] = 1 + std::min<std::int32_t>(
                                      static_cast<std::int32_t>(r / band), shells - 1);
            }
    return data;
}

std::vector<std::int32_t> random_blobs(const PhantomSpec& spec, std::uint64_t attempt_seed) {
    const Dims& d = spec.dims;
    Rng rng(attempt_seed);
    const int L = spec.num_classes;

    // one seed voxel per class; each seed keeps its own class, so every class
    // is guaranteed to be present
    std::vector<Vec3> centers;
    std::vector<std::int64_t> taken;
    centers.reserve(static_cast<std::size_t>(L));
    while (static_cast<int>(centers.size()) < L) {
        const std::int64_t x = rng.next_in(0, d.nx - 1);
        const std::int64_t y = rng.next_in(0, d.ny - 1);
        const std::int64_t z = rng.next_in(0, d.nz - 1);
        const std::int64_t flat = x + d.nx * (y + d.ny * z);
        if (std::find(taken.begin(), taken.end(), flat) != taken.end()) continue;
        taken.push_back(flat);
        centers.push_back({static_cast<double>(x), static_cast<double>(y),
                           static_cast<double>(z)});
    }

    std::vector<std::int32_t> data(static_cast<std::size_t>(d.voxel_count()), 0);
    std::size_t i = 0;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x, ++i) {
                double best = std::numeric_limits<double>::infinity();
                std::int32_t best_label = 0;
                for (int l = 0; l < L; ++l) {
                    const double dx = static_cast<double>(x) - centers[static_cast<std::size_t>(l)].x;
                    const double dy = static_cast<double>(y) - centers[static_cast<std::size_t>(l)].y;
                    const double dz = static_cast<double>(z) - centers[static_cast<std::size_t>(l)].z;
                    const double dist = dx * dx + dy * dy + dz * dz;
                    if (dist < best) { // strict: ties stay with the lower class
                        best = dist;
                        best_label = l;
                    }
                }
                data[i] = best_label;
            }
    return data;
}

} // namespace

LabelMap make_phantom(const PhantomSpec& spec) {
    validate_phantom_spec(spec);

    if (spec.structure == PhantomStructure::nested_spheres) {
        const double radius = 0.45 * static_cast<double>(
                                         std::min({spec.dims.nx, spec.dims.ny, spec.dims.nz}));
        if (static_cast<double>(spec.num_classes - 1) > radius)
            fail(ErrorCode::invalid_spec,
                 "num_classes too large for dims: shells would be thinner than one voxel");
    } else if (spec.num_classes > spec.dims.voxel_count()) {
        fail(ErrorCode::invalid_spec, "num_classes exceeds the voxel count");
    }

    GridMeta meta;
    meta.dims = spec.dims;

    constexpr int kMaxAttempts = 16;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const std::uint64_t attempt_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(attempt));
        std::vector<std::int32_t> data = spec.structure == PhantomStructure::nested_spheres
                                             ? nested_spheres(spec, attempt_seed)
                                             : random_blobs(spec, attempt_seed);
        if (all_classes_present(data, spec.num_classes))
            return LabelMap(Volume<std::int32_t>(meta, ElementKind::label, std::move(data)),
                            spec.num_classes);
    }
    fail(ErrorCode::invalid_spec, "could not fit every class into the phantom dims");
}

LabelMap perturb(const LabelMap& gt, const NoiseSpec& noise) {
    if (noise.boundary_flip_prob < 0.0 || noise.boundary_flip_prob > 1.0 ||
        noise.global_flip_prob < 0.0 || noise.global_flip_prob > 1.0)
        fail(ErrorCode::invalid_spec, "flip probabilities must lie in [0, 1]");

    const Dims& d = gt.dims();
    const int L = gt.num_classes();
    std::vector<std::int32_t> out(gt.values().begin(), gt.values().end());
    if (noise.boundary_flip_prob == 0.0 && noise.global_flip_prob == 0.0)
        return LabelMap(Volume<std::int32_t>(gt.meta(), ElementKind::label, std::move(out)), L);

    Rng rng(mix_seed(noise.seed, 0));

    if (noise.boundary_flip_prob > 0.0) {
        const auto src = gt.values();
        std::size_t i = 0;
        for (std::int64_t z = 0; z < d.nz; ++z)
            for (std::int64_t y = 0; y < d.ny; ++y)
                for (std::int64_t x = 0; x < d.nx; ++x, ++i) {
                    const std::int32_t own = src[i];
                    std::array<std::int32_t, 6> differing{};
                    int n_diff = 0;
                    const auto consider = [&](std::int64_t nxi, std::int64_t nyi,
                                              std::int64_t nzi) {
                        if (nxi < 0 || nxi >= d.nx || nyi < 0 || nyi >= d.ny || nzi < 0 ||
                            nzi >= d.nz)
                            return;
                        const std::int32_t lab = src[static_cast<std::size_t>(
                            nxi + d.nx * (nyi + d.ny * nzi))];
                        if (lab != own) differing[static_cast<std::size_t>(n_diff++)] = lab;
                    };
                    consider(x - 1, y, z);
                    consider(x + 1, y, z);
                    consider(x, y - 1, z);
                    consider(x, y + 1, z);
                    consider(x, y, z - 1);
                    consider(x, y, z + 1);
                    if (n_diff == 0) continue; // not boundary-adjacent
                    if (rng.next_unit() < noise.boundary_flip_prob)
                        out[i] = differing[rng.next_below(static_cast<std::uint32_t>(n_diff))];
                }
    }

    if (noise.global_flip_prob > 0.0) {
        for (auto& v : out)
            if (rng.next_unit() < noise.global_flip_prob)
                v = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint32_t>(L)));
    }

    return LabelMap(Volume<std::int32_t>(gt.meta(), ElementKind::label, std::move(out)), L);
}

std::vector<NoiseSpec> make_noise_grid(int count, double eps_lo, double eps_hi, double beta) {
    if (count < 1) fail(ErrorCode::invalid_spec, "noise grid needs at least one level");
    if (eps_lo < 0.0 || eps_hi < eps_lo || eps_hi > 1.0 || beta < 0.0 || beta > 1.0)
        fail(ErrorCode::invalid_spec, "noise grid bounds must satisfy 0 <= lo <= hi <= 1");

    std::vector<NoiseSpec> grid;
    grid.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        double eps;
        if (count == 1) {
            eps = eps_lo;
        } else if (eps_lo > 0.0) {
            const double t = static_cast<double>(i) / static_cast<double>(count - 1);
            eps = eps_lo * std::pow(eps_hi / eps_lo, t);
        } else {
            const double t = static_cast<double>(i) / static_cast<double>(count - 1);
            eps = eps_lo + t * (eps_hi - eps_lo);
        }
        grid.push_back(NoiseSpec{beta, eps, 0});
    }
    return grid;
}

EffortExperiment run_effort_experiment(const EffortExperimentConfig& config) {
    if (config.num_scans < 10)
        fail(ErrorCode::invalid_spec, "experiment needs at least 10 scans");
    if (config.noise_grid.empty()) fail(ErrorCode::invalid_spec, "noise grid is empty");
    if (config.members_per_scan < 1)
        fail(ErrorCode::invalid_spec, "experiment needs at least 1 member per scan");

    EffortExperiment experiment;
    experiment.members_per_scan = config.members_per_scan;
    experiment.scans.resize(static_cast<std::size_t>(config.num_scans));

    parallel_for(config.num_scans, config.threads, [&](std::int64_t i) {
        PhantomSpec phantom_spec;
        phantom_spec.dims = config.dims;
        phantom_spec.num_classes = config.num_classes;
        phantom_spec.structure = config.structure;
        phantom_spec.seed = mix_seed(config.seed, 0x70000000ULL + static_cast<std::uint64_t>(i));
        const LabelMap gt = make_phantom(phantom_spec);

        NoiseSpec noise = config.noise_grid[static_cast<std::size_t>(i) % config.noise_grid.size()];

        // per-member seeds keep members disagreeing; identical members would
        // degenerate the uncertainty to zero
        std::vector<LabelMap> members;
        members.reserve(static_cast<std::size_t>(config.members_per_scan));
        VoteTable votes(gt.meta(), config.num_classes);
        for (int j = 0; j < config.members_per_scan; ++j) {
            NoiseSpec member_noise = noise;
            member_noise.seed = mix_seed(config.seed, (static_cast<std::uint64_t>(i) << 20) ^
                                                          static_cast<std::uint64_t>(j + 1));
            members.push_back(perturb(gt, member_noise));
            votes.add_member(members.back());
        }

        const LabelMap fused = fuse_majority(members);
        const UncertaintyMap unc = onehot_uncertainty(votes);
        const CorrectionReport correction =
            correction_effort(fused, gt, DenominatorKind::total_volume);

        EffortScanRecord record;
        char name[32];
        std::snprintf(name, sizeof(name), "scan_%03d", static_cast<int>(i));
        record.scan_id = name;
        record.noise = noise;
        record.mean_uncertainty = mean_uncertainty(unc);
        record.differing_voxels = correction.differing_voxels;
        record.percentage = correction.percentage;
        experiment.scans[static_cast<std::size_t>(i)] = std::move(record);
    });

    std::vector<double> xs, ys;
    xs.reserve(experiment.scans.size());
    ys.reserve(experiment.scans.size());
    for (const auto& scan : experiment.scans) {
        xs.push_back(scan.mean_uncertainty);
        ys.push_back(scan.percentage);
    }
    try {
        experiment.pearson = pearson(xs, ys);
        experiment.spearman = spearman(xs, ys);
        experiment.correlation_defined = true;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::undefined_correlation) throw;
        experiment.correlation_defined = false;
    }
    return experiment;
}

std::string experiment_to_json(const EffortExperiment& experiment) {
    nlohmann::json j;
    j["members_per_scan"] = experiment.members_per_scan;

    nlohmann::json scans = nlohmann::json::array();
    for (const auto& s : experiment.scans) {
        nlohmann::json e;
        e["scan_id"] = s.scan_id;
        e["noise"] = {{"boundary_flip_prob", s.noise.boundary_flip_prob},
                      {"global_flip_prob", s.noise.global_flip_prob}};
        e["mean_uncertainty"] = s.mean_uncertainty;
        e["differing_voxels"] = s.differing_voxels;
        e["percentage"] = s.percentage;
        scans.push_back(std::move(e));
    }
    j["scans"] = std::move(scans);

    nlohmann::json summary;
    summary["n"] = experiment.scans.size();
    summary["correlation_defined"] = experiment.correlation_defined;
    summary["pearson"] =
        experiment.pearson ? nlohmann::json(*experiment.pearson) : nlohmann::json(nullptr);
    summary["spearman"] =
        experiment.spearman ? nlohmann::json(*experiment.spearman) : nlohmann::json(nullptr);
    j["summary"] = std::move(summary);
    return j.dump(2);
}

std::string experiment_to_csv(const EffortExperiment& experiment) {
    std::ostringstream out;
    out << "scan_id,boundary_flip_prob,global_flip_prob,mean_uncertainty,differing_voxels,"
           "percentage\n";
    for (const auto& s : experiment.scans)
        out << s.scan_id << ',' << s.noise.boundary_flip_prob << ',' << s.noise.global_flip_prob
            << ',' << s.mean_uncertainty << ',' << s.differing_voxels << ',' << s.percentage
            << '\n';
    return out.str();
}

} // namespace voxfuse
