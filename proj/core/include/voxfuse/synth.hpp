#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxfuse/volume.hpp"

namespace voxfuse {

enum class PhantomStructure { nested_spheres, random_blobs };

struct PhantomSpec {
    Dims dims{32, 32, 32};
    int num_classes = 3;
    PhantomStructure structure = PhantomStructure::nested_spheres;
    std::uint64_t seed = 0;
};

// Deterministic for a fixed spec; every class occupies at least one voxel.
// invalid-spec when num_classes cannot fit into dims.
LabelMap make_phantom(const PhantomSpec& spec);

// Surrogate for model error: boundary flips concentrate disagreement where
// predictors disagree in practice, global flips add diffuse noise.
struct NoiseSpec {
    double boundary_flip_prob = 0.0; // boundary-adjacent voxel swaps to a neighboring class
    double global_flip_prob = 0.0;   // any voxel swaps to a uniformly random class
    std::uint64_t seed = 0;
};

// Deterministic per seed; identity when both probabilities are zero.
LabelMap perturb(const LabelMap& gt, const NoiseSpec& noise);

struct EffortScanRecord {
    std::string scan_id;
    NoiseSpec noise;
    double mean_uncertainty = 0.0;
    std::int64_t differing_voxels = 0;
    double percentage = 0.0; // of total volume
};

struct EffortExperiment {
    std::vector<EffortScanRecord> scans;
    bool correlation_defined = false;
    std::optional<double> pearson;
    std::optional<double> spearman;
    int members_per_scan = 0;
};

struct EffortExperimentConfig {
    int num_scans = 20;                // >= 10
    std::vector<NoiseSpec> noise_grid; // cycled across scans; per-spec seeds are ignored
    int members_per_scan = 6;
    std::uint64_t seed = 0;
    Dims dims{64, 64, 64};
    int num_classes = 5;
    PhantomStructure structure = PhantomStructure::nested_spheres;
    int threads = 0;
};

// For each synthetic scan: a phantom ground truth, N independently perturbed
// members, majority fusion, the scalar ensemble uncertainty, and the count of
// voxels that would need manual correction against the phantom. Correlations
// across scans are flagged undefined (not an error) when degenerate.
EffortExperiment run_effort_experiment(const EffortExperimentConfig& config);

std::string experiment_to_json(const EffortExperiment& experiment);
std::string experiment_to_csv(const EffortExperiment& experiment);

// Log-spaced global-flip grid over [eps_lo, eps_hi] with a fixed boundary
// flip probability.
std::vector<NoiseSpec> make_noise_grid(int count, double eps_lo, double eps_hi, double beta);

} // namespace voxfuse
