// voxfuse: fuse volumetric segmentation ensembles, quantify their per-voxel
// disagreement, score segmentation quality, and rank scans for annotation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voxfuse/ensemble.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/log.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/nifti.hpp"
#include "voxfuse/selection.hpp"
#include "voxfuse/synth.hpp"
#include "voxfuse/transform.hpp"

namespace fs = std::filesystem;
using namespace voxfuse;

namespace {

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::input_missing: return 2;
        case ErrorCode::incompatible_member:
        case ErrorCode::incompatible_volumes: return 3;
        case ErrorCode::invalid_spec: return 4;
        case ErrorCode::invalid_transform: return 5;
        default: return 1;
    }
}

std::string slurp(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorCode::input_missing, path.string() + ": no such file");
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, path.string() + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Outputs are written under temporary names and renamed once the whole
// command has succeeded, so a failing run never leaves partial outputs.
class OutputStager {
public:
    ~OutputStager() {
        std::error_code ec;
        for (const auto& [temp, final_path] : pending_) fs::remove(temp, ec);
    }

    fs::path stage(const fs::path& final_path) {
        fs::path temp = final_path.parent_path() / ("~" + final_path.filename().string());
        pending_.emplace_back(temp, final_path);
        return temp;
    }

    void write_text(const fs::path& final_path, const std::string& text) {
        const fs::path temp = stage(final_path);
        std::ofstream out(temp, std::ios::binary);
        if (!out) fail(ErrorCode::io_error, temp.string() + ": cannot open for writing");
        out << text;
        out.close();
        if (!out) fail(ErrorCode::io_error, temp.string() + ": write failed");
    }

    void commit() {
        for (const auto& [temp, final_path] : pending_) fs::rename(temp, final_path);
        pending_.clear();
    }

private:
    std::vector<std::pair<fs::path, fs::path>> pending_;
};

void ensure_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        fail(ErrorCode::io_error, dir.string() + ": cannot create output directory");
}

// ----------------------------------------------------------------------------

struct FuseArgs {
    std::string manifest;
    std::string output_dir;
    int num_classes = 0;
    std::string scan_id;
    std::string fusion = "majority";
    bool exclude_background = false;
    bool sample_variance = false;
    std::string label_transport = "nearest";
    std::string mask;
    int threads = 0;
    std::int64_t memory_budget_mb = 512;
};

int cmd_fuse(const FuseArgs& args) {
    Manifest manifest = parse_manifest_json(slurp(args.manifest));
    // member paths are relative to the manifest unless absolute
    const fs::path base = fs::path(args.manifest).parent_path();
    for (auto& src : manifest.sources)
        if (src.path.is_relative()) src.path = base / src.path;

    EnsembleOptions options;
    options.num_classes = args.num_classes > 0 ? args.num_classes
                                               : manifest.num_classes.value_or(0);
    if (options.num_classes < 2)
        fail(ErrorCode::invalid_spec,
             "--num-classes is required (or a num_classes field in the manifest)");
    options.scan_id = !args.scan_id.empty()
                          ? args.scan_id
                          : manifest.scan_id.value_or(fs::path(args.manifest).stem().string());
    options.fusion =
        args.fusion == "mean-prob" ? FusionMode::mean_probability : FusionMode::majority;
    options.exclude_background = args.exclude_background;
    options.variance = args.sample_variance ? VarianceKind::sample : VarianceKind::population;
    options.label_mode = args.label_transport == "onehot-argmax" ? LabelTransformMode::onehot_argmax
                                                                 : LabelTransformMode::nearest;
    options.threads = args.threads;
    options.memory_budget_mb = args.memory_budget_mb;

    std::optional<VoxelGrid> mask;
    if (!args.mask.empty()) {
        mask = read_volume(args.mask);
        options.mask = &*mask;
    }

    EnsembleResult result = run_ensemble(manifest.sources, options);

    const fs::path out_dir(args.output_dir);
    ensure_output_dir(out_dir);
    OutputStager stager;
    const fs::path fused_path = out_dir / "fused.nii.gz";
    const fs::path unc_path = out_dir / "uncertainty.nii.gz";
    const fs::path report_path = out_dir / "report.json";

    write_label_map(result.fused, stager.stage(fused_path));
    write_volume(result.uncertainty.to_grid(), stager.stage(unc_path));
    result.report.fused_prediction_path = fused_path.string();
    stager.write_text(report_path, scan_report_to_json(result.report) + "\n");
    stager.commit();

    log::info("scan " + result.report.scan_id + ": mean uncertainty " +
              std::to_string(result.report.mean_uncertainty) + " over " +
              std::to_string(result.report.ensemble_size) + " members");
    return 0;
}

// ----------------------------------------------------------------------------

struct MetricsArgs {
    std::string pred;
    std::string gt;
    std::string output_dir;
    int num_classes = 0;
    std::string scan_id;
    std::string groups_file;
    std::string denominator = "total";
    bool csv = false;
};

int cmd_metrics(const MetricsArgs& args) {
    const LabelMap pred = read_label_map(args.pred, args.num_classes);
    const LabelMap gt = read_label_map(args.gt, args.num_classes);

    MetricsResult result;
    result.dsc = dsc_per_class(pred, gt);
    result.dsc.scan_id = args.scan_id;

    LabelGroups groups;
    if (!args.groups_file.empty()) groups = parse_label_groups_json(slurp(args.groups_file));
    // implicit group over every non-background class
    if (groups.find("all") == groups.end()) {
        std::vector<int>& all = groups["all"];
        for (int c = 1; c < args.num_classes; ++c) all.push_back(c);
    }

    for (const auto& [name, labels] : groups) {
        try {
            result.groups.push_back(group_summary(result.dsc, name, labels));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::empty_domain) throw;
            log::warn("group '" + name + "' skipped: no classes present in either volume");
        }
    }

    result.correction = correction_effort(pred, gt,
                                          args.denominator == "gt-foreground"
                                              ? DenominatorKind::gt_foreground
                                              : DenominatorKind::total_volume);
    result.correction.scan_id = args.scan_id;

    const fs::path out_dir(args.output_dir);
    ensure_output_dir(out_dir);
    OutputStager stager;
    stager.write_text(out_dir / "metrics.json", metrics_to_json(result) + "\n");
    if (args.csv) stager.write_text(out_dir / "metrics.csv", metrics_to_csv(result));
    stager.commit();

    for (const GroupSummary& s : result.groups)
        log::info(s.name + ": " + format_group_summary(s));
    return 0;
}

// ----------------------------------------------------------------------------

struct RankArgs {
    std::string reports;
    std::string output_dir;
    std::string mode = "lowest";
    std::int64_t budget = -1;
    double cost_cap = 0.0;
};

int cmd_rank(const RankArgs& args) {
    const std::vector<CandidateScan> candidates = load_candidates(args.reports);

    SelectionPolicy policy;
    policy.mode = args.mode == "highest" ? SelectionMode::highest_uncertainty
                                         : SelectionMode::lowest_uncertainty;
    if (args.budget >= 0) policy.budget_scans = args.budget;
    if (args.cost_cap > 0.0) policy.cost_cap = args.cost_cap;

    const std::vector<RankedScan> ranking = rank_and_select(candidates, policy);

    const fs::path out_dir(args.output_dir);
    ensure_output_dir(out_dir);
    OutputStager stager;
    stager.write_text(out_dir / "ranking.json", ranking_to_json(ranking) + "\n");

    // uncertainty vs correction-effort correlation, when the reports carry it
    std::vector<double> xs, ys;
    for (const auto& c : candidates) {
        if (c.correction_percentage) {
            xs.push_back(c.mean_uncertainty);
            ys.push_back(*c.correction_percentage);
        }
    }
    if (xs.size() >= 2) {
        std::string body;
        try {
            std::ostringstream json;
            json << "{\n  \"pearson\": " << pearson(xs, ys)
                 << ",\n  \"spearman\": " << spearman(xs, ys) << ",\n  \"n\": " << xs.size()
                 << ",\n  \"defined\": true\n}\n";
            body = json.str();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::undefined_correlation) throw;
            std::ostringstream json;
            json << "{\n  \"pearson\": null,\n  \"spearman\": null,\n  \"n\": " << xs.size()
                 << ",\n  \"defined\": false\n}\n";
            body = json.str();
        }
        stager.write_text(out_dir / "correlation.json", body);
    }
    stager.commit();
    return 0;
}

// ----------------------------------------------------------------------------

struct SynthArgs {
    std::string output_dir;
    int scans = 20;
    int members = 6;
    int classes = 5;
    std::vector<std::int64_t> dims{64, 64, 64};
    double eps_min = 0.01;
    double eps_max = 0.2;
    double beta = 0.0;
    std::string structure = "nested-spheres";
    std::uint64_t seed = 0;
    int threads = 0;
    bool csv = false;
};

int cmd_synth(const SynthArgs& args) {
    EffortExperimentConfig config;
    config.num_scans = args.scans;
    config.members_per_scan = args.members;
    config.num_classes = args.classes;
    if (args.dims.size() == 1)
        config.dims = {args.dims[0], args.dims[0], args.dims[0]};
    else if (args.dims.size() == 3)
        config.dims = {args.dims[0], args.dims[1], args.dims[2]};
    else
        fail(ErrorCode::invalid_spec, "--dims takes one or three values");
    config.structure = args.structure == "random-blobs" ? PhantomStructure::random_blobs
                                                        : PhantomStructure::nested_spheres;
    config.seed = args.seed;
    config.threads = args.threads;
    config.noise_grid = make_noise_grid(args.scans, args.eps_min, args.eps_max, args.beta);

    const EffortExperiment experiment = run_effort_experiment(config);

    const fs::path out_dir(args.output_dir);
    ensure_output_dir(out_dir);
    OutputStager stager;
    stager.write_text(out_dir / "experiment.json", experiment_to_json(experiment) + "\n");
    if (args.csv) stager.write_text(out_dir / "experiment.csv", experiment_to_csv(experiment));
    stager.commit();

    if (experiment.correlation_defined)
        log::info("spearman(uncertainty, correction%) = " + std::to_string(*experiment.spearman));
    else
        log::warn("correlation undefined (degenerate noise grid)");
    return 0;
}

// ----------------------------------------------------------------------------

struct TtaArgs {
    std::string transform;
    std::string input;
    std::string output;
    bool invert_spec = false;
    std::string interp = "trilinear";
    int num_classes = 0; // > 0 routes through the label path
    std::string label_transport = "nearest";
    std::int64_t fill_label = 0;
    double fill_intensity = -1024.0;
};

int cmd_tta(const TtaArgs& args) {
    std::string spec_text = args.transform;
    if (!spec_text.empty() && spec_text.front() != '{' && spec_text.front() != '[')
        spec_text = slurp(args.transform);
    TransformSpec spec = parse_transform_json(spec_text);
    spec.validate();
    if (args.invert_spec) spec = invert(spec);

    FillPolicy fill;
    fill.label_fill = static_cast<std::int32_t>(args.fill_label);
    fill.intensity_fill = static_cast<float>(args.fill_intensity);

    OutputStager stager;
    const fs::path out_path(args.output);
    if (!out_path.parent_path().empty()) ensure_output_dir(out_path.parent_path());

    if (args.num_classes > 0) {
        const LabelMap labels = read_label_map(args.input, args.num_classes);
        const LabelTransformMode mode = args.label_transport == "onehot-argmax"
                                            ? LabelTransformMode::onehot_argmax
                                            : LabelTransformMode::nearest;
        write_label_map(apply(spec, labels, fill, mode), stager.stage(out_path));
    } else {
        const VoxelGrid grid = read_volume(args.input);
        const Interp interp = args.interp == "nearest" ? Interp::nearest : Interp::trilinear;
        write_volume(apply(spec, grid, interp, fill), stager.stage(out_path));
    }
    stager.commit();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volumetric segmentation ensembles: fusion, uncertainty, metrics, scan ranking"};
    app.require_subcommand(1);

    std::string log_level = "warn";
    app.add_option("--log", log_level, "log level")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
        ->envname("VOXFUSE_LOG");

    FuseArgs fuse_args;
    CLI::App* fuse = app.add_subcommand(
        "fuse", "fuse ensemble member predictions and compute the uncertainty map");
    fuse->add_option("--manifest,--inputs", fuse_args.manifest, "ensemble manifest JSON")
        ->required();
    fuse->add_option("--output-dir", fuse_args.output_dir,
                     "directory for fused.nii.gz, uncertainty.nii.gz, report.json")
        ->required();
    fuse->add_option("--num-classes", fuse_args.num_classes, "label count including background");
    fuse->add_option("--scan-id", fuse_args.scan_id, "scan identifier for the report");
    fuse->add_option("--fusion", fuse_args.fusion, "fusion rule")
        ->check(CLI::IsMember({"majority", "mean-prob"}));
    fuse->add_flag("--exclude-background", fuse_args.exclude_background,
                   "drop label 0 from the uncertainty average");
    fuse->add_flag("--sample-variance", fuse_args.sample_variance,
                   "divide by N-1 instead of N");
    fuse->add_option("--label-transport", fuse_args.label_transport,
                     "label resampling under affine transforms")
        ->check(CLI::IsMember({"nearest", "onehot-argmax"}));
    fuse->add_option("--mask", fuse_args.mask, "restrict the report mean to this binary mask");
    fuse->add_option("--threads", fuse_args.threads, "worker threads (0 = all cores)")
        ->envname("VOXFUSE_THREADS");
    fuse->add_option("--memory-budget-mb", fuse_args.memory_budget_mb,
                     "resident accumulator budget")
        ->envname("VOXFUSE_MEMORY_BUDGET_MB");

    MetricsArgs metrics_args;
    CLI::App* metrics = app.add_subcommand(
        "metrics", "per-class overlap scores and correction effort against a reference");
    metrics->add_option("--pred", metrics_args.pred, "predicted label volume")->required();
    metrics->add_option("--gt", metrics_args.gt, "reference label volume")->required();
    metrics->add_option("--num-classes", metrics_args.num_classes, "label count")->required();
    metrics->add_option("--output-dir", metrics_args.output_dir, "directory for metrics.json")
        ->required();
    metrics->add_option("--scan-id", metrics_args.scan_id, "scan identifier");
    metrics->add_option("--groups", metrics_args.groups_file,
                        "label-group JSON file {name: [label ids]}");
    metrics->add_option("--denominator", metrics_args.denominator,
                        "correction-effort denominator")
        ->check(CLI::IsMember({"total", "gt-foreground"}));
    metrics->add_flag("--csv", metrics_args.csv, "also write metrics.csv");

    RankArgs rank_args;
    CLI::App* rank_cmd = app.add_subcommand(
        "rank", "order scan reports by mean uncertainty and select under a budget");
    rank_cmd->add_option("--reports", rank_args.reports,
                         "scan-report JSON file/array or directory of reports")
        ->required();
    rank_cmd->add_option("--output-dir", rank_args.output_dir, "directory for ranking.json")
        ->required();
    rank_cmd->add_option("--mode", rank_args.mode, "rank by lowest or highest uncertainty")
        ->check(CLI::IsMember({"lowest", "highest"}));
    rank_cmd->add_option("--budget", rank_args.budget, "select the first K scans");
    rank_cmd->add_option("--cost-cap", rank_args.cost_cap,
                         "select a prefix within this total annotation cost");

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand(
        "synth", "phantom experiment relating ensemble uncertainty to correction effort");
    synth->add_option("--output-dir", synth_args.output_dir, "directory for experiment.json")
        ->required();
    synth->add_option("--scans", synth_args.scans, "number of synthetic scans");
    synth->add_option("--members", synth_args.members, "ensemble members per scan");
    synth->add_option("--classes", synth_args.classes, "phantom classes incl. background");
    synth->add_option("--dims", synth_args.dims, "phantom dims (one value or three)")
        ->expected(1, 3);
    synth->add_option("--eps-min", synth_args.eps_min, "lowest global flip probability");
    synth->add_option("--eps-max", synth_args.eps_max, "highest global flip probability");
    synth->add_option("--beta", synth_args.beta, "boundary flip probability");
    synth->add_option("--structure", synth_args.structure, "phantom structure")
        ->check(CLI::IsMember({"nested-spheres", "random-blobs"}));
    synth->add_option("--seed", synth_args.seed, "experiment seed")->envname("VOXFUSE_SEED");
    synth->add_option("--threads", synth_args.threads, "worker threads (0 = all cores)")
        ->envname("VOXFUSE_THREADS");
    synth->add_flag("--csv", synth_args.csv, "also write experiment.csv");

    TtaArgs tta_args;
    CLI::App* tta = app.add_subcommand(
        "tta", "apply an invertible augmentation transform (or its inverse) to a volume");
    tta->add_option("--transform", tta_args.transform, "transform JSON (inline or a file path)")
        ->required();
    tta->add_option("--input", tta_args.input, "input volume")->required();
    tta->add_option("--output", tta_args.output, "output volume")->required();
    tta->add_flag("--invert", tta_args.invert_spec, "apply the inverse transform");
    tta->add_option("--interp", tta_args.interp, "interpolation for non-label volumes")
        ->check(CLI::IsMember({"nearest", "trilinear"}));
    tta->add_option("--num-classes", tta_args.num_classes,
                    "treat the input as a label map with this class count");
    tta->add_option("--label-transport", tta_args.label_transport,
                    "label resampling under affine transforms")
        ->check(CLI::IsMember({"nearest", "onehot-argmax"}));
    tta->add_option("--fill-label", tta_args.fill_label, "fill label for out-of-domain voxels");
    tta->add_option("--fill-intensity", tta_args.fill_intensity,
                    "fill value for out-of-domain intensity voxels");

    // global flags (--log) may appear after the subcommand name
    for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        log::set_level(log::parse_level(log_level));
        if (fuse->parsed()) return cmd_fuse(fuse_args);
        if (metrics->parsed()) return cmd_metrics(metrics_args);
        if (rank_cmd->parsed()) return cmd_rank(rank_args);
        if (synth->parsed()) return cmd_synth(synth_args);
        if (tta->parsed()) return cmd_tta(tta_args);
    } catch (const Error& e) {
        std::fprintf(stderr, "voxfuse: error (%s): %s\n", to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "voxfuse: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
