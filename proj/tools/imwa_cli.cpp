// Command-line driver: experiment runs, ablation sweeps, checkpoint
// inspection, dataset export. All randomness flows from config seeds; the
// results files are byte-stable across reruns.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imwa/checkpoint.hpp"
#include "imwa/config.hpp"
#include "imwa/errors.hpp"
#include "imwa/harness.hpp"
#include "imwa/results_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::string> config_path;

    std::optional<std::string> source;
    std::optional<std::size_t> num_classes;
    std::optional<std::size_t> head_count;
    std::optional<double> imbalance_ratio;
    std::optional<std::size_t> feature_dim;
    std::optional<double> class_sep;
    std::optional<std::size_t> test_per_class;
    std::optional<std::string> csv_path;
    std::optional<int> label_column;
    std::optional<double> test_fraction;

    std::vector<std::uint32_t> layers;

    std::optional<std::size_t> iterations;
    std::optional<std::size_t> episodes;
    std::optional<std::size_t> models;
    std::optional<double> ema_lambda;
    std::optional<bool> use_ema;
    std::optional<bool> carry_momentum;

    std::optional<double> learning_rate;
    std::optional<double> momentum;
    std::optional<std::size_t> batch_size;

    std::vector<std::string> arms;
    std::vector<std::uint64_t> seeds;
    std::optional<bool> concurrent;

    std::optional<std::string> out_dir;
    bool force = false;
    std::optional<bool> checkpoints;
};

void add_common_options(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "JSON config file (flags override it)");

    cmd->add_option("--source", ov.source, "dataset source: gaussian or csv");
    cmd->add_option("--num-classes", ov.num_classes, "number of classes C");
    cmd->add_option("--head-count", ov.head_count, "head class sample count n1");
    cmd->add_option("--imbalance-ratio", ov.imbalance_ratio, "imbalance ratio gamma = n1/nC");
    cmd->add_option("--feature-dim", ov.feature_dim, "feature dimension d");
    cmd->add_option("--class-sep", ov.class_sep, "minimum distance between class means");
    cmd->add_option("--test-per-class", ov.test_per_class, "balanced test samples per class");
    cmd->add_option("--csv", ov.csv_path, "CSV dataset path (sets source=csv)");
    cmd->add_option("--label-column", ov.label_column,
                    "label column index, negative counts from the end");
    cmd->add_option("--test-fraction", ov.test_fraction, "held-out fraction for CSV datasets");

    cmd->add_option("--layers", ov.layers, "layer widths, e.g. 16,64,10")->delimiter(',');

    cmd->add_option("--iterations", ov.iterations, "total training iterations T per model");
    cmd->add_option("--episodes", ov.episodes, "number of episodes E");
    cmd->add_option("--num-models", ov.models, "number of models M per episode");
    cmd->add_option("--ema-lambda", ov.ema_lambda, "EMA decay coefficient");
    cmd->add_option("--use-ema", ov.use_ema, "maintain and average EMA shadows");
    cmd->add_option("--carry-momentum", ov.carry_momentum,
                    "average optimizer velocity across episode boundaries");

    cmd->add_option("--learning-rate", ov.learning_rate, "SGD learning rate");
    cmd->add_option("--momentum", ov.momentum, "SGD momentum in [0,1)");
    cmd->add_option("--batch-size", ov.batch_size, "minibatch size");

    cmd->add_option("--arms", ov.arms,
                    "experiment arms (baseline, baseline-2x, ema, vanilla-mwa, imwa, "
                    "imwa-ema, probe)")
        ->delimiter(',');
    cmd->add_option("--seeds", ov.seeds, "replication seeds, e.g. 0,1,2")->delimiter(',');
    cmd->add_option("--concurrent", ov.concurrent, "train the M models of an episode in parallel");

    cmd->add_option("--out", ov.out_dir, "output directory");
    cmd->add_flag("--force", ov.force, "allow writing into a non-empty output directory");
    cmd->add_option("--write-checkpoints", ov.checkpoints, "write final checkpoints");
}

imwa::RunConfig resolve_config(const Overrides& ov) {
    imwa::RunConfig cfg;
    if (ov.config_path.has_value()) {
        cfg = imwa::load_config_file(*ov.config_path);
    }
    if (ov.source) cfg.dataset.source = *ov.source;
    if (ov.num_classes) cfg.dataset.num_classes = *ov.num_classes;
    if (ov.head_count) cfg.dataset.head_count = *ov.head_count;
    if (ov.imbalance_ratio) cfg.dataset.imbalance_ratio = *ov.imbalance_ratio;
    if (ov.feature_dim) cfg.dataset.feature_dim = *ov.feature_dim;
    if (ov.class_sep) cfg.dataset.class_sep = *ov.class_sep;
    if (ov.test_per_class) cfg.dataset.test_per_class = *ov.test_per_class;
    if (ov.csv_path) {
        cfg.dataset.csv_path = *ov.csv_path;
        cfg.dataset.source = "csv";
    }
    if (ov.label_column) cfg.dataset.label_column = *ov.label_column;
    if (ov.test_fraction) cfg.dataset.test_fraction = *ov.test_fraction;
    if (!ov.layers.empty()) cfg.model.layers = ov.layers;
    if (ov.iterations) cfg.schedule.iterations = *ov.iterations;
    if (ov.episodes) cfg.schedule.episodes = *ov.episodes;
    if (ov.models) cfg.schedule.models = *ov.models;
    if (ov.ema_lambda) cfg.schedule.ema_lambda = *ov.ema_lambda;
    if (ov.use_ema) cfg.schedule.use_ema = *ov.use_ema;
    if (ov.carry_momentum) cfg.schedule.carry_momentum = *ov.carry_momentum;
    if (ov.learning_rate) cfg.trainer.learning_rate = *ov.learning_rate;
    if (ov.momentum) cfg.trainer.momentum = *ov.momentum;
    if (ov.batch_size) cfg.trainer.batch_size = *ov.batch_size;
    if (!ov.arms.empty()) cfg.experiment.arms = ov.arms;
    if (!ov.seeds.empty()) cfg.experiment.seeds = ov.seeds;
    if (ov.concurrent) cfg.experiment.concurrent = *ov.concurrent;
    if (ov.out_dir) cfg.output.directory = *ov.out_dir;
    if (ov.force) cfg.output.force = true;
    if (ov.checkpoints) cfg.output.checkpoints = *ov.checkpoints;
    return cfg;
}

// Refuses to write into an existing non-empty directory without --force.
void prepare_output_dir(const imwa::RunConfig& cfg) {
    const fs::path dir(cfg.output.directory);
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw imwa::ConfigError("output.directory: '" + cfg.output.directory +
                                "' exists and is not a directory");
    }
    if (fs::exists(dir) && !fs::is_empty(dir) && !cfg.output.force) {
        throw imwa::ConfigError("output.directory: '" + cfg.output.directory +
                                "' is not empty; pass --force to overwrite");
    }
    fs::create_directories(dir / "results");
    fs::create_directories(dir / "checkpoints");
    fs::create_directories(dir / "logs");
}

std::string run_file_stem(const imwa::RunResult& rr) {
    return rr.arm + "-s" + std::to_string(rr.seed);
}

void write_run_outputs(const imwa::RunConfig& cfg, const std::vector<imwa::ArmSpec>& arms,
                       const std::vector<imwa::RunResult>& results) {
    const fs::path dir(cfg.output.directory);
    imwa::write_results((dir / "results" / "results.jsonl").string(), arms, results);
    for (const auto& rr : results) {
        if (!rr.ok()) {
            continue;
        }
        imwa::write_episode_log((dir / "logs" / (run_file_stem(rr) + ".jsonl")).string(), rr);
        if (cfg.output.checkpoints) {
            imwa::save_checkpoint(
                rr.final_student,
                (dir / "checkpoints" / (run_file_stem(rr) + ".student.ckpt")).string());
            if (rr.final_ema.has_value()) {
                imwa::save_checkpoint(
                    *rr.final_ema,
                    (dir / "checkpoints" / (run_file_stem(rr) + ".ema.ckpt")).string());
            }
        }
    }
    const fs::path series = dir / "results" / "series.jsonl";
    fs::remove(series);
    for (const auto& arm : arms) {
        imwa::append_series(series.string(), "accuracy_vs_episode", arm.name,
                            imwa::accuracy_series(results, arm.name));
        const auto dist = imwa::distance_series(results, arm.name);
        if (!dist.empty()) {
            imwa::append_series(series.string(), "l2_vs_episode", arm.name, dist);
        }
    }
}

void print_arm_summaries(const std::vector<imwa::ArmSpec>& arms,
                         const std::vector<imwa::RunResult>& results) {
    const auto points = imwa::summarize(arms, results);
    const imwa::SummaryPoint* baseline = nullptr;
    for (const auto& p : points) {
        if (p.label == "baseline") {
            baseline = &p;
        }
    }
    for (const auto& p : points) {
        std::printf("arm=%-12s runs=%-3zu top1=%.4f +/- %.4f", p.label.c_str(), p.runs,
                    p.mean_top1, p.std_top1);
        if (baseline != nullptr && &p != baseline) {
            std::printf("  delta_baseline=%+.4f", p.mean_top1 - baseline->mean_top1);
        }
        std::printf("\n");
    }
    std::size_t failures = 0;
    for (const auto& rr : results) {
        if (!rr.ok()) {
            ++failures;
            std::fprintf(stderr, "run failed: arm=%s seed=%llu: %s\n", rr.arm.c_str(),
                         static_cast<unsigned long long>(rr.seed), rr.error.c_str());
        }
    }
    if (failures > 0) {
        throw imwa::ConfigError(std::to_string(failures) + " run(s) failed");
    }
}

int cmd_run(const Overrides& ov) {
    const auto cfg = resolve_config(ov);
    imwa::validate_config(cfg);
    const auto plan = imwa::to_plan(cfg);
    prepare_output_dir(cfg);
    const auto results = imwa::run_plan(plan);
    write_run_outputs(cfg, plan.arms, results);
    print_arm_summaries(plan.arms, results);
    return 0;
}

int cmd_ablate(const Overrides& ov, const std::string& kind,
               const std::vector<double>& values) {
    if (values.empty()) {
        throw imwa::ConfigError("ablate: --values is required");
    }
    auto cfg = resolve_config(ov);
    // The sweep builds its own arms from the base schedule.
    cfg.experiment.arms = {"imwa"};
    imwa::validate_config(cfg);
    const auto plan = imwa::to_plan(cfg);
    prepare_output_dir(cfg);

    imwa::AblationResult ablation;
    if (kind == "e") {
        std::vector<std::size_t> es;
        for (const double v : values) {
            es.push_back(static_cast<std::size_t>(v));
        }
        ablation = imwa::ablate_E(plan, es);
    } else if (kind == "m") {
        std::vector<std::size_t> ms;
        for (const double v : values) {
            ms.push_back(static_cast<std::size_t>(v));
        }
        ablation = imwa::ablate_M(plan, ms);
    } else {
        ablation = imwa::ablate_gamma(plan, values);
    }

    const fs::path dir(cfg.output.directory);
    std::vector<imwa::ArmSpec> row_arms;
    for (const auto& p : ablation.table.points) {
        imwa::ArmSpec a;
        a.name = p.label;
        row_arms.push_back(a);
    }
    // For gamma sweeps the baseline rows also live in the raw results.
    std::vector<std::string> seen;
    for (const auto& rr : ablation.runs) {
        if (std::find(seen.begin(), seen.end(), rr.arm) == seen.end()) {
            seen.push_back(rr.arm);
        }
    }
    std::vector<imwa::ArmSpec> all_arms;
    for (const auto& name : seen) {
        imwa::ArmSpec a;
        a.name = name;
        all_arms.push_back(a);
    }
    imwa::write_results((dir / "results" / "results.jsonl").string(), all_arms, ablation.runs);
    imwa::write_summary_table((dir / "results" / "summary.txt").string(), ablation.table);
    const fs::path series = dir / "results" / "series.jsonl";
    fs::remove(series);
    std::vector<imwa::SeriesPoint> points;
    for (const auto& p : ablation.table.points) {
        points.push_back({p.x, p.mean_top1, p.std_top1});
    }
    imwa::append_series(series.string(), "ablation_" + kind, "top1", points);
    std::fputs(imwa::format_table(ablation.table).c_str(), stdout);
    return 0;
}

int cmd_inspect(const std::vector<std::string>& paths) {
    std::vector<imwa::WeightVector> models;
    for (const auto& path : paths) {
        const auto w = imwa::load_checkpoint(path);
        double lo = w.values[0], hi = w.values[0], sum = 0.0;
        for (const double v : w.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        const double mean = sum / static_cast<double>(w.values.size());
        double var = 0.0;
        for (const double v : w.values) {
            var += (v - mean) * (v - mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(w.values.size()));
        std::printf("%s:\n  layers:", path.c_str());
        for (const auto& d : w.layout.dims) {
            std::printf(" %u->%u", d.in, d.out);
        }
        std::printf("\n  params: %zu\n  min %.6g  max %.6g  mean %.6g  std %.6g\n",
                    w.values.size(), lo, hi, mean, sd);
        models.push_back(w);
    }
    if (models.size() >= 2) {
        for (std::size_t i = 1; i < models.size(); ++i) {
            if (!(models[i].layout == models[0].layout)) {
                throw imwa::FormatError("inspect: '" + paths[i] +
                                        "' has a different layout; distances undefined");
            }
        }
        std::printf("pairwise L2 distances:\n");
        const auto dists = imwa::pairwise_l2(models);
        std::size_t k = 0;
        for (std::size_t i = 0; i < models.size(); ++i) {
            for (std::size_t j = i + 1; j < models.size(); ++j) {
                std::printf("  d(%zu,%zu) = %.17g\n", i, j, dists[k++]);
            }
        }
    }
    return 0;
}

int cmd_export_dataset(const Overrides& ov, const std::string& out_path, std::uint64_t seed) {
    const auto cfg = resolve_config(ov);
    imwa::validate_config(cfg);
    if (cfg.dataset.source != "gaussian") {
        throw imwa::ConfigError("export-dataset: only the gaussian source can be exported");
    }
    const auto plan = imwa::to_plan(cfg);
    const auto gen = imwa::generate_plan_dataset(plan, seed);
    imwa::export_csv(gen.train, out_path);
    std::printf("wrote %zu samples (%zu classes, dim %zu) to %s\n", gen.train.size(),
                gen.train.num_classes(), gen.train.feature_dim, out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iterative model weight averaging on long-tailed classification"};
    app.require_subcommand(1);

    Overrides run_ov;
    auto* run = app.add_subcommand("run", "execute the configured experiment arms");
    add_common_options(run, run_ov);

    Overrides ae_ov, am_ov, ag_ov;
    std::vector<double> ae_values, am_values, ag_values;
    auto* ablate_e = app.add_subcommand("ablate-e", "sweep the episode count E");
    add_common_options(ablate_e, ae_ov);
    ablate_e->add_option("--values", ae_values, "E values, e.g. 1,5,20")
        ->delimiter(',')
        ->required();
    auto* ablate_m = app.add_subcommand("ablate-m", "sweep the model count M");
    add_common_options(ablate_m, am_ov);
    ablate_m->add_option("--values", am_values, "M values, e.g. 1,2,3")
        ->delimiter(',')
        ->required();
    auto* ablate_g = app.add_subcommand("ablate-gamma", "sweep the imbalance ratio");
    add_common_options(ablate_g, ag_ov);
    ablate_g->add_option("--values", ag_values, "gamma values, e.g. 1,10,100")
        ->delimiter(',')
        ->required();

    std::vector<std::string> inspect_paths;
    auto* inspect = app.add_subcommand("inspect", "print checkpoint layout and statistics");
    inspect->add_option("checkpoints", inspect_paths, "checkpoint files")
        ->required()
        ->expected(-1);

    Overrides ex_ov;
    std::string export_path = "dataset.csv";
    std::uint64_t export_seed = 0;
    auto* exporter = app.add_subcommand("export-dataset", "write the generated dataset as CSV");
    add_common_options(exporter, ex_ov);
    exporter->add_option("--out-file", export_path, "output CSV path");
    exporter->add_option("--seed", export_seed, "replication seed selecting the dataset");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(run_ov);
        }
        if (ablate_e->parsed()) {
            return cmd_ablate(ae_ov, "e", ae_values);
        }
        if (ablate_m->parsed()) {
            return cmd_ablate(am_ov, "m", am_values);
        }
        if (ablate_g->parsed()) {
            return cmd_ablate(ag_ov, "gamma", ag_values);
        }
        if (inspect->parsed()) {
            return cmd_inspect(inspect_paths);
        }
        if (exporter->parsed()) {
            return cmd_export_dataset(ex_ov, export_path, export_seed);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
