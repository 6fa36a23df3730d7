#pragma once

// Experiment protocols: paired-seed comparisons between arms (baseline,
// longer-schedule baseline, vanilla averaging, iterative averaging with and
// without EMA) plus ablation sweeps over episode count, model count, and the
// dataset imbalance ratio. All arms of a seed share the same initialization
// and the same dataset, so improvement deltas are low-variance.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imwa/data.hpp"
#include "imwa/imwa.hpp"
#include "imwa/metrics.hpp"

namespace imwa {

struct ArmSpec {
    std::string name;
    ImwaSchedule schedule;
    std::size_t iteration_multiplier = 1;  // effective T = schedule.T * multiplier
    bool averaging = true;                 // false: diagnostic probe arm
};

struct TrainerTemplate {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 32;
};

struct ExperimentPlan {
    std::vector<ArmSpec> arms;

    // Dataset: either a generated mixture or an ingested CSV file.
    LongTailSpec data_spec;
    std::size_t feature_dim = 16;
    double class_sep = 0.7;
    std::size_t test_per_class = 200;
    std::optional<std::string> csv_path;  // when set, the CSV replaces the generator
    int csv_label_column = -1;
    double csv_test_fraction = 0.2;       // tail fraction of rows held out per class

    std::vector<std::uint64_t> seeds;
    TrainerTemplate trainer;

    std::vector<std::uint32_t> layer_widths = {16, 64, 10};
    bool concurrent_trainers = false;
    bool carry_momentum = false;

    void validate() const;
};

struct RunResult {
    std::string arm;
    std::uint64_t seed = 0;
    EvalReport final_report;  // of the final model (EMA shadow when enabled)
    std::vector<EpisodeRecord> records;
    double wall_seconds = 0.0;
    std::size_t peak_model_copies = 0;
    std::size_t total_trained_iterations = 0;  // M * effective T
    std::uint64_t init_hash = 0;               // fingerprint of theta^(0)
    std::string error;                         // non-empty when the run failed

    WeightVector final_student;
    std::optional<WeightVector> final_ema;

    bool ok() const { return error.empty(); }
};

struct SummaryPoint {
    std::string label;
    double x = 0.0;
    double mean_top1 = 0.0;
    double std_top1 = 0.0;
    std::size_t runs = 0;
    std::map<std::string, double> extra;
};

struct SummaryTable {
    std::string title;
    std::vector<std::string> columns;
    std::vector<SummaryPoint> points;
};

struct AblationResult {
    SummaryTable table;
    std::vector<RunResult> runs;
};

// Executes every (arm x seed) combination. A failing run is recorded with
// its error message; the remaining runs still execute.
std::vector<RunResult> run_plan(const ExperimentPlan& plan);

// Mean/std of final top-1 per arm, in arm order. Sample standard deviation
// (n-1), zero for a single run; recomputable exactly from the raw results.
std::vector<SummaryPoint> summarize(const std::vector<ArmSpec>& arms,
                                    const std::vector<RunResult>& results);

// One iterative-averaging arm per episode-count value, shared seeds.
AblationResult ablate_E(const ExperimentPlan& base, const std::vector<std::size_t>& e_values);

// One arm per model-count value; also reports total trained iterations and
// the peak model-copy count.
AblationResult ablate_M(const ExperimentPlan& base, const std::vector<std::size_t>& m_values);

// Baseline and iterative-averaging arms per imbalance ratio; reports the
// per-ratio paired improvement.
AblationResult ablate_gamma(const ExperimentPlan& base, const std::vector<double>& gammas);

// Plain-text rendering of a summary table, aligned for docs.
std::string format_table(const SummaryTable& table);

// Builders used by run_plan and the CLI. `schedule` carries the defaults
// (T, E, M, lambda) that named arms derive from.
ArmSpec make_arm(const std::string& name, const ImwaSchedule& schedule);

// The exact generated dataset a replication seed sees under this plan
// (gaussian source only).
GeneratedData generate_plan_dataset(const ExperimentPlan& plan, std::uint64_t seed);

}  // namespace imwa
