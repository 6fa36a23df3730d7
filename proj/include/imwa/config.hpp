#pragma once

// Declarative run configuration. Values resolve with precedence
// flag > config file > built-in default; every constraint is checked here
// with a field-path message, not at run time.

#include <cstdint>
#include <string>
#include <vector>

#include "imwa/harness.hpp"

namespace imwa {

struct RunConfig {
    struct DatasetSection {
        std::string source = "gaussian";  // "gaussian" | "csv"
        std::size_t num_classes = 10;
        std::size_t head_count = 5000;
        double imbalance_ratio = 10.0;
        std::size_t feature_dim = 16;
        double class_sep = 0.7;
        std::size_t test_per_class = 200;
        std::string csv_path;
        int label_column = -1;
        double test_fraction = 0.2;
    } dataset;

    struct ModelSection {
        std::vector<std::uint32_t> layers = {16, 64, 10};
    } model;

    struct ScheduleSection {
        std::size_t iterations = 4000;
        std::size_t episodes = 20;  // default E
        std::size_t models = 2;     // default M
        double ema_lambda = 0.999;
        bool use_ema = false;
        bool carry_momentum = false;
    } schedule;

    struct TrainerSection {
        double learning_rate = 0.05;
        double momentum = 0.9;
        std::size_t batch_size = 32;
    } trainer;

    struct ExperimentSection {
        std::vector<std::string> arms = {"baseline", "vanilla-mwa", "imwa"};
        std::vector<std::uint64_t> seeds = {0};
        bool concurrent = false;
    } experiment;

    struct OutputSection {
        std::string directory = "runs/out";
        bool force = false;
        bool checkpoints = true;
    } output;
};

// Defaults overlaid with the file's values. Unknown keys and type mismatches
// are ConfigErrors naming the offending key path.
RunConfig load_config_file(const std::string& path);

// Full constraint check with field-path messages (e.g. "schedule.models:
// must be >= 1"). Also verifies referenced files exist.
void validate_config(const RunConfig& config);

// Expands the config into an executable plan (arms resolved by name).
ExperimentPlan to_plan(const RunConfig& config);

ImwaSchedule base_schedule(const RunConfig& config);

}  // namespace imwa
