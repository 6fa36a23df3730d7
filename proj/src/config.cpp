#include "imwa/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "imwa/errors.hpp"

namespace imwa {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& path, const std::string& key) {
    throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError("config: section '" + path + "' must be an object");
    }
}

template <typename T>
void read_field(const json& section, const std::string& path, const std::string& key, T& out) {
    if (!section.contains(key)) {
        return;
    }
    try {
        out = section.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: " + path + "." + key + ": wrong type");
    }
}

void check_keys(const json& section, const std::string& path,
                const std::set<std::string>& known) {
    for (const auto& [key, value] : section.items()) {
        if (!known.count(key)) {
            bad_key(path, key);
        }
    }
}

}  // namespace

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    expect_object(j, path);
    check_keys(j, "", {"dataset", "model", "schedule", "trainer", "experiment", "output"});

    RunConfig cfg;
    if (j.contains("dataset")) {
        const auto& s = j.at("dataset");
        expect_object(s, "dataset");
        check_keys(s, "dataset",
                   {"source", "num-classes", "head-count", "imbalance-ratio", "feature-dim",
                    "class-sep", "test-per-class", "csv-path", "label-column",
                    "test-fraction"});
        read_field(s, "dataset", "source", cfg.dataset.source);
        read_field(s, "dataset", "num-classes", cfg.dataset.num_classes);
        read_field(s, "dataset", "head-count", cfg.dataset.head_count);
        read_field(s, "dataset", "imbalance-ratio", cfg.dataset.imbalance_ratio);
        read_field(s, "dataset", "feature-dim", cfg.dataset.feature_dim);
        read_field(s, "dataset", "class-sep", cfg.dataset.class_sep);
        read_field(s, "dataset", "test-per-class", cfg.dataset.test_per_class);
        read_field(s, "dataset", "csv-path", cfg.dataset.csv_path);
        read_field(s, "dataset", "label-column", cfg.dataset.label_column);
        read_field(s, "dataset", "test-fraction", cfg.dataset.test_fraction);
    }
    if (j.contains("model")) {
        const auto& s = j.at("model");
        expect_object(s, "model");
        check_keys(s, "model", {"layers"});
        read_field(s, "model", "layers", cfg.model.layers);
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        expect_object(s, "schedule");
        check_keys(s, "schedule",
                   {"iterations", "episodes", "models", "ema-lambda", "use-ema",
                    "carry-momentum"});
        read_field(s, "schedule", "iterations", cfg.schedule.iterations);
        read_field(s, "schedule", "episodes", cfg.schedule.episodes);
        read_field(s, "schedule", "models", cfg.schedule.models);
        read_field(s, "schedule", "ema-lambda", cfg.schedule.ema_lambda);
        read_field(s, "schedule", "use-ema", cfg.schedule.use_ema);
        read_field(s, "schedule", "carry-momentum", cfg.schedule.carry_momentum);
    }
    if (j.contains("trainer")) {
        const auto& s = j.at("trainer");
        expect_object(s, "trainer");
        check_keys(s, "trainer", {"learning-rate", "momentum", "batch-size"});
        read_field(s, "trainer", "learning-rate", cfg.trainer.learning_rate);
        read_field(s, "trainer", "momentum", cfg.trainer.momentum);
        read_field(s, "trainer", "batch-size", cfg.trainer.batch_size);
    }
    if (j.contains("experiment")) {
        const auto& s = j.at("experiment");
        expect_object(s, "experiment");
        check_keys(s, "experiment", {"arms", "seeds", "concurrent"});
        read_field(s, "experiment", "arms", cfg.experiment.arms);
        read_field(s, "experiment", "seeds", cfg.experiment.seeds);
        read_field(s, "experiment", "concurrent", cfg.experiment.concurrent);
    }
    if (j.contains("output")) {
        const auto& s = j.at("output");
        expect_object(s, "output");
        check_keys(s, "output", {"directory", "force", "checkpoints"});
        read_field(s, "output", "directory", cfg.output.directory);
        read_field(s, "output", "force", cfg.output.force);
        read_field(s, "output", "checkpoints", cfg.output.checkpoints);
    }
    return cfg;
}

void validate_config(const RunConfig& cfg) {
    if (cfg.dataset.source != "gaussian" && cfg.dataset.source != "csv") {
        throw ConfigError("dataset.source: must be 'gaussian' or 'csv'");
    }
    if (cfg.dataset.source == "csv") {
        if (cfg.dataset.csv_path.empty()) {
            throw ConfigError("dataset.csv-path: required when dataset.source is 'csv'");
        }
        if (!std::filesystem::exists(cfg.dataset.csv_path)) {
            throw ConfigError("dataset.csv-path: file '" + cfg.dataset.csv_path +
                              "' does not exist");
        }
        if (!(cfg.dataset.test_fraction > 0.0 && cfg.dataset.test_fraction < 1.0)) {
            throw ConfigError("dataset.test-fraction: must be in (0, 1)");
        }
    } else {
        if (cfg.dataset.num_classes < 2) {
            throw ConfigError("dataset.num-classes: must be >= 2");
        }
        if (cfg.dataset.head_count < 1) {
            throw ConfigError("dataset.head-count: must be >= 1");
        }
        if (!(cfg.dataset.imbalance_ratio >= 1.0)) {
            throw ConfigError("dataset.imbalance-ratio: must be >= 1");
        }
        if (cfg.dataset.feature_dim < 2) {
            throw ConfigError("dataset.feature-dim: must be >= 2");
        }
        if (!(cfg.dataset.class_sep > 0.0)) {
            throw ConfigError("dataset.class-sep: must be > 0");
        }
        if (cfg.dataset.test_per_class < 1) {
            throw ConfigError("dataset.test-per-class: must be >= 1");
        }
    }
    if (cfg.model.layers.size() < 2) {
        throw ConfigError("model.layers: need at least input and output widths");
    }
    for (const auto w : cfg.model.layers) {
        if (w < 1) {
            throw ConfigError("model.layers: widths must be >= 1");
        }
    }
    if (cfg.schedule.iterations < 1) {
        throw ConfigError("schedule.iterations: must be >= 1");
    }
    if (cfg.schedule.episodes < 1 || cfg.schedule.episodes > cfg.schedule.iterations) {
        throw ConfigError("schedule.episodes: must be in [1, schedule.iterations]");
    }
    if (cfg.schedule.models < 1) {
        throw ConfigError("schedule.models: must be >= 1");
    }
    if (!(cfg.schedule.ema_lambda >= 0.0 && cfg.schedule.ema_lambda <= 1.0)) {
        throw ConfigError("schedule.ema-lambda: must be in [0, 1]");
    }
    if (!(cfg.trainer.learning_rate > 0.0)) {
        throw ConfigError("trainer.learning-rate: must be > 0");
    }
    if (cfg.trainer.momentum < 0.0 || cfg.trainer.momentum >= 1.0) {
        throw ConfigError("trainer.momentum: must be in [0, 1)");
    }
    if (cfg.trainer.batch_size < 1) {
        throw ConfigError("trainer.batch-size: must be >= 1");
    }
    if (cfg.experiment.arms.empty()) {
        throw ConfigError("experiment.arms: must name at least one arm");
    }
    for (const auto& name : cfg.experiment.arms) {
        make_arm(name, base_schedule(cfg));  // throws on unknown names
    }
    if (cfg.experiment.seeds.empty()) {
        throw ConfigError("experiment.seeds: must list at least one seed");
    }
    if (cfg.output.directory.empty()) {
        throw ConfigError("output.directory: must not be empty");
    }
    to_plan(cfg).validate();
}

ImwaSchedule base_schedule(const RunConfig& cfg) {
    ImwaSchedule s;
    s.total_iterations = cfg.schedule.iterations;
    s.num_episodes = cfg.schedule.episodes;
    s.num_models = cfg.schedule.models;
    s.ema_lambda = cfg.schedule.ema_lambda;
    s.use_ema = cfg.schedule.use_ema;
    return s;
}

ExperimentPlan to_plan(const RunConfig& cfg) {
    ExperimentPlan plan;
    const auto schedule = base_schedule(cfg);
    for (const auto& name : cfg.experiment.arms) {
        plan.arms.push_back(make_arm(name, schedule));
    }
    plan.data_spec.num_classes = cfg.dataset.num_classes;
    plan.data_spec.head_count = cfg.dataset.head_count;
    plan.data_spec.imbalance_ratio = cfg.dataset.imbalance_ratio;
    plan.feature_dim = cfg.dataset.feature_dim;
    plan.class_sep = cfg.dataset.class_sep;
    plan.test_per_class = cfg.dataset.test_per_class;
    if (cfg.dataset.source == "csv") {
        plan.csv_path = cfg.dataset.csv_path;
        plan.csv_label_column = cfg.dataset.label_column;
        plan.csv_test_fraction = cfg.dataset.test_fraction;
    }
    plan.seeds = cfg.experiment.seeds;
    plan.trainer.learning_rate = cfg.trainer.learning_rate;
    plan.trainer.momentum = cfg.trainer.momentum;
    plan.trainer.batch_size = cfg.trainer.batch_size;
    plan.layer_widths = cfg.model.layers;
    plan.concurrent_trainers = cfg.experiment.concurrent;
    plan.carry_momentum = cfg.schedule.carry_momentum;
    return plan;
}

}  // namespace imwa
