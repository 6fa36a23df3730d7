#include "imwa/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "imwa/errors.hpp"

namespace imwa {

namespace {

// Fixed sub-stream ids so every arm of a seed sees the same dataset and the
// same initialization, and model m always gets the same loader stream.
constexpr std::uint64_t kDatasetStream = 0x11;
constexpr std::uint64_t kInitStream = 0x22;
constexpr std::uint64_t kLoaderStreamBase = 0x1000;

struct SeedFixture {
    Dataset train;
    Dataset test;
    WeightVector init;
};

// Per-class tail split so CSV datasets get an evaluation slice without
// consuming extra entropy.
void split_csv(const Dataset& all, double test_fraction, Dataset& train, Dataset& test) {
    const std::size_t c_total = all.num_classes();
    std::vector<std::size_t> seen(c_total, 0);
    std::vector<std::size_t> train_quota(c_total);
    for (std::size_t c = 0; c < c_total; ++c) {
        const auto held = static_cast<std::size_t>(
            std::floor(static_cast<double>(all.class_counts[c]) * test_fraction));
        train_quota[c] = all.class_counts[c] - std::min(held, all.class_counts[c]);
        if (train_quota[c] == 0) {
            train_quota[c] = 1;
        }
    }
    train.feature_dim = test.feature_dim = all.feature_dim;
    train.class_counts.assign(c_total, 0);
    test.class_counts.assign(c_total, 0);
    for (std::size_t r = 0; r < all.size(); ++r) {
        const auto label = static_cast<std::size_t>(all.labels[r]);
        Dataset& dst = (seen[label]++ < train_quota[label]) ? train : test;
        const double* row = all.features.data() + r * all.feature_dim;
        dst.features.insert(dst.features.end(), row, row + all.feature_dim);
        dst.labels.push_back(all.labels[r]);
        ++dst.class_counts[label];
    }
}

SeedFixture build_fixture(const ExperimentPlan& plan, std::uint64_t seed) {
    SeedFixture fx;
    if (plan.csv_path.has_value()) {
        const Dataset all = ingest_csv(*plan.csv_path, plan.csv_label_column);
        split_csv(all, plan.csv_test_fraction, fx.train, fx.test);
    } else {
        auto gen = generate_plan_dataset(plan, seed);
        fx.train = std::move(gen.train);
        fx.test = std::move(gen.test);
    }
    const auto layout = LayerLayout::from_widths(plan.layer_widths);
    fx.init = init_weights(layout, derive_seed(seed, kInitStream));
    return fx;
}

std::vector<TrainerConfig> build_configs(const ExperimentPlan& plan, std::uint64_t seed,
                                         std::size_t m_count) {
    std::vector<TrainerConfig> configs(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        configs[m].data_seed = derive_seed(seed, kLoaderStreamBase + m);
        configs[m].learning_rate = plan.trainer.learning_rate;
        configs[m].momentum = plan.trainer.momentum;
        configs[m].batch_size = plan.trainer.batch_size;
    }
    return configs;
}

RunResult execute_arm(const ExperimentPlan& plan, const ArmSpec& arm, std::uint64_t seed,
                      const SeedFixture& fx) {
    RunResult rr;
    rr.arm = arm.name;
    rr.seed = seed;
    rr.init_hash = weight_hash(fx.init);
    const auto t_start = std::chrono::steady_clock::now();
    try {
        ImwaSchedule schedule = arm.schedule;
        schedule.total_iterations *= arm.iteration_multiplier;
        ImwaOptions options;
        options.concurrent_trainers = plan.concurrent_trainers;
        options.carry_momentum = plan.carry_momentum;
        options.reassign_average = arm.averaging;
        const auto configs = build_configs(plan, seed, schedule.num_models);
        auto out = run_imwa(fx.init, fx.train, schedule, configs, fx.test, options);
        rr.final_report = evaluate(out.final_model(), fx.test, fx.train.class_counts);
        rr.records = std::move(out.records);
        rr.peak_model_copies = out.peak_model_copies;
        rr.total_trained_iterations = schedule.num_models * schedule.total_iterations;
        rr.final_student = std::move(out.student);
        rr.final_ema = std::move(out.ema);
    } catch (const std::exception& e) {
        rr.error = e.what();
    }
    rr.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rr;
}

double mean_of(const std::vector<double>& xs) {
    double sum = 0.0;
    for (const double x : xs) {
        sum += x;
    }
    return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) {
        return 0.0;
    }
    double acc = 0.0;
    for (const double x : xs) {
        acc += (x - mean) * (x - mean);
    }
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

std::string format_gamma(double g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", g);
    return buf;
}

}  // namespace

void ExperimentPlan::validate() const {
    if (arms.empty()) {
        throw ConfigError("plan: no arms");
    }
    std::set<std::string> names;
    for (const auto& arm : arms) {
        if (arm.name.empty()) {
            throw ConfigError("plan: arm with empty name");
        }
        if (!names.insert(arm.name).second) {
            throw ConfigError("plan: duplicate arm name '" + arm.name + "'");
        }
        arm.schedule.validate();
        if (arm.iteration_multiplier < 1) {
            throw ConfigError("plan: arm '" + arm.name + "' iteration_multiplier must be >= 1");
        }
    }
    if (seeds.empty()) {
        throw ConfigError("plan: no seeds");
    }
    LayerLayout::from_widths(layer_widths);  // validates the chain
    if (!csv_path.has_value()) {
        data_spec.validate();
        if (layer_widths.front() != feature_dim) {
            throw ConfigError("plan: first layer width " + std::to_string(layer_widths.front()) +
                              " does not match feature_dim " + std::to_string(feature_dim));
        }
        if (layer_widths.back() != data_spec.num_classes) {
            throw ConfigError("plan: last layer width " + std::to_string(layer_widths.back()) +
                              " does not match num_classes " +
                              std::to_string(data_spec.num_classes));
        }
    }
    if (!(trainer.learning_rate > 0.0)) {
        throw ConfigError("plan: learning_rate must be > 0");
    }
    if (trainer.momentum < 0.0 || trainer.momentum >= 1.0) {
        throw ConfigError("plan: momentum must be in [0, 1)");
    }
    if (trainer.batch_size < 1) {
        throw ConfigError("plan: batch_size must be >= 1");
    }
}

ArmSpec make_arm(const std::string& name, const ImwaSchedule& schedule) {
    ArmSpec arm;
    arm.name = name;
    arm.schedule = schedule;
    if (name == "baseline") {
        arm.schedule.num_models = 1;
        arm.schedule.num_episodes = 1;
        arm.schedule.use_ema = false;
    } else if (name == "baseline-2x") {
        arm.schedule.num_models = 1;
        arm.schedule.num_episodes = 1;
        arm.schedule.use_ema = false;
        arm.iteration_multiplier = 2;
    } else if (name == "ema") {
        arm.schedule.num_models = 1;
        arm.schedule.num_episodes = 1;
        arm.schedule.use_ema = true;
    } else if (name == "vanilla-mwa") {
        arm.schedule.num_episodes = 1;
    } else if (name == "imwa") {
        // schedule as given
    } else if (name == "imwa-ema") {
        arm.schedule.use_ema = true;
    } else if (name == "probe") {
        arm.averaging = false;
        arm.schedule.use_ema = false;
    } else {
        throw ConfigError("unknown arm '" + name +
                          "'; expected one of baseline, baseline-2x, ema, vanilla-mwa, imwa, "
                          "imwa-ema, probe");
    }
    return arm;
}

GeneratedData generate_plan_dataset(const ExperimentPlan& plan, std::uint64_t seed) {
    return generate_gaussian_mixture(plan.data_spec, plan.feature_dim, plan.class_sep,
                                     derive_seed(seed, kDatasetStream), plan.test_per_class);
}

std::vector<RunResult> run_plan(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<RunResult> results;
    results.reserve(plan.arms.size() * plan.seeds.size());
    for (const auto seed : plan.seeds) {
        const SeedFixture fx = build_fixture(plan, seed);
        for (const auto& arm : plan.arms) {
            results.push_back(execute_arm(plan, arm, seed, fx));
        }
    }
    return results;
}

std::vector<SummaryPoint> summarize(const std::vector<ArmSpec>& arms,
                                    const std::vector<RunResult>& results) {
    std::vector<SummaryPoint> points;
    points.reserve(arms.size());
    for (const auto& arm : arms) {
        SummaryPoint p;
        p.label = arm.name;
        std::vector<double> top1s;
        for (const auto& rr : results) {
            if (rr.arm == arm.name && rr.ok()) {
                top1s.push_back(rr.final_report.top1);
            }
        }
        p.runs = top1s.size();
        p.mean_top1 = mean_of(top1s);
        p.std_top1 = sample_std(top1s, p.mean_top1);
        points.push_back(std::move(p));
    }
    return points;
}

AblationResult ablate_E(const ExperimentPlan& base, const std::vector<std::size_t>& e_values) {
    if (e_values.empty()) {
        throw ConfigError("ablate-e: no values");
    }
    AblationResult out;
    out.table.title = "episode-count ablation";
    out.table.columns = {"arm", "E", "top1_mean", "top1_std", "runs"};
    ImwaSchedule schedule = base.arms.empty() ? ImwaSchedule{} : base.arms.front().schedule;
    for (const auto e : e_values) {
        ExperimentPlan plan = base;
        ImwaSchedule s = schedule;
        s.num_episodes = e;
        ArmSpec arm = make_arm("imwa", s);
        arm.name = "imwa-e" + std::to_string(e);
        plan.arms = {arm};
        auto runs = run_plan(plan);
        auto points = summarize(plan.arms, runs);
        points[0].x = static_cast<double>(e);
        out.table.points.push_back(std::move(points[0]));
        out.runs.insert(out.runs.end(), std::make_move_iterator(runs.begin()),
                        std::make_move_iterator(runs.end()));
    }
    return out;
}

AblationResult ablate_M(const ExperimentPlan& base, const std::vector<std::size_t>& m_values) {
    if (m_values.empty()) {
        throw ConfigError("ablate-m: no values");
    }
    AblationResult out;
    out.table.title = "model-count ablation";
    out.table.columns = {"arm",  "M",           "top1_mean",        "top1_std",
                         "runs", "total_iters", "peak_model_copies"};
    ImwaSchedule schedule = base.arms.empty() ? ImwaSchedule{} : base.arms.front().schedule;
    for (const auto m : m_values) {
        ExperimentPlan plan = base;
        ImwaSchedule s = schedule;
        s.num_models = m;
        ArmSpec arm = make_arm("imwa", s);
        arm.name = "imwa-m" + std::to_string(m);
        plan.arms = {arm};
        auto runs = run_plan(plan);
        auto points = summarize(plan.arms, runs);
        points[0].x = static_cast<double>(m);
        std::size_t total_iters = 0;
        std::size_t peak = 0;
        for (const auto& rr : runs) {
            if (rr.ok()) {
                total_iters = rr.total_trained_iterations;
                peak = std::max(peak, rr.peak_model_copies);
            }
        }
        points[0].extra["total_iters"] = static_cast<double>(total_iters);
        points[0].extra["peak_model_copies"] = static_cast<double>(peak);
        out.table.points.push_back(std::move(points[0]));
        out.runs.insert(out.runs.end(), std::make_move_iterator(runs.begin()),
                        std::make_move_iterator(runs.end()));
    }
    return out;
}

AblationResult ablate_gamma(const ExperimentPlan& base, const std::vector<double>& gammas) {
    if (gammas.empty()) {
        throw ConfigError("ablate-gamma: no values");
    }
    for (const auto g : gammas) {
        if (!(g >= 1.0)) {
            throw ConfigError("ablate-gamma: imbalance ratios must be >= 1");
        }
    }
    AblationResult out;
    out.table.title = "imbalance-ratio ablation";
    out.table.columns = {"arm",  "gamma",         "top1_mean",        "top1_std",
                         "runs", "baseline_mean", "improvement_mean", "improvement_std"};
    ImwaSchedule schedule = base.arms.empty() ? ImwaSchedule{} : base.arms.front().schedule;
    for (const auto g : gammas) {
        ExperimentPlan plan = base;
        plan.data_spec.imbalance_ratio = g;
        const std::string suffix = "-g" + format_gamma(g);
        ArmSpec baseline = make_arm("baseline", schedule);
        baseline.name = "baseline" + suffix;
        ArmSpec imwa_arm = make_arm("imwa", schedule);
        imwa_arm.name = "imwa" + suffix;
        plan.arms = {baseline, imwa_arm};
        auto runs = run_plan(plan);

        std::vector<double> base_top1, imwa_top1, deltas;
        for (const auto seed : plan.seeds) {
            const RunResult* b = nullptr;
            const RunResult* i = nullptr;
            for (const auto& rr : runs) {
                if (rr.seed != seed || !rr.ok()) {
                    continue;
                }
                if (rr.arm == baseline.name) {
                    b = &rr;
                }
                if (rr.arm == imwa_arm.name) {
                    i = &rr;
                }
            }
            if (b != nullptr && i != nullptr) {
                base_top1.push_back(b->final_report.top1);
                imwa_top1.push_back(i->final_report.top1);
                deltas.push_back(improvement(i->final_report, b->final_report));
            }
        }
        SummaryPoint p;
        p.label = "imwa" + suffix;
        p.x = g;
        p.runs = imwa_top1.size();
        p.mean_top1 = mean_of(imwa_top1);
        p.std_top1 = sample_std(imwa_top1, p.mean_top1);
        p.extra["baseline_mean"] = mean_of(base_top1);
        p.extra["improvement_mean"] = mean_of(deltas);
        p.extra["improvement_std"] = sample_std(deltas, mean_of(deltas));
        out.table.points.push_back(std::move(p));
        out.runs.insert(out.runs.end(), std::make_move_iterator(runs.begin()),
                        std::make_move_iterator(runs.end()));
    }
    return out;
}

std::string format_table(const SummaryTable& table) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back(table.columns);
    for (const auto& p : table.points) {
        std::vector<std::string> row;
        char buf[64];
        for (const auto& col : table.columns) {
            if (col == "arm") {
                row.push_back(p.label);
            } else if (col == "E" || col == "M" || col == "runs" || col == "total_iters" ||
                       col == "peak_model_copies") {
                double v = col == "runs" ? static_cast<double>(p.runs)
                           : (col == "E" || col == "M") ? p.x
                                                        : p.extra.count(col) ? p.extra.at(col)
                                                                             : 0.0;
                std::snprintf(buf, sizeof buf, "%.0f", v);
                row.emplace_back(buf);
            } else if (col == "gamma") {
                std::snprintf(buf, sizeof buf, "%g", p.x);
                row.emplace_back(buf);
            } else if (col == "top1_mean") {
                std::snprintf(buf, sizeof buf, "%.4f", p.mean_top1);
                row.emplace_back(buf);
            } else if (col == "top1_std") {
                std::snprintf(buf, sizeof buf, "%.4f", p.std_top1);
                row.emplace_back(buf);
            } else {
                const double v = p.extra.count(col) ? p.extra.at(col) : 0.0;
                std::snprintf(buf, sizeof buf, "%+.4f", v);
                row.emplace_back(buf);
            }
        }
        cells.push_back(std::move(row));
    }

    std::vector<std::size_t> widths(table.columns.size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::ostringstream os;
    os << table.title << '\n';
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            os << cells[r][c];
            if (c + 1 < cells[r].size()) {
                os << std::string(widths[c] - cells[r][c].size() + 2, ' ');
            }
        }
        os << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (const auto w : widths) {
                total += w + 2;
            }
            os << std::string(total > 2 ? total - 2 : total, '-') << '\n';
        }
    }
    return os.str();
}

}  // namespace imwa
