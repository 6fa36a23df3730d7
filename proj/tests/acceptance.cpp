// End-to-end verification suite. Each criterion prints one [PASS]/[FAIL]
// line; the process exits nonzero if any criterion fails. The trend checks
// (8, 9) run the full desk-scale comparison and take the bulk of the time.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imwa/checkpoint.hpp"
#include "imwa/data.hpp"
#include "imwa/errors.hpp"
#include "imwa/harness.hpp"
#include "imwa/imwa.hpp"
#include "imwa/metrics.hpp"
#include "imwa/nn.hpp"
#include "imwa/results_io.hpp"
#include "imwa/rng.hpp"

using namespace imwa;
namespace fs = std::filesystem;

namespace {

struct Check {
    std::vector<std::string> failures;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            failures.push_back(what);
        }
    }
    void note(const std::string& text) { detail = text; }
};

struct Criterion {
    int id;
    std::string name;
    std::function<void(Check&)> body;
};

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

// Default desk-scale fixture: ten moderately separated Gaussian classes in
// 16 dimensions, 5000 head samples, MLP 16-64-10, T=4000, batch 32,
// lr 0.05, momentum 0.9. Head count and separation are calibrated so that
// T=4000 sits on the plateau, not in the memorization phase, which is where
// the averaging trend is measurable.
constexpr double kFixtureClassSep = 0.7;
constexpr std::size_t kFixtureHeadCount = 5000;

ExperimentPlan fixture_plan(double gamma) {
    ExperimentPlan plan;
    plan.data_spec = {10, kFixtureHeadCount, gamma};
    plan.feature_dim = 16;
    plan.class_sep = kFixtureClassSep;
    plan.test_per_class = 200;
    plan.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    plan.trainer = {0.05, 0.9, 32};
    plan.layer_widths = {16, 64, 10};
    return plan;
}

ImwaSchedule fixture_schedule() {
    ImwaSchedule s;
    s.total_iterations = 4000;
    s.num_episodes = 20;
    s.num_models = 2;
    return s;
}

struct SmallFixture {
    GeneratedData gen;
    WeightVector init;

    SmallFixture()
        : gen(generate_gaussian_mixture({3, 30, 3.0}, 2, 4.0, 7, 40)),
          init(init_weights(LayerLayout::from_widths({2, 8, 3}), 11)) {}
};

TrainerConfig small_config(std::uint64_t seed, double momentum = 0.9) {
    return {seed, 0.05, momentum, 8};
}

double paired_mean_improvement(const std::vector<RunResult>& results,
                               const std::vector<std::uint64_t>& seeds,
                               const std::string& arm, const std::string& baseline) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto seed : seeds) {
        const RunResult* a = nullptr;
        const RunResult* b = nullptr;
        for (const auto& rr : results) {
            if (rr.seed == seed && rr.ok()) {
                if (rr.arm == arm) {
                    a = &rr;
                }
                if (rr.arm == baseline) {
                    b = &rr;
                }
            }
        }
        if (a != nullptr && b != nullptr) {
            sum += improvement(a->final_report, b->final_report);
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

void criterion_gradient_oracle(Check& check) {
    Rng rng(90210);
    const double h = 1e-5;
    double worst = 0.0;
    int models_done = 0;
    while (models_done < 25) {
        const std::size_t d = 2 + rng.below(3);
        const std::size_t hidden = 2 + rng.below(6);
        const std::size_t c = 2 + rng.below(4);
        const auto layout = LayerLayout::from_widths(
            {static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(hidden),
             static_cast<std::uint32_t>(c)});
        if (layout.param_count() > 200) {
            continue;
        }
        const auto w = init_weights(layout, rng.next_u64());

        int batches_done = 0;
        while (batches_done < 4) {
            Batch batch;
            batch.rows = 1 + rng.below(6);
            batch.dim = d;
            batch.inputs.resize(batch.rows * d);
            for (auto& x : batch.inputs) {
                x = rng.uniform(-2.0, 2.0);
            }
            batch.labels.resize(batch.rows);
            for (auto& l : batch.labels) {
                l = static_cast<std::int32_t>(rng.below(c));
            }

            // finite differences are invalid near ReLU breakpoints; redraw
            // fixtures whose hidden pre-activations sit within the margin
            bool clean = true;
            {
                std::vector<double> z(batch.rows * hidden);
                kernels::ref::affine_forward(batch.inputs.data(), batch.rows, d,
                                             w.layer_weights(0), w.layer_bias(0), hidden,
                                             z.data());
                for (const double v : z) {
                    clean = clean && std::abs(v) >= 1e-3;
                }
            }
            if (!clean) {
                continue;
            }
            ++batches_done;

            const auto [loss, grad] = loss_and_grad(w, batch, kernels::Exec::serial);
            (void)loss;
            for (std::size_t i = 0; i < w.values.size(); ++i) {
                WeightVector plus = w, minus = w;
                plus.values[i] += h;
                minus.values[i] -= h;
                const double lp = loss_and_grad(plus, batch, kernels::Exec::serial).first;
                const double lm = loss_and_grad(minus, batch, kernels::Exec::serial).first;
                const double fd = (lp - lm) / (2.0 * h);
                const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-5});
                worst = std::max(worst, std::abs(grad[i] - fd) / denom);
            }
        }
        ++models_done;
    }
    check.require(worst < 1e-4, "max relative gradient error " + std::to_string(worst));
    std::ostringstream os;
    os << "25 models x 4 batches, max rel err " << worst;
    check.note(os.str());
}

void criterion_single_model_equivalence(Check& check) {
    SmallFixture fx;
    const auto cfg = small_config(3);
    int compared = 0;
    for (const std::size_t t_total : {17u, 100u}) {
        LoaderState loader(fx.gen.train.size(), cfg.data_seed, cfg.batch_size);
        const auto mono = train_episode(fx.init, {}, fx.gen.train, cfg, loader, t_total);
        for (const std::size_t episodes : {1u, 5u, 17u}) {
            ImwaSchedule schedule;
            schedule.total_iterations = t_total;
            schedule.num_episodes = episodes;
            schedule.num_models = 1;
            ImwaOptions options;
            options.carry_momentum = true;  // keeps the velocity stream intact
            const auto result =
                run_imwa(fx.init, fx.gen.train, schedule, {cfg}, fx.gen.test, options);
            check.require(result.student.values == mono.weights.values,
                          "T=" + std::to_string(t_total) + " E=" + std::to_string(episodes) +
                              " differs from monolithic training");
            ++compared;
        }
    }
    check.note(std::to_string(compared) + " (T, E) combinations bit-identical");
}

void criterion_vanilla_equivalence(Check& check) {
    SmallFixture fx;
    const std::vector<TrainerConfig> configs = {small_config(21), small_config(22)};
    ImwaSchedule schedule;
    schedule.total_iterations = 60;
    schedule.num_episodes = 1;
    schedule.num_models = 2;
    schedule.use_ema = true;
    const auto a = run_imwa(fx.init, fx.gen.train, schedule, configs, fx.gen.test);
    schedule.num_episodes = 9;  // entry point must force E back to 1
    const auto b = run_vanilla_mwa(fx.init, fx.gen.train, schedule, configs, fx.gen.test);
    check.require(a.student.values == b.student.values, "student weights differ");
    check.require(a.ema.has_value() && b.ema.has_value() && a.ema->values == b.ema->values,
                  "EMA weights differ");
    check.require(a.records.size() == 1 && b.records.size() == 1, "episode count mismatch");
    check.require(a.records[0].pairwise_distance == b.records[0].pairwise_distance,
                  "recorded distances differ");
    check.note("students, shadows and records bit-identical");
}

void criterion_serial_concurrent(Check& check) {
    SmallFixture fx;
    const std::vector<TrainerConfig> configs = {small_config(31), small_config(32),
                                                small_config(33)};
    ImwaSchedule schedule;
    schedule.total_iterations = 48;
    schedule.num_episodes = 4;
    schedule.num_models = 3;
    schedule.use_ema = true;
    ImwaOptions serial;
    serial.concurrent_trainers = false;
    ImwaOptions parallel;
    parallel.concurrent_trainers = true;
    const auto a = run_imwa(fx.init, fx.gen.train, schedule, configs, fx.gen.test, serial);
    const auto b = run_imwa(fx.init, fx.gen.train, schedule, configs, fx.gen.test, parallel);
    check.require(a.student.values == b.student.values, "student weights differ");
    check.require(a.ema->values == b.ema->values, "EMA weights differ");
    bool records_equal = a.records.size() == b.records.size();
    for (std::size_t e = 0; records_equal && e < a.records.size(); ++e) {
        records_equal = a.records[e].averaged_weights.values ==
                            b.records[e].averaged_weights.values &&
                        a.records[e].pairwise_distance == b.records[e].pairwise_distance &&
                        a.records[e].individual_top1 == b.records[e].individual_top1;
    }
    check.require(records_equal, "episode records differ");
    check.note("M=3, E=4 with EMA bit-identical across trainer modes");
}

void criterion_ema_algebra(Check& check) {
    const auto layout = LayerLayout::from_widths({4, 6, 3});
    const auto theta = init_weights(layout, 41);
    const auto omega0 = init_weights(layout, 42);
    double worst = 0.0;
    for (const double lambda : {0.9, 0.999}) {
        EmaState ema{omega0, lambda};
        const int t_steps = 200;
        for (int t = 0; t < t_steps; ++t) {
            ema = ema_update(ema, theta);
        }
        const double decay = std::pow(lambda, t_steps);
        for (std::size_t i = 0; i < theta.values.size(); ++i) {
            const double expected =
                theta.values[i] + decay * (omega0.values[i] - theta.values[i]);
            worst = std::max(worst, std::abs(ema.weights.values[i] - expected));
        }
    }
    check.require(worst < 1e-9, "closed-form deviation " + std::to_string(worst));
    std::ostringstream os;
    os << "max |omega_t - closed form| = " << worst;
    check.note(os.str());
}

void criterion_averaging_algebra(Check& check) {
    Rng rng(51);
    const auto layout = LayerLayout::from_widths({4, 6, 3});
    std::vector<WeightVector> models;
    for (int m = 0; m < 4; ++m) {
        models.push_back(init_weights(layout, rng.next_u64()));
    }

    const std::vector<WeightVector> identical(3, models[0]);
    check.require(average_weights(identical).values == models[0].values,
                  "idempotence on identical models is not exact");

    const auto avg = average_weights(models);
    bool convex = true;
    for (std::size_t i = 0; i < avg.values.size(); ++i) {
        double lo = models[0].values[i], hi = lo;
        for (const auto& w : models) {
            lo = std::min(lo, w.values[i]);
            hi = std::max(hi, w.values[i]);
        }
        convex = convex && avg.values[i] >= lo && avg.values[i] <= hi;
    }
    check.require(convex, "convexity bound violated");

    const std::vector<WeightVector> permuted = {models[3], models[1], models[0], models[2]};
    check.require(average_weights(permuted).values == avg.values,
                  "permutation changed the average bit pattern");

    bool rejected = false;
    try {
        average_weights({models[0], models[1]}, {0.7, 0.4});
    } catch (const ConfigError&) {
        rejected = true;
    }
    check.require(rejected, "coefficient sum violation was accepted");
    check.note("idempotence exact, convexity holds, permutation-invariant, bad sums rejected");
}

void criterion_long_tail_counts(Check& check) {
    const auto counts = class_counts({10, 500, 100.0});
    check.require(counts[0] == 500, "head count is not 500");
    check.require(counts[9] == 5, "tail count is not 5");
    bool monotone = true;
    for (std::size_t c = 1; c < counts.size(); ++c) {
        monotone = monotone && counts[c] <= counts[c - 1];
    }
    check.require(monotone, "counts are not non-increasing");

    const auto uniform = class_counts({8, 37, 1.0});
    bool all_equal = true;
    for (const auto n : uniform) {
        all_equal = all_equal && n == 37;
    }
    check.require(all_equal, "gamma=1 does not give uniform counts");

    Rng rng(61);
    int specs_checked = 0;
    bool formula_ok = true;
    while (specs_checked < 50) {
        LongTailSpec spec;
        spec.num_classes = 2 + rng.below(40);
        spec.head_count = 20 + rng.below(2000);
        spec.imbalance_ratio = 1.0 + rng.uniform() * 150.0;
        std::vector<std::size_t> got;
        try {
            got = class_counts(spec);
        } catch (const ConfigError&) {
            continue;
        }
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            const double value =
                static_cast<double>(spec.head_count) *
                std::exp(-(static_cast<double>(c) / static_cast<double>(spec.num_classes - 1)) *
                         std::log(spec.imbalance_ratio));
            formula_ok = formula_ok &&
                         static_cast<long long>(got[c]) == std::llround(value);
        }
        ++specs_checked;
    }
    check.require(formula_ok, "independent count formula disagrees");
    check.note("paper setting (C=10, n1=500, g=100) and 50 random specs verified");
}

void criterion_imbalance_trend(Check& check) {
    const auto schedule = fixture_schedule();
    double improvement_balanced = 0.0;
    double improvement_imbalanced = 0.0;
    for (const double gamma : {1.0, 10.0}) {
        auto plan = fixture_plan(gamma);
        plan.arms = {make_arm("baseline", schedule), make_arm("imwa", schedule)};
        const auto results = run_plan(plan);
        for (const auto& rr : results) {
            if (!rr.ok()) {
                check.require(false, "run failed: " + rr.arm + ": " + rr.error);
                return;
            }
        }
        const double delta =
            paired_mean_improvement(results, plan.seeds, "imwa", "baseline");
        (gamma == 1.0 ? improvement_balanced : improvement_imbalanced) = delta;
    }
    check.require(improvement_imbalanced > 0.0,
                  "mean improvement at gamma=10 is not positive: " +
                      std::to_string(improvement_imbalanced));
    check.require(improvement_imbalanced > improvement_balanced,
                  "improvement at gamma=10 (" + std::to_string(improvement_imbalanced) +
                      ") does not exceed gamma=1 (" + std::to_string(improvement_balanced) +
                      ")");
    std::ostringstream os;
    os << "mean paired improvement: gamma=1 " << improvement_balanced << ", gamma=10 "
       << improvement_imbalanced;
    check.note(os.str());
}

void criterion_double_budget_control(Check& check) {
    const auto schedule = fixture_schedule();
    auto plan = fixture_plan(10.0);
    plan.arms = {make_arm("baseline", schedule), make_arm("baseline-2x", schedule),
                 make_arm("imwa", schedule)};
    const auto results = run_plan(plan);
    for (const auto& rr : results) {
        if (!rr.ok()) {
            check.require(false, "run failed: " + rr.arm + ": " + rr.error);
            return;
        }
    }
    const double imwa_delta = paired_mean_improvement(results, plan.seeds, "imwa", "baseline");
    const double twice_delta =
        paired_mean_improvement(results, plan.seeds, "baseline-2x", "baseline");
    check.require(imwa_delta > twice_delta,
                  "IMWA improvement " + std::to_string(imwa_delta) +
                      " does not exceed the 2xT control " + std::to_string(twice_delta));
    std::ostringstream os;
    os << "mean improvement: imwa " << imwa_delta << ", baseline-2x " << twice_delta;
    check.note(os.str());
}

void criterion_diagnostics(Check& check) {
    SmallFixture fx;

    Rng rng(71);
    bool lengths_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        ImwaSchedule s;
        s.total_iterations = 1 + rng.below(5000);
        s.num_episodes = 1 + rng.below(s.total_iterations);
        const auto lengths = s.episode_lengths();
        std::size_t sum = 0;
        for (const auto l : lengths) {
            sum += l;
        }
        lengths_ok = lengths_ok && sum == s.total_iterations &&
                     lengths.size() == s.num_episodes;
    }
    check.require(lengths_ok, "episode lengths do not sum to T");

    ImwaSchedule schedule;
    schedule.total_iterations = 30;
    schedule.num_episodes = 3;
    schedule.num_models = 3;
    const std::vector<TrainerConfig> configs = {small_config(81), small_config(82),
                                                small_config(83)};
    const auto result = run_imwa(fx.init, fx.gen.train, schedule, configs, fx.gen.test);
    check.require(result.records.size() == schedule.num_episodes,
                  "episode record count != E");
    bool nonneg = true;
    for (const auto& rec : result.records) {
        for (const double d : rec.pairwise_distance) {
            nonneg = nonneg && d >= 0.0;
        }
        nonneg = nonneg && rec.pairwise_distance.size() == 3;
    }
    check.require(nonneg, "pairwise distances malformed");

    // symmetry under model reordering: the distance multiset is preserved
    std::vector<WeightVector> models;
    for (int m = 0; m < 3; ++m) {
        models.push_back(init_weights(fx.init.layout, 900 + m));
    }
    auto fwd = pairwise_l2(models);
    std::vector<WeightVector> rev(models.rbegin(), models.rend());
    auto bwd = pairwise_l2(rev);
    std::multiset<double> fs(fwd.begin(), fwd.end()), bs(bwd.begin(), bwd.end());
    check.require(fs == bs, "distance multiset changed under reordering");
    check.require(pairwise_l2({models[0], models[0]})[0] == 0.0,
                  "identical models have nonzero distance");

    ImwaSchedule single;
    single.total_iterations = 10;
    single.num_episodes = 2;
    single.num_models = 1;
    const auto solo =
        run_imwa(fx.init, fx.gen.train, single, {small_config(84)}, fx.gen.test);
    bool empty_ok = true;
    for (const auto& rec : solo.records) {
        empty_ok = empty_ok && rec.pairwise_distance.empty();
    }
    check.require(empty_ok, "M=1 recorded nonzero distances");
    check.note("100 schedules, record counts, distance symmetry verified");
}

void criterion_persistence(Check& check) {
    const auto tmp = fs::temp_directory_path() / "imwa_acceptance_persist";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const auto w = init_weights(LayerLayout::from_widths({6, 9, 4}), 4242);
    const auto ckpt = tmp / "model.ckpt";
    save_checkpoint(w, ckpt.string());
    const auto back = load_checkpoint(ckpt.string());
    check.require(back.values == w.values && back.layout == w.layout,
                  "checkpoint round trip not bit-exact");

    const char* cli = std::getenv("IMWA_CLI_BIN");
    check.require(cli != nullptr, "IMWA_CLI_BIN not set");
    if (cli == nullptr) {
        return;
    }
    const std::string flags =
        " --num-classes 3 --head-count 20 --imbalance-ratio 4 --feature-dim 4 --class-sep 3 "
        "--test-per-class 10 --layers 4,8,3 --iterations 30 --episodes 3 --num-models 2 "
        "--batch-size 8 --seeds 0,1 --arms baseline,imwa";
    const auto out_a = tmp / "a";
    const auto out_b = tmp / "b";
    int rc = std::system(
        (std::string(cli) + " run" + flags + " --out " + out_a.string() + " >/dev/null 2>&1")
            .c_str());
    check.require(rc == 0, "first CLI run failed");
    rc = std::system(
        (std::string(cli) + " run" + flags + " --out " + out_b.string() + " >/dev/null 2>&1")
            .c_str());
    check.require(rc == 0, "second CLI run failed");

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const auto res_a = slurp(out_a / "results" / "results.jsonl");
    const auto res_b = slurp(out_b / "results" / "results.jsonl");
    check.require(!res_a.empty() && res_a == res_b,
                  "results files differ across identical reruns");

    const auto student = out_a / "checkpoints" / "imwa-s0.student.ckpt";
    const auto copy = tmp / "copy.ckpt";
    fs::copy_file(student, copy);
    const auto report = tmp / "inspect.txt";
    rc = std::system((std::string(cli) + " inspect " + student.string() + " " +
                      copy.string() + " >" + report.string() + " 2>&1")
                         .c_str());
    check.require(rc == 0, "inspect failed");
    check.require(slurp(report).find("d(0,1) = 0") != std::string::npos,
                  "inspect did not report zero distance");
    fs::remove_all(tmp);
    check.note("checkpoints bit-exact, results byte-stable, inspect distance zero");
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "gradient-oracle", criterion_gradient_oracle},
        {2, "single-model-equivalence", criterion_single_model_equivalence},
        {3, "vanilla-equivalence", criterion_vanilla_equivalence},
        {4, "serial-concurrent-equivalence", criterion_serial_concurrent},
        {5, "ema-closed-form", criterion_ema_algebra},
        {6, "averaging-algebra", criterion_averaging_algebra},
        {7, "long-tail-counts", criterion_long_tail_counts},
        {8, "imbalance-trend", criterion_imbalance_trend},
        {9, "double-budget-control", criterion_double_budget_control},
        {10, "diagnostics-integrity", criterion_diagnostics},
        {11, "persistence", criterion_persistence},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Check check;
        try {
            criterion.body(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (check.failures.empty()) {
            std::printf("[PASS] %2d %-32s %s [%.1fs]\n", criterion.id,
                        criterion.name.c_str(), check.detail.c_str(), secs);
        } else {
            ++failures;
            std::printf("[FAIL] %2d %-32s [%.1fs]\n", criterion.id, criterion.name.c_str(),
                        secs);
            for (const auto& f : check.failures) {
                std::printf("       - %s\n", f.c_str());
            }
        }
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
