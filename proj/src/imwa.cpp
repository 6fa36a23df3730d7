#include "imwa/imwa.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "imwa/errors.hpp"
#include "imwa/metrics.hpp"

namespace imwa {

void ImwaSchedule::validate() const {
    if (total_iterations < 1) {
        throw ConfigError("schedule: total_iterations must be >= 1");
    }
    if (num_episodes < 1 || num_episodes > total_iterations) {
        throw ConfigError("schedule: num_episodes must be in [1, total_iterations]");
    }
    if (num_models < 1) {
        throw ConfigError("schedule: num_models must be >= 1");
    }
    if (!(ema_lambda >= 0.0 && ema_lambda <= 1.0)) {
        throw ConfigError("schedule: ema_lambda must be in [0, 1]");
    }
}

std::vector<std::size_t> ImwaSchedule::episode_lengths() const {
    validate();
    const std::size_t base = total_iterations / num_episodes;
    const std::size_t extra = total_iterations % num_episodes;
    std::vector<std::size_t> lengths(num_episodes, base);
    for (std::size_t e = 0; e < extra; ++e) {
        ++lengths[e];
    }
    return lengths;
}

namespace {

void check_same_layout(const std::vector<WeightVector>& models, const char* what) {
    for (std::size_t i = 1; i < models.size(); ++i) {
        if (!(models[i].layout == models[0].layout)) {
            throw ConfigError(std::string(what) + ": model " + std::to_string(i) +
                              " layout differs from model 0");
        }
    }
}

// Canonical model order: values lexicographic, coefficient as tie key. Makes
// the floating-point summation order independent of the input permutation.
std::vector<std::size_t> canonical_order(const std::vector<const double*>& ptrs,
                                         std::size_t len, const std::vector<double>& coeffs) {
    std::vector<std::size_t> order(ptrs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t i = 0; i < len; ++i) {
            if (ptrs[a][i] < ptrs[b][i]) return true;
            if (ptrs[a][i] > ptrs[b][i]) return false;
        }
        if (!coeffs.empty() && coeffs[a] != coeffs[b]) {
            return coeffs[a] < coeffs[b];
        }
        return a < b;
    });
    return order;
}

std::vector<double> average_flat(const std::vector<const double*>& ptrs, std::size_t len,
                                 const std::vector<double>& coeffs, kernels::Exec exec) {
    const auto order = canonical_order(ptrs, len, coeffs);
    std::vector<const double*> sorted_ptrs(ptrs.size());
    std::vector<double> sorted_coeffs(coeffs.empty() ? 0 : ptrs.size());
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
        sorted_ptrs[k] = ptrs[order[k]];
        if (!coeffs.empty()) {
            sorted_coeffs[k] = coeffs[order[k]];
        }
    }
    std::vector<double> out(len);
    kernels::average_models(exec, sorted_ptrs.data(), sorted_ptrs.size(), len,
                            coeffs.empty() ? nullptr : sorted_coeffs.data(), out.data());
    return out;
}

}  // namespace

WeightVector average_weights(const std::vector<WeightVector>& models,
                             const std::vector<double>& coefficients, kernels::Exec exec) {
    if (models.empty()) {
        throw ConfigError("average: no models given");
    }
    check_same_layout(models, "average");
    if (!coefficients.empty()) {
        if (coefficients.size() != models.size()) {
            throw ConfigError("average: " + std::to_string(coefficients.size()) +
                              " coefficients for " + std::to_string(models.size()) +
                              " models");
        }
        double sum = 0.0;
        for (const double a : coefficients) {
            if (!(a >= 0.0)) {
                throw ConfigError("average: coefficients must be >= 0");
            }
            sum += a;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw ConfigError("average: coefficients sum to " + std::to_string(sum) +
                              ", expected 1");
        }
    }
    std::vector<const double*> ptrs(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        ptrs[m] = models[m].values.data();
    }
    WeightVector out;
    out.layout = models[0].layout;
    out.values = average_flat(ptrs, models[0].values.size(), coefficients, exec);
    return out;
}

EmaState ema_update(EmaState ema, const WeightVector& student, kernels::Exec exec) {
    if (!(ema.weights.layout == student.layout)) {
        throw ConfigError("ema: shadow layout differs from student layout");
    }
    kernels::ema_blend(exec, ema.weights.values.data(), student.values.data(),
                       student.values.size(), ema.lambda);
    return ema;
}

std::vector<double> pairwise_l2(const std::vector<WeightVector>& models) {
    if (models.size() < 2) {
        throw ConfigError("pairwise distances: need at least 2 models");
    }
    check_same_layout(models, "pairwise distances");
    std::vector<double> out;
    out.reserve(models.size() * (models.size() - 1) / 2);
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            out.push_back(std::sqrt(kernels::ref::squared_distance(
                models[i].values.data(), models[j].values.data(), models[i].values.size())));
        }
    }
    return out;
}

namespace {

// One model's persistent training context across episodes.
struct TrainerState {
    WeightVector weights;
    std::optional<EmaState> ema;
    LoaderState loader;
    SgdState opt;
    Workspace ws;

    explicit TrainerState(LoaderState l) : loader(std::move(l)) {}
};

void train_steps(TrainerState& t, const Dataset& dataset, std::size_t iterations,
                 kernels::Exec exec) {
    for (std::size_t it = 0; it < iterations; ++it) {
        const Batch batch = next_batch(dataset, t.loader);
        loss_and_grad(t.weights, batch, t.ws, exec);
        sgd_step_inplace(t.weights, t.ws.grad.data(), t.opt, exec);
        if (t.ema.has_value()) {
            kernels::ema_blend(exec, t.ema->weights.values.data(), t.weights.values.data(),
                               t.weights.values.size(), t.ema->lambda);
        }
    }
    if (!kernels::all_finite(exec, t.weights.values.data(), t.weights.values.size())) {
        throw NumericError("training produced non-finite weights");
    }
}

// Co-resident weight buffers owned by the episode loop (per-episode record
// copies excluded). All acquisitions of an episode happen before its
// releases, so the peak is deterministic with concurrent trainers too.
struct CopyCounter {
    std::atomic<std::size_t> live{0};
    std::atomic<std::size_t> peak{0};

    void acquire() {
        const std::size_t now = live.fetch_add(1) + 1;
        std::size_t expected = peak.load();
        while (now > expected && !peak.compare_exchange_weak(expected, now)) {
        }
    }
    void release() { live.fetch_sub(1); }
};

}  // namespace

TrainEpisodeResult train_episode(const WeightVector& weights,
                                 const std::optional<EmaState>& ema, const Dataset& dataset,
                                 const TrainerConfig& config, const LoaderState& loader,
                                 std::size_t iterations,
                                 const std::optional<SgdState>& initial_opt,
                                 kernels::Exec exec) {
    if (iterations < 1) {
        throw ConfigError("train_episode: iterations must be >= 1");
    }
    if (loader.batch_size != config.batch_size) {
        throw ConfigError("train_episode: loader batch size differs from trainer config");
    }
    TrainerState t(loader);
    t.weights = weights;
    t.ema = ema;
    t.opt = initial_opt.has_value()
                ? *initial_opt
                : SgdState::zeros(config.learning_rate, config.momentum,
                                  weights.values.size());
    if (t.opt.velocity.size() != weights.values.size()) {
        throw ConfigError("train_episode: optimizer state length mismatch");
    }
    train_steps(t, dataset, iterations, exec);
    return {std::move(t.weights), std::move(t.ema), std::move(t.loader), std::move(t.opt)};
}

ImwaResult run_imwa(const WeightVector& init, const Dataset& dataset,
                    const ImwaSchedule& schedule, const std::vector<TrainerConfig>& configs,
                    const Dataset& eval_set, const ImwaOptions& options) {
    schedule.validate();
    init.layout.validate();
    if (configs.size() != schedule.num_models) {
        throw ConfigError("run: " + std::to_string(configs.size()) + " trainer configs for " +
                          std::to_string(schedule.num_models) + " models");
    }
    if (init.layout.input_dim() != dataset.feature_dim) {
        throw ConfigError("run: model input dim does not match dataset feature dim");
    }
    const std::size_t m_count = schedule.num_models;
    const std::size_t param_len = init.values.size();
    const auto lengths = schedule.episode_lengths();

    CopyCounter copies;
    WeightVector current = init;  // theta^(e-1)
    copies.acquire();
    std::optional<WeightVector> current_ema;
    if (schedule.use_ema) {
        current_ema = init;  // omega^(0) = theta^(0)
        copies.acquire();
    }

    std::vector<TrainerState> trainers;
    trainers.reserve(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        trainers.emplace_back(
            LoaderState(dataset.size(), configs[m].data_seed, configs[m].batch_size));
    }
    std::optional<std::vector<double>> carried_velocity;  // averaged across models

    ImwaResult result;
    result.records.reserve(schedule.num_episodes);

    for (std::size_t e = 0; e < schedule.num_episodes; ++e) {
        const auto t_start = std::chrono::steady_clock::now();
        // In probe mode (no re-assignment) trainers keep their own state
        // after the first episode and the average is recorded only.
        const bool fresh_assign = options.reassign_average || e == 0;

        auto run_one = [&](std::size_t m) {
            TrainerState& t = trainers[m];
            if (fresh_assign) {
                t.weights = current;
                copies.acquire();
                if (schedule.use_ema) {
                    t.ema = EmaState{*current_ema, schedule.ema_lambda};
                    copies.acquire();
                }
                if (options.carry_momentum && carried_velocity.has_value()) {
                    t.opt = SgdState{configs[m].learning_rate, configs[m].momentum,
                                     *carried_velocity};
                } else {
                    t.opt = SgdState::zeros(configs[m].learning_rate, configs[m].momentum,
                                            param_len);
                }
            }
            const kernels::Exec exec =
                options.concurrent_trainers ? kernels::Exec::serial : options.kernel_exec;
            train_steps(t, dataset, lengths[e], exec);
        };

        if (options.concurrent_trainers && m_count > 1) {
            std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
            for (std::size_t m = 0; m < m_count; ++m) {
                try {
                    run_one(m);
                } catch (...) {
#pragma omp critical
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
            if (failure) {
                std::rethrow_exception(failure);
            }
        } else {
            for (std::size_t m = 0; m < m_count; ++m) {
                run_one(m);
            }
        }

        // theta^(e-1) has been cloned into every trainer; only the trained
        // weights are needed from here on.
        if (options.reassign_average) {
            current.values.clear();
            current.values.shrink_to_fit();
            copies.release();
            if (current_ema.has_value()) {
                current_ema->values.clear();
                current_ema->values.shrink_to_fit();
                copies.release();
            }
        }

        EpisodeRecord record;
        record.episode = e + 1;
        std::vector<const double*> ptrs(m_count);
        for (std::size_t m = 0; m < m_count; ++m) {
            ptrs[m] = trainers[m].weights.values.data();
        }
        if (m_count >= 2) {
            record.pairwise_distance.reserve(m_count * (m_count - 1) / 2);
            for (std::size_t i = 0; i < m_count; ++i) {
                for (std::size_t j = i + 1; j < m_count; ++j) {
                    record.pairwise_distance.push_back(std::sqrt(
                        kernels::ref::squared_distance(ptrs[i], ptrs[j], param_len)));
                }
            }
        }
        record.averaged_weights.layout = init.layout;
        record.averaged_weights.values = average_flat(ptrs, param_len, {}, options.kernel_exec);
        if (schedule.use_ema) {
            std::vector<const double*> ema_ptrs(m_count);
            for (std::size_t m = 0; m < m_count; ++m) {
                ema_ptrs[m] = trainers[m].ema->weights.values.data();
            }
            WeightVector avg_ema;
            avg_ema.layout = init.layout;
            avg_ema.values = average_flat(ema_ptrs, param_len, {}, options.kernel_exec);
            record.averaged_ema = std::move(avg_ema);
        }

        record.averaged_top1 =
            evaluate(record.averaged_weights, eval_set, dataset.class_counts,
                     options.kernel_exec)
                .top1;
        if (record.averaged_ema.has_value()) {
            record.averaged_ema_top1 = evaluate(*record.averaged_ema, eval_set,
                                                dataset.class_counts, options.kernel_exec)
                                           .top1;
        }
        record.individual_top1.reserve(m_count);
        for (const auto& t : trainers) {
            record.individual_top1.push_back(
                evaluate(t.weights, eval_set, dataset.class_counts, options.kernel_exec).top1);
        }

        if (options.carry_momentum && options.reassign_average) {
            std::vector<const double*> vel_ptrs(m_count);
            for (std::size_t m = 0; m < m_count; ++m) {
                vel_ptrs[m] = trainers[m].opt.velocity.data();
            }
            carried_velocity = average_flat(vel_ptrs, param_len, {}, options.kernel_exec);
        }

        current = record.averaged_weights;
        if (schedule.use_ema) {
            current_ema = *record.averaged_ema;
        }
        if (options.reassign_average) {
            copies.acquire();  // current holds a fresh buffer again
            if (schedule.use_ema) {
                copies.acquire();
            }
            for (auto& t : trainers) {
                t.weights.values.clear();
                t.weights.values.shrink_to_fit();
                copies.release();
                if (t.ema.has_value()) {
                    t.ema.reset();
                    copies.release();
                }
            }
        }

        record.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.records.push_back(std::move(record));
    }

    result.student = std::move(current);
    if (schedule.use_ema) {
        result.ema = std::move(current_ema);
    }
    result.peak_model_copies = copies.peak.load();
    return result;
}

ImwaResult run_vanilla_mwa(const WeightVector& init, const Dataset& dataset,
                           ImwaSchedule schedule, const std::vector<TrainerConfig>& configs,
                           const Dataset& eval_set, const ImwaOptions& options) {
    schedule.num_episodes = 1;
    return run_imwa(init, dataset, schedule, configs, eval_set, options);
}

}  // namespace imwa
