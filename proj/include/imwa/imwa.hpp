#pragma once

// Iterative model weight averaging. Training is split into episodes; in each
// episode M models start from the same weights, train independently for the
// episode's iteration budget (each with its own data order), and are averaged
// into the initialization of the next episode. Optionally every model keeps
// an EMA shadow that is averaged and re-assigned the same way, in which case
// the shadow of the last episode is the final model.

#include <cstdint>
#include <optional>
#include <vector>

#include "imwa/data.hpp"
#include "imwa/nn.hpp"

namespace imwa {

struct ImwaSchedule {
    std::size_t total_iterations = 1;  // T
    std::size_t num_episodes = 1;      // E
    std::size_t num_models = 1;        // M
    double ema_lambda = 0.999;
    bool use_ema = false;

    void validate() const;

    // First (T mod E) episodes get one extra iteration; lengths sum to T.
    std::vector<std::size_t> episode_lengths() const;
};

struct TrainerConfig {
    std::uint64_t data_seed = 0;
    double learning_rate = 0.01;
    double momentum = 0.0;
    std::size_t batch_size = 1;
};

struct EmaState {
    WeightVector weights;
    double lambda = 0.999;
};

struct EpisodeRecord {
    std::size_t episode = 0;  // 1-based
    WeightVector averaged_weights;
    std::optional<WeightVector> averaged_ema;
    std::vector<double> pairwise_distance;  // pre-average, pairs (i, j) with i < j
    double averaged_top1 = 0.0;
    std::optional<double> averaged_ema_top1;
    std::vector<double> individual_top1;  // pre-average, per model
    double wall_seconds = 0.0;
};

struct ImwaOptions {
    // Train the M models of an episode in parallel. Must be (and is)
    // bit-identical to the serial reference mode.
    bool concurrent_trainers = false;
    // Average optimizer velocity across models at episode boundaries instead
    // of resetting it to zero.
    bool carry_momentum = false;
    // When false, trained models keep their own weights across episodes and
    // the per-episode average is recorded purely as a diagnostic probe.
    bool reassign_average = true;
    kernels::Exec kernel_exec = kernels::Exec::parallel;
};

struct ImwaResult {
    WeightVector student;             // averaged weights of the last episode
    std::optional<WeightVector> ema;  // averaged EMA weights of the last episode
    std::vector<EpisodeRecord> records;
    std::size_t peak_model_copies = 0;  // peak co-resident training-loop weight buffers

    const WeightVector& final_model() const { return ema.has_value() ? *ema : student; }
};

// Entry-wise convex combination. Models are first sorted into a canonical
// order (values lexicographic, coefficient as tie key) so the result is
// bit-exactly invariant to input permutation; each output entry is clamped
// to the per-entry [min, max] envelope, which also makes averaging identical
// models exact. Default coefficients are 1/M (sum first, scale once).
// Coefficients must be >= 0 and sum to 1 within 1e-12.
WeightVector average_weights(const std::vector<WeightVector>& models,
                             const std::vector<double>& coefficients = {},
                             kernels::Exec exec = kernels::Exec::parallel);

// w <- lambda * w + (1 - lambda) * student.
EmaState ema_update(EmaState ema, const WeightVector& student,
                    kernels::Exec exec = kernels::Exec::parallel);

// Euclidean distances over the flat values for every unordered pair, ordered
// (0,1), (0,2), ..., (1,2), ... Requires >= 2 models with equal layouts.
std::vector<double> pairwise_l2(const std::vector<WeightVector>& models);

struct TrainEpisodeResult {
    WeightVector weights;
    std::optional<EmaState> ema;
    LoaderState loader;
    SgdState opt;
};

// Runs `iterations` steps of (next batch -> loss/grad -> SGD step), applying
// the EMA update after every step when a shadow is present. The returned
// loader and optimizer state allow seamless continuation: two chained calls
// are bit-identical to one call with the combined iteration count.
TrainEpisodeResult train_episode(const WeightVector& weights,
                                 const std::optional<EmaState>& ema, const Dataset& dataset,
                                 const TrainerConfig& config, const LoaderState& loader,
                                 std::size_t iterations,
                                 const std::optional<SgdState>& initial_opt = {},
                                 kernels::Exec exec = kernels::Exec::parallel);

// The full episode loop (initialize -> train M models -> average -> re-assign).
// eval_set is used for the per-episode metric snapshots; group accuracy uses
// the training set's class counts.
ImwaResult run_imwa(const WeightVector& init, const Dataset& dataset,
                    const ImwaSchedule& schedule, const std::vector<TrainerConfig>& configs,
                    const Dataset& eval_set, const ImwaOptions& options = {});

// Train-once-average-once: run_imwa with the episode count forced to 1.
ImwaResult run_vanilla_mwa(const WeightVector& init, const Dataset& dataset,
                           ImwaSchedule schedule, const std::vector<TrainerConfig>& configs,
                           const Dataset& eval_set, const ImwaOptions& options = {});

}  // namespace imwa
