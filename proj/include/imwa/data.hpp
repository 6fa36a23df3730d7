#pragma once

// Long-tailed dataset construction and per-model data loading. Per-class
// counts decay exponentially from the head count by the imbalance ratio;
// loaders draw a fresh permutation per epoch from their own seeded stream,
// so each model sees its own sample order.

#include <cstdint>
#include <string>
#include <vector>

#include "imwa/nn.hpp"
#include "imwa/rng.hpp"

namespace imwa {

struct LongTailSpec {
    std::size_t num_classes = 2;     // C >= 2
    std::size_t head_count = 1;      // n1 >= 1
    double imbalance_ratio = 1.0;    // gamma = n1 / nC, >= 1

    void validate() const;
};

struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<double> features;       // size() x feature_dim, row-major
    std::vector<std::int32_t> labels;   // length size()
    std::vector<std::size_t> class_counts;

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return class_counts.size(); }
};

// counts[c] = round(n1 * gamma^(-c / (C-1))) for c in [0, C). Non-increasing,
// counts[0] = n1, counts[C-1] = round(n1 / gamma). Throws ConfigError when a
// class would round to zero samples.
std::vector<std::size_t> class_counts(const LongTailSpec& spec);

struct GeneratedData {
    Dataset train;
    Dataset test;                       // balanced, test_per_class per class
    std::vector<double> class_means;    // C x d, row-major
};

// Unit-variance Gaussian blobs around seeded class means with pairwise mean
// distance >= class_sep. The test split draws from an independent stream of
// the same seed.
GeneratedData generate_gaussian_mixture(const LongTailSpec& spec, std::size_t feature_dim,
                                        double class_sep, std::uint64_t seed,
                                        std::size_t test_per_class = 200);

// Numeric feature columns plus one integer label column (negative index
// counts from the end; -1 is the last column). Labels must cover [0, C)
// contiguously. Row order is preserved.
Dataset ingest_csv(const std::string& path, int label_column = -1);

// Mirror of ingest_csv: header row, features at full round-trip precision,
// label in the last column.
void export_csv(const Dataset& dataset, const std::string& path);

struct LoaderState {
    Rng rng;
    std::vector<std::uint32_t> order;  // current epoch permutation
    std::size_t cursor = 0;
    std::size_t batch_size = 0;

    LoaderState(std::size_t dataset_size, std::uint64_t seed, std::size_t batch_size);

    bool operator==(const LoaderState&) const = default;
};

// Assembles the next batch, drawing a fresh permutation whenever the current
// one is exhausted (a batch may span the boundary, so every epoch visits
// every sample exactly once). Advances the state in place; the caller owns it.
Batch next_batch(const Dataset& dataset, LoaderState& state);

}  // namespace imwa
