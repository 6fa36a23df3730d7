#pragma once

// Minimal MLP with hand-derived gradients: affine layers, ReLU on hidden
// layers, identity on the output, softmax cross-entropy loss, SGD with
// momentum. Weights live in one flat vector so averaging, distances and
// checkpointing operate on plain arrays.

#include <cstdint>
#include <optional>
#include <vector>

#include "imwa/kernels.hpp"

namespace imwa {

struct LayerDims {
    std::uint32_t in = 0;
    std::uint32_t out = 0;
    bool operator==(const LayerDims&) const = default;
};

struct LayerLayout {
    std::vector<LayerDims> dims;

    // Builds the layout from a width chain, e.g. {16, 64, 10} gives two layers.
    static LayerLayout from_widths(const std::vector<std::uint32_t>& widths);

    std::size_t num_layers() const { return dims.size(); }
    std::size_t input_dim() const { return dims.front().in; }
    std::size_t output_dim() const { return dims.back().out; }
    std::size_t param_count() const;

    // Offset of layer l's weight matrix within the flat value vector; the
    // bias vector follows the in*out row-major matrix entries.
    std::size_t layer_offset(std::size_t l) const;

    // Throws ConfigError on an empty chain, a zero width, or a broken chain.
    void validate() const;

    bool operator==(const LayerLayout&) const = default;
};

struct WeightVector {
    LayerLayout layout;
    std::vector<double> values;

    const double* layer_weights(std::size_t l) const {
        return values.data() + layout.layer_offset(l);
    }
    const double* layer_bias(std::size_t l) const {
        return values.data() + layout.layer_offset(l) +
               static_cast<std::size_t>(layout.dims[l].in) * layout.dims[l].out;
    }
    double* layer_weights(std::size_t l) { return values.data() + layout.layer_offset(l); }
    double* layer_bias(std::size_t l) {
        return values.data() + layout.layer_offset(l) +
               static_cast<std::size_t>(layout.dims[l].in) * layout.dims[l].out;
    }

    bool operator==(const WeightVector&) const = default;
};

struct SgdState {
    double learning_rate = 0.0;
    double momentum = 0.0;
    std::vector<double> velocity;

    static SgdState zeros(double learning_rate, double momentum, std::size_t len);
};

struct Batch {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> inputs;        // rows x dim, row-major
    std::vector<std::int32_t> labels;  // length rows, in [0, C)
};

// Glorot-uniform weights, zero biases, fully determined by the seed.
WeightVector init_weights(const LayerLayout& layout, std::uint64_t seed);

// Scratch buffers for one forward/backward pass; reused across iterations.
struct Workspace {
    std::vector<std::vector<double>> activations;  // per layer input, rows x in
    std::vector<double> logits;                    // rows x C
    std::vector<double> delta;                     // rows x width (current layer)
    std::vector<double> delta_prev;
    std::vector<double> grad;                      // flat, param_count
};

// Row-wise affine/ReLU chain. Throws ConfigError on a dimension mismatch.
std::vector<double> forward(const WeightVector& w, const Batch& batch,
                            kernels::Exec exec = kernels::Exec::parallel);

// Mean softmax cross-entropy and its analytic gradient w.r.t. every entry of
// w.values. The pure form allocates; the workspace form reuses buffers.
std::pair<double, std::vector<double>> loss_and_grad(
    const WeightVector& w, const Batch& batch, kernels::Exec exec = kernels::Exec::parallel);
double loss_and_grad(const WeightVector& w, const Batch& batch, Workspace& ws,
                     kernels::Exec exec);

// v <- momentum * v + grad;  w <- w - lr * v. Throws NumericError when the
// gradient contains a non-finite entry.
std::pair<WeightVector, SgdState> sgd_step(const WeightVector& w,
                                           const std::vector<double>& grad, SgdState state,
                                           kernels::Exec exec = kernels::Exec::parallel);
void sgd_step_inplace(WeightVector& w, const double* grad, SgdState& state, kernels::Exec exec);

// FNV-1a over the raw value bytes; used to fingerprint models in results.
std::uint64_t weight_hash(const WeightVector& w);

}  // namespace imwa
