#include "imwa/nn.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "imwa/errors.hpp"
#include "imwa/rng.hpp"

namespace imwa {

LayerLayout LayerLayout::from_widths(const std::vector<std::uint32_t>& widths) {
    if (widths.size() < 2) {
        throw ConfigError("layer widths: need at least an input and an output width");
    }
    LayerLayout layout;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layout.dims.push_back({widths[i], widths[i + 1]});
    }
    layout.validate();
    return layout;
}

std::size_t LayerLayout::param_count() const {
    std::size_t total = 0;
    for (const auto& d : dims) {
        total += static_cast<std::size_t>(d.in) * d.out + d.out;
    }
    return total;
}

std::size_t LayerLayout::layer_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) {
        off += static_cast<std::size_t>(dims[i].in) * dims[i].out + dims[i].out;
    }
    return off;
}

void LayerLayout::validate() const {
    if (dims.empty()) {
        throw ConfigError("layout: at least one layer required");
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i].in == 0 || dims[i].out == 0) {
            throw ConfigError("layout: layer " + std::to_string(i) + " has a zero width");
        }
        if (i + 1 < dims.size() && dims[i].out != dims[i + 1].in) {
            throw ConfigError("layout: layer " + std::to_string(i) + " out width " +
                              std::to_string(dims[i].out) + " does not match layer " +
                              std::to_string(i + 1) + " in width " +
                              std::to_string(dims[i + 1].in));
        }
    }
}

SgdState SgdState::zeros(double learning_rate, double momentum, std::size_t len) {
    SgdState s;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    s.velocity.assign(len, 0.0);
    return s;
}

WeightVector init_weights(const LayerLayout& layout, std::uint64_t seed) {
    layout.validate();
    WeightVector w;
    w.layout = layout;
    w.values.assign(layout.param_count(), 0.0);
    Rng rng(seed);
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        const auto d = layout.dims[l];
        const double bound = std::sqrt(6.0 / (static_cast<double>(d.in) + d.out));
        double* mat = w.layer_weights(l);
        const std::size_t count = static_cast<std::size_t>(d.in) * d.out;
        for (std::size_t i = 0; i < count; ++i) {
            mat[i] = rng.uniform(-bound, bound);
        }
        // biases stay zero
    }
    return w;
}

namespace {

void check_batch(const WeightVector& w, const Batch& batch) {
    if (batch.rows == 0) {
        throw ConfigError("batch: empty");
    }
    if (batch.dim != w.layout.input_dim()) {
        throw ConfigError("batch: feature dim " + std::to_string(batch.dim) +
                          " does not match model input dim " +
                          std::to_string(w.layout.input_dim()));
    }
    if (batch.inputs.size() != batch.rows * batch.dim ||
        batch.labels.size() != batch.rows) {
        throw ConfigError("batch: inconsistent buffer sizes");
    }
    const std::size_t c = w.layout.output_dim();
    for (const auto label : batch.labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= c) {
            throw ConfigError("batch: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(c) + ")");
        }
    }
}

void ensure_workspace(const WeightVector& w, const Batch& batch, Workspace& ws) {
    const auto& layout = w.layout;
    const std::size_t layers = layout.num_layers();
    ws.activations.resize(layers);
    std::size_t max_width = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        ws.activations[l].resize(batch.rows * layout.dims[l].in);
        max_width = std::max<std::size_t>(max_width, layout.dims[l].in);
        max_width = std::max<std::size_t>(max_width, layout.dims[l].out);
    }
    ws.logits.resize(batch.rows * layout.output_dim());
    ws.delta.resize(batch.rows * max_width);
    ws.delta_prev.resize(batch.rows * max_width);
    ws.grad.resize(layout.param_count());
}

// Runs the affine/ReLU chain, storing each layer's input in ws.activations.
void forward_into(const WeightVector& w, const Batch& batch, Workspace& ws,
                  kernels::Exec exec) {
    const auto& layout = w.layout;
    const std::size_t layers = layout.num_layers();
    ws.activations[0].assign(batch.inputs.begin(), batch.inputs.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const auto d = layout.dims[l];
        double* dst = (l + 1 < layers) ? ws.activations[l + 1].data() : ws.logits.data();
        kernels::affine_forward(exec, ws.activations[l].data(), batch.rows, d.in,
                                w.layer_weights(l), w.layer_bias(l), d.out, dst);
        if (l + 1 < layers) {
            kernels::relu(exec, dst, batch.rows * d.out);
        }
    }
}

}  // namespace

std::vector<double> forward(const WeightVector& w, const Batch& batch, kernels::Exec exec) {
    check_batch(w, batch);
    Workspace ws;
    ensure_workspace(w, batch, ws);
    forward_into(w, batch, ws, exec);
    return ws.logits;
}

double loss_and_grad(const WeightVector& w, const Batch& batch, Workspace& ws,
                     kernels::Exec exec) {
    check_batch(w, batch);
    ensure_workspace(w, batch, ws);
    forward_into(w, batch, ws, exec);

    const auto& layout = w.layout;
    const std::size_t c = layout.output_dim();
    const double loss = kernels::softmax_xent(exec, ws.logits.data(), batch.labels.data(),
                                              batch.rows, c, ws.delta.data());

    for (std::size_t l = layout.num_layers(); l-- > 0;) {
        const auto d = layout.dims[l];
        double* gw = ws.grad.data() + layout.layer_offset(l);
        double* gb = gw + static_cast<std::size_t>(d.in) * d.out;
        kernels::affine_grad_params(exec, ws.activations[l].data(), ws.delta.data(),
                                    batch.rows, d.in, d.out, gw, gb);
        if (l > 0) {
            // The stored layer input doubles as the ReLU mask.
            kernels::affine_grad_input(exec, ws.delta.data(), w.layer_weights(l),
                                       ws.activations[l].data(), batch.rows, d.in, d.out,
                                       ws.delta_prev.data());
            std::swap(ws.delta, ws.delta_prev);
        }
    }
    return loss;
}

std::pair<double, std::vector<double>> loss_and_grad(const WeightVector& w, const Batch& batch,
                                                     kernels::Exec exec) {
    Workspace ws;
    const double loss = loss_and_grad(w, batch, ws, exec);
    return {loss, std::move(ws.grad)};
}

void sgd_step_inplace(WeightVector& w, const double* grad, SgdState& state,
                      kernels::Exec exec) {
    const std::size_t len = w.values.size();
    if (state.velocity.size() != len) {
        throw ConfigError("sgd: velocity length " + std::to_string(state.velocity.size()) +
                          " does not match weight length " + std::to_string(len));
    }
    if (!kernels::all_finite(exec, grad, len)) {
        throw NumericError("sgd: non-finite gradient, training aborted");
    }
    kernels::sgd_update(exec, w.values.data(), state.velocity.data(), grad, len,
                        state.learning_rate, state.momentum);
}

std::pair<WeightVector, SgdState> sgd_step(const WeightVector& w,
                                           const std::vector<double>& grad, SgdState state,
                                           kernels::Exec exec) {
    if (grad.size() != w.values.size()) {
        throw ConfigError("sgd: gradient length does not match weight length");
    }
    WeightVector next = w;
    sgd_step_inplace(next, grad.data(), state, exec);
    return {std::move(next), std::move(state)};
}

std::uint64_t weight_hash(const WeightVector& w) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const double v : w.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFFull;
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

}  // namespace imwa
