#include "imwa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace imwa::kernels {

// Per-element routines shared by the ref and par variants. Both variants run
// exactly these instruction sequences; only the loop scheduling differs.
namespace detail {

inline void forward_row(const double* xr, std::size_t in, const double* w, const double* b,
                        std::size_t out, double* yr) {
    for (std::size_t j = 0; j < out; ++j) {
        yr[j] = b[j];
    }
    for (std::size_t k = 0; k < in; ++k) {
        const double xv = xr[k];
        const double* wk = w + k * out;
        for (std::size_t j = 0; j < out; ++j) {
            yr[j] += xv * wk[j];
        }
    }
}

inline double xent_row(const double* logit_row, std::int32_t label, std::size_t c,
                       double inv_n, double* delta_row) {
    double max_logit = logit_row[0];
    for (std::size_t j = 1; j < c; ++j) {
        max_logit = std::max(max_logit, logit_row[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        denom += std::exp(logit_row[j] - max_logit);
    }
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(logit_row[j] - max_logit) / denom;
        const double target = (static_cast<std::size_t>(label) == j) ? 1.0 : 0.0;
        delta_row[j] = (p - target) * inv_n;
    }
    return -(logit_row[label] - max_logit - log_denom);
}

// One (i, j) entry of the weight gradient; the row sum runs in index order.
inline double grad_w_entry(const double* a, const double* delta, std::size_t n, std::size_t in,
                           std::size_t out, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        acc += a[r * in + i] * delta[r * out + j];
    }
    return acc;
}

inline double grad_b_entry(const double* delta, std::size_t n, std::size_t out, std::size_t j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        acc += delta[r * out + j];
    }
    return acc;
}

inline void grad_input_row(const double* delta_row, const double* w, const double* act_row,
                           std::size_t in, std::size_t out, double* dx_row) {
    for (std::size_t i = 0; i < in; ++i) {
        if (act_row[i] > 0.0) {
            const double* wi = w + i * out;
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) {
                acc += delta_row[j] * wi[j];
            }
            dx_row[i] = acc;
        } else {
            dx_row[i] = 0.0;
        }
    }
}

inline void sgd_entry(double* w, double* v, const double* g, std::size_t i, double lr,
                      double mu) {
    v[i] = mu * v[i] + g[i];
    w[i] -= lr * v[i];
}

inline double average_entry(const double* const* models, std::size_t m, const double* coeffs,
                            std::size_t i) {
    double lo = models[0][i];
    double hi = lo;
    for (std::size_t k = 1; k < m; ++k) {
        lo = std::min(lo, models[k][i]);
        hi = std::max(hi, models[k][i]);
    }
    double acc = 0.0;
    if (coeffs == nullptr) {
        for (std::size_t k = 0; k < m; ++k) {
            acc += models[k][i];
        }
        acc /= static_cast<double>(m);
    } else {
        for (std::size_t k = 0; k < m; ++k) {
            acc += coeffs[k] * models[k][i];
        }
    }
    return std::clamp(acc, lo, hi);
}

}  // namespace detail

// ------------------------------ serial reference ------------------------------

namespace ref {

void affine_forward(const double* x, std::size_t n, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y) {
    for (std::size_t r = 0; r < n; ++r) {
        detail::forward_row(x + r * in, in, w, b, out, y + r * out);
    }
}

void relu(double* x, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
        x[i] = std::max(0.0, x[i]);
    }
}

double softmax_xent(const double* logits, const std::int32_t* labels, std::size_t n,
                    std::size_t c, double* delta) {
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        loss += detail::xent_row(logits + r * c, labels[r], c, inv_n, delta + r * c);
    }
    return loss * inv_n;
}

void affine_grad_params(const double* a, const double* delta, std::size_t n, std::size_t in,
                        std::size_t out, double* gw, double* gb) {
    for (std::size_t i = 0; i < in; ++i) {
        for (std::size_t j = 0; j < out; ++j) {
            gw[i * out + j] = detail::grad_w_entry(a, delta, n, in, out, i, j);
        }
    }
    for (std::size_t j = 0; j < out; ++j) {
        gb[j] = detail::grad_b_entry(delta, n, out, j);
    }
}

void affine_grad_input(const double* delta, const double* w, const double* act, std::size_t n,
                       std::size_t in, std::size_t out, double* dx) {
    for (std::size_t r = 0; r < n; ++r) {
        detail::grad_input_row(delta + r * out, w, act + r * in, in, out, dx + r * in);
    }
}

void sgd_update(double* w, double* v, const double* g, std::size_t len, double lr, double mu) {
    for (std::size_t i = 0; i < len; ++i) {
        detail::sgd_entry(w, v, g, i, lr, mu);
    }
}

void ema_blend(double* y, const double* x, std::size_t len, double lam) {
    for (std::size_t i = 0; i < len; ++i) {
        y[i] = lam * y[i] + (1.0 - lam) * x[i];
    }
}

void average_models(const double* const* models, std::size_t m, std::size_t len,
                    const double* coeffs, double* out) {
    for (std::size_t i = 0; i < len; ++i) {
        out[i] = detail::average_entry(models, m, coeffs, i);
    }
}

double squared_distance(const double* a, const double* b, std::size_t len) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

bool all_finite(const double* x, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
        if (!std::isfinite(x[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace ref

// ------------------------------ OpenMP variants ------------------------------

namespace par {

void affine_forward(const double* x, std::size_t n, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y) {
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < n; ++r) {
        detail::forward_row(x + r * in, in, w, b, out, y + r * out);
    }
}

void relu(double* x, std::size_t len) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < len; ++i) {
        x[i] = std::max(0.0, x[i]);
    }
}

double softmax_xent(const double* logits, const std::int32_t* labels, std::size_t n,
                    std::size_t c, double* delta) {
    const double inv_n = 1.0 / static_cast<double>(n);
    // Row losses are computed in parallel but reduced serially in row order,
    // keeping the total bit-identical to the reference.
    double loss = 0.0;
    constexpr std::size_t kStack = 512;
    double stack_losses[kStack];
    std::vector<double> heap_losses;
    double* row_loss = stack_losses;
    if (n > kStack) {
        heap_losses.resize(n);
        row_loss = heap_losses.data();
    }
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < n; ++r) {
        row_loss[r] = detail::xent_row(logits + r * c, labels[r], c, inv_n, delta + r * c);
    }
    for (std::size_t r = 0; r < n; ++r) {
        loss += row_loss[r];
    }
    return loss * inv_n;
}

void affine_grad_params(const double* a, const double* delta, std::size_t n, std::size_t in,
                        std::size_t out, double* gw, double* gb) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < in; ++i) {
        for (std::size_t j = 0; j < out; ++j) {
            gw[i * out + j] = detail::grad_w_entry(a, delta, n, in, out, i, j);
        }
    }
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < out; ++j) {
        gb[j] = detail::grad_b_entry(delta, n, out, j);
    }
}

void affine_grad_input(const double* delta, const double* w, const double* act, std::size_t n,
                       std::size_t in, std::size_t out, double* dx) {
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < n; ++r) {
        detail::grad_input_row(delta + r * out, w, act + r * in, in, out, dx + r * in);
    }
}

void sgd_update(double* w, double* v, const double* g, std::size_t len, double lr, double mu) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < len; ++i) {
        detail::sgd_entry(w, v, g, i, lr, mu);
    }
}

void ema_blend(double* y, const double* x, std::size_t len, double lam) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < len; ++i) {
        y[i] = lam * y[i] + (1.0 - lam) * x[i];
    }
}

void average_models(const double* const* models, std::size_t m, std::size_t len,
                    const double* coeffs, double* out) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < len; ++i) {
        out[i] = detail::average_entry(models, m, coeffs, i);
    }
}

double squared_distance(const double* a, const double* b, std::size_t len) {
    // Serial: the accumulation order is part of the contract.
    return ref::squared_distance(a, b, len);
}

bool all_finite(const double* x, std::size_t len) {
    bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
    for (std::size_t i = 0; i < len; ++i) {
        ok = ok && std::isfinite(x[i]);
    }
    return ok;
}

}  // namespace par

// ------------------------------ dispatch ------------------------------

void affine_forward(Exec e, const double* x, std::size_t n, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y) {
    e == Exec::serial ? ref::affine_forward(x, n, in, w, b, out, y)
                      : par::affine_forward(x, n, in, w, b, out, y);
}

void relu(Exec e, double* x, std::size_t len) {
    e == Exec::serial ? ref::relu(x, len) : par::relu(x, len);
}

double softmax_xent(Exec e, const double* logits, const std::int32_t* labels, std::size_t n,
                    std::size_t c, double* delta) {
    return e == Exec::serial ? ref::softmax_xent(logits, labels, n, c, delta)
                             : par::softmax_xent(logits, labels, n, c, delta);
}

void affine_grad_params(Exec e, const double* a, const double* delta, std::size_t n,
                        std::size_t in, std::size_t out, double* gw, double* gb) {
    e == Exec::serial ? ref::affine_grad_params(a, delta, n, in, out, gw, gb)
                      : par::affine_grad_params(a, delta, n, in, out, gw, gb);
}

void affine_grad_input(Exec e, const double* delta, const double* w, const double* act,
                       std::size_t n, std::size_t in, std::size_t out, double* dx) {
    e == Exec::serial ? ref::affine_grad_input(delta, w, act, n, in, out, dx)
                      : par::affine_grad_input(delta, w, act, n, in, out, dx);
}

void sgd_update(Exec e, double* w, double* v, const double* g, std::size_t len, double lr,
                double mu) {
    e == Exec::serial ? ref::sgd_update(w, v, g, len, lr, mu)
                      : par::sgd_update(w, v, g, len, lr, mu);
}

void ema_blend(Exec e, double* y, const double* x, std::size_t len, double lam) {
    e == Exec::serial ? ref::ema_blend(y, x, len, lam) : par::ema_blend(y, x, len, lam);
}

void average_models(Exec e, const double* const* models, std::size_t m, std::size_t len,
                    const double* coeffs, double* out) {
    e == Exec::serial ? ref::average_models(models, m, len, coeffs, out)
                      : par::average_models(models, m, len, coeffs, out);
}

double squared_distance(Exec e, const double* a, const double* b, std::size_t len) {
    return e == Exec::serial ? ref::squared_distance(a, b, len)
                             : par::squared_distance(a, b, len);
}

bool all_finite(Exec e, const double* x, std::size_t len) {
    return e == Exec::serial ? ref::all_finite(x, len) : par::all_finite(x, len);
}

}  // namespace imwa::kernels
