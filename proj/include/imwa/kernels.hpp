#pragma once

// Dense compute kernels behind the training loop. Every kernel has a serial
// reference implementation (namespace ref) and an OpenMP one (namespace par)
// that distributes the same per-element routine across threads, so the two
// produce bit-identical results for any thread count. The par/ref pairing is
// checked by tests and timed by the bench target.

#include <cstddef>
#include <cstdint>

namespace imwa::kernels {

enum class Exec { serial, parallel };

namespace ref {

// y[r,:] = x[r,:] * w + b  with x n-by-in, w in-by-out row-major, b length out.
void affine_forward(const double* x, std::size_t n, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y);

// In-place max(0, x).
void relu(double* x, std::size_t len);

// Mean softmax cross-entropy over rows plus its gradient w.r.t. the logits.
// delta[r,c] = (softmax(logits[r])[c] - onehot(labels[r])[c]) / n.
// Row losses are accumulated in row order.
double softmax_xent(const double* logits, const std::int32_t* labels, std::size_t n,
                    std::size_t c, double* delta);

// gw[i,j] = sum_r a[r,i] * delta[r,j];  gb[j] = sum_r delta[r,j].
// Inner sums run over rows in ascending order.
void affine_grad_params(const double* a, const double* delta, std::size_t n, std::size_t in,
                        std::size_t out, double* gw, double* gb);

// dx[r,i] = sum_j delta[r,j] * w[i,j], masked by the forward activation:
// entries where act[r,i] <= 0 are zeroed (ReLU backward).
void affine_grad_input(const double* delta, const double* w, const double* act, std::size_t n,
                       std::size_t in, std::size_t out, double* dx);

// v = mu * v + g;  w = w - lr * v.
void sgd_update(double* w, double* v, const double* g, std::size_t len, double lr, double mu);

// y = lam * y + (1 - lam) * x.
void ema_blend(double* y, const double* x, std::size_t len, double lam);

// Per entry: weighted sum over the m model vectors (coeffs == nullptr means
// sum then divide by m), clamped to the per-entry [min, max] envelope so the
// result is a convex combination bit-wise, and averaging identical vectors
// returns them unchanged.
void average_models(const double* const* models, std::size_t m, std::size_t len,
                    const double* coeffs, double* out);

// Squared Euclidean distance accumulated in index order.
double squared_distance(const double* a, const double* b, std::size_t len);

bool all_finite(const double* x, std::size_t len);

}  // namespace ref

namespace par {

void affine_forward(const double* x, std::size_t n, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y);
void relu(double* x, std::size_t len);
double softmax_xent(const double* logits, const std::int32_t* labels, std::size_t n,
                    std::size_t c, double* delta);
void affine_grad_params(const double* a, const double* delta, std::size_t n, std::size_t in,
                        std::size_t out, double* gw, double* gb);
void affine_grad_input(const double* delta, const double* w, const double* act, std::size_t n,
                       std::size_t in, std::size_t out, double* dx);
void sgd_update(double* w, double* v, const double* g, std::size_t len, double lr, double mu);
void ema_blend(double* y, const double* x, std::size_t len, double lam);
void average_models(const double* const* models, std::size_t m, std::size_t len,
                    const double* coeffs, double* out);
double squared_distance(const double* a, const double* b, std::size_t len);
bool all_finite(const double* x, std::size_t len);

}  // namespace par

// Dispatch helpers.
void affine_forward(Exec e, const double* x, std::size_t n, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* y);
void relu(Exec e, double* x, std::size_t len);
double softmax_xent(Exec e, const double* logits, const std::int32_t* labels, std::size_t n,
                    std::size_t c, double* delta);
void affine_grad_params(Exec e, const double* a, const double* delta, std::size_t n,
                        std::size_t in, std::size_t out, double* gw, double* gb);
void affine_grad_input(Exec e, const double* delta, const double* w, const double* act,
                       std::size_t n, std::size_t in, std::size_t out, double* dx);
void sgd_update(Exec e, double* w, double* v, const double* g, std::size_t len, double lr,
                double mu);
void ema_blend(Exec e, double* y, const double* x, std::size_t len, double lam);
void average_models(Exec e, const double* const* models, std::size_t m, std::size_t len,
                    const double* coeffs, double* out);
double squared_distance(Exec e, const double* a, const double* b, std::size_t len);
bool all_finite(Exec e, const double* x, std::size_t len);

}  // namespace imwa::kernels
