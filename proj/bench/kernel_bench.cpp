// Times the serial reference kernels against the OpenMP ones and a full
// training episode in both trainer modes. The pairs must be bit-identical
// (tests enforce that); this target reports what the parallel path buys.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <omp.h>

#include "imwa/data.hpp"
#include "imwa/imwa.hpp"
#include "imwa/kernels.hpp"
#include "imwa/rng.hpp"

using namespace imwa;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_reps(std::size_t reps, F&& fn) {
    const auto t0 = Clock::now();
    for (std::size_t r = 0; r < reps; ++r) {
        fn();
    }
    return seconds_since(t0) / static_cast<double>(reps);
}

void report(const std::string& name, double serial_s, double parallel_s) {
    std::printf("%-22s serial %9.3f us   parallel %9.3f us   speedup %.2fx\n", name.c_str(),
                serial_s * 1e6, parallel_s * 1e6, serial_s / parallel_s);
}

std::vector<double> random_vec(std::size_t len, Rng& rng) {
    std::vector<double> v(len);
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    return v;
}

void bench_kernels() {
    Rng rng(7);
    const std::size_t n = 256, in = 256, out = 128;
    const auto x = random_vec(n * in, rng);
    const auto w = random_vec(in * out, rng);
    const auto b = random_vec(out, rng);
    std::vector<double> y(n * out);
    std::vector<std::int32_t> labels(n);
    for (auto& l : labels) {
        l = static_cast<std::int32_t>(rng.below(out));
    }
    std::vector<double> delta(n * out), gw(in * out), gb(out), dx(n * in);

    const std::size_t reps = 50;
    report("affine_forward",
           time_reps(reps, [&] {
               kernels::ref::affine_forward(x.data(), n, in, w.data(), b.data(), out, y.data());
           }),
           time_reps(reps, [&] {
               kernels::par::affine_forward(x.data(), n, in, w.data(), b.data(), out, y.data());
           }));
    report("softmax_xent",
           time_reps(reps, [&] {
               kernels::ref::softmax_xent(y.data(), labels.data(), n, out, delta.data());
           }),
           time_reps(reps, [&] {
               kernels::par::softmax_xent(y.data(), labels.data(), n, out, delta.data());
           }));
    report("affine_grad_params",
           time_reps(reps, [&] {
               kernels::ref::affine_grad_params(x.data(), delta.data(), n, in, out, gw.data(),
                                                gb.data());
           }),
           time_reps(reps, [&] {
               kernels::par::affine_grad_params(x.data(), delta.data(), n, in, out, gw.data(),
                                                gb.data());
           }));
    report("affine_grad_input",
           time_reps(reps, [&] {
               kernels::ref::affine_grad_input(delta.data(), w.data(), x.data(), n, in, out,
                                               dx.data());
           }),
           time_reps(reps, [&] {
               kernels::par::affine_grad_input(delta.data(), w.data(), x.data(), n, in, out,
                                               dx.data());
           }));

    const std::size_t len = 1u << 20;
    auto big_w = random_vec(len, rng);
    auto big_v = random_vec(len, rng);
    const auto big_g = random_vec(len, rng);
    report("sgd_update",
           time_reps(reps, [&] {
               kernels::ref::sgd_update(big_w.data(), big_v.data(), big_g.data(), len, 0.01,
                                        0.9);
           }),
           time_reps(reps, [&] {
               kernels::par::sgd_update(big_w.data(), big_v.data(), big_g.data(), len, 0.01,
                                        0.9);
           }));
    const auto m0 = random_vec(len, rng), m1 = random_vec(len, rng), m2 = random_vec(len, rng);
    const double* models[3] = {m0.data(), m1.data(), m2.data()};
    std::vector<double> avg(len);
    report("average_models",
           time_reps(reps, [&] {
               kernels::ref::average_models(models, 3, len, nullptr, avg.data());
           }),
           time_reps(reps, [&] {
               kernels::par::average_models(models, 3, len, nullptr, avg.data());
           }));
}

void bench_episode() {
    LongTailSpec spec{10, 200, 10.0};
    const auto gen = generate_gaussian_mixture(spec, 16, 3.0, 11, 50);
    const auto layout = LayerLayout::from_widths({16, 64, 10});
    const auto init = init_weights(layout, 3);

    ImwaSchedule schedule;
    schedule.total_iterations = 400;
    schedule.num_episodes = 4;
    schedule.num_models = 2;
    std::vector<TrainerConfig> configs(2);
    configs[0] = {101, 0.05, 0.9, 32};
    configs[1] = {202, 0.05, 0.9, 32};

    ImwaOptions serial_opts;
    serial_opts.concurrent_trainers = false;
    ImwaOptions par_opts;
    par_opts.concurrent_trainers = true;

    const auto t0 = Clock::now();
    const auto a = run_imwa(init, gen.train, schedule, configs, gen.test, serial_opts);
    const double serial_s = seconds_since(t0);
    const auto t1 = Clock::now();
    const auto b = run_imwa(init, gen.train, schedule, configs, gen.test, par_opts);
    const double par_s = seconds_since(t1);
    std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %.2fx   identical %s\n",
                "episode_loop (M=2)", serial_s * 1e3, par_s * 1e3, serial_s / par_s,
                a.student.values == b.student.values ? "yes" : "NO");
}

}  // namespace

int main() {
    std::printf("OpenMP max threads: %d\n\n", omp_get_max_threads());
    bench_kernels();
    std::printf("\n");
    bench_episode();
    return 0;
}
