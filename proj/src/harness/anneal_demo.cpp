#include "noisy/harness/anneal_demo.hpp"

#include "noisy/training.hpp"

#include <cmath>

namespace noisy::harness {

double demo_objective(double x) { return 0.1 * x * x + std::sin(3.0 * x); }

double demo_gradient(double x) { return 0.2 * x + 3.0 * std::cos(3.0 * x); }

double demo_global_minimum() {
    double x = -0.5;
    for (int i = 0; i < 50; ++i) {
        const double hess = 0.2 - 9.0 * std::sin(3.0 * x);
        x -= demo_gradient(x) / hess;
    }
    return x;
}

bool in_global_basin(double x) {
    static const double x_star = demo_global_minimum();
    return std::abs(x - x_star) < 1e-3;
}

double noisy_descent(double x0, const AnnealDemoSettings& demo, bool annealed, RngStream& rng,
                     std::vector<double>* c_trace) {
    double x = x0;
    for (std::size_t t = 0; t < demo.steps; ++t) {
        const double c = annealed ? anneal_value(demo.schedule, t) : 0.0;
        if (c_trace) c_trace->push_back(c);
        const double noise = c > 0.0 ? c * rng.normal() : 0.0;
        x -= demo.learning_rate * (demo_gradient(x) + noise);
    }
    for (std::size_t t = 0; t < demo.settle_steps; ++t) {
        x -= demo.learning_rate * demo_gradient(x);
    }
    return x;
}

BasinStats run_anneal_demo(const AnnealDemoSettings& demo, std::uint64_t seed) {
    RngStream starts(seed, 0x737472);
    BasinStats stats;
    stats.runs = demo.runs;
    for (std::size_t r = 0; r < demo.runs; ++r) {
        const double x0 = starts.uniform(demo.start_lo, demo.start_hi);
        RngStream noise(seed, 0x10000 + r);
        if (in_global_basin(noisy_descent(x0, demo, true, noise))) ++stats.annealed_hits;
        if (in_global_basin(noisy_descent(x0, demo, false, noise))) ++stats.plain_hits;
    }
    return stats;
}

}  // namespace noisy::harness
