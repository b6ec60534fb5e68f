#pragma once

#include "noisy/harness/config.hpp"
#include "noisy/rng.hpp"

#include <cstdint>
#include <vector>

namespace noisy::harness {

/// f(x) = 0.1 x^2 + sin(3x): a sequence of wells on a quadratic bowl. The
/// deepest well sits near x = -0.52.
double demo_objective(double x);
double demo_gradient(double x);

/// The global minimiser, refined by Newton's method.
double demo_global_minimum();

/// Noisy descent x <- x - lr (f'(x) + c_t xi), followed by `settle_steps`
/// of plain descent. c_t = anneal_value(schedule, step) when `annealed`, else 0.
/// When `c_trace` is given, the c_t used at every noisy step is appended.
double noisy_descent(double x0, const AnnealDemoSettings& demo, bool annealed, RngStream& rng,
                     std::vector<double>* c_trace = nullptr);

/// True when x has settled into the global well.
bool in_global_basin(double x);

struct BasinStats {
    std::size_t runs = 0;
    std::size_t annealed_hits = 0;
    std::size_t plain_hits = 0;

    double annealed_fraction() const { return runs ? static_cast<double>(annealed_hits) / runs : 0.0; }
    double plain_fraction() const { return runs ? static_cast<double>(plain_hits) / runs : 0.0; }
};

/// Runs `demo.runs` random starts (uniform in [start_lo, start_hi]), each once
/// with annealed noise and once without, from the same start.
BasinStats run_anneal_demo(const AnnealDemoSettings& demo, std::uint64_t seed);

}  // namespace noisy::harness
