#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace noisy {

/// Seedable deterministic pseudo-random stream.
///
/// Algorithm (fixed, so identical seeds give identical streams everywhere):
///  - engine: std::mt19937_64, whose output sequence is fully specified by the
///    C++ standard, seeded through std::seed_seq{seed_lo, seed_hi, stream_lo,
///    stream_hi} where *_lo/_hi are the 32-bit halves of the 64-bit inputs;
///  - uniform(): (word >> 11) * 2^-53, in [0, 1);
///  - normal(): Box-Muller on two uniforms, r = sqrt(-2 ln(1 - u1)),
///    returning r cos(2 pi u2) and caching r sin(2 pi u2) for the next call.
///
/// `position()` counts raw 64-bit words consumed; tests use it to prove that a
/// code path draws nothing.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    /// Uniform integer in [lo, hi], by rejection on the top bits.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    std::uint64_t position() const { return position_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t position_ = 0;
    std::optional<double> cached_normal_;
};

}  // namespace noisy
