#pragma once

#include "noisy/autodiff.hpp"
#include "noisy/rng.hpp"
#include "noisy/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

namespace noisy {

enum class HardSatKind { HardSigmoid, HardTanh };

/// Hard-saturating function h(x) = clip(slope * x + intercept, clip_lo, clip_hi).
///
/// `threshold` is |x| at which h starts to saturate (2 for hard-sigmoid, 1 for
/// hard-tanh). The unclipped line slope * x + intercept is the first-order
/// Taylor expansion u(x) of the matching soft function around zero.
struct HardSatFn {
    HardSatKind kind;
    double slope;
    double intercept;
    double clip_lo;
    double clip_hi;
    double threshold;

    static constexpr HardSatFn hard_sigmoid() {
        return {HardSatKind::HardSigmoid, 0.25, 0.5, 0.0, 1.0, 2.0};
    }
    static constexpr HardSatFn hard_tanh() {
        return {HardSatKind::HardTanh, 1.0, 0.0, -1.0, 1.0, 1.0};
    }
};

enum class NoiseMode {
    Deterministic,  // h(x), no noise path
    Nan,            // normal noise at the output
    Nah,            // half-normal noise at the output
    Nani,           // normal noise at the input, fixed sigma
    Nanil,          // normal noise at the input, learned sigma(x)
    Nanis,          // normal noise at the input only where saturated, fixed sigma
};

std::string_view to_string(NoiseMode mode);
/// Accepts det, nan, nah, nani, nanil, nanis (case-insensitive).
NoiseMode parse_noise_mode(std::string_view name);

constexpr bool uses_output_noise(NoiseMode m) { return m == NoiseMode::Nan || m == NoiseMode::Nah; }
constexpr bool uses_input_noise(NoiseMode m) {
    return m == NoiseMode::Nani || m == NoiseMode::Nanil || m == NoiseMode::Nanis;
}
/// Modes whose noise scale depends on the learnable p.
constexpr bool uses_learned_p(NoiseMode m) {
    return m == NoiseMode::Nan || m == NoiseMode::Nah || m == NoiseMode::Nanil;
}

/// One activation site. p itself is a model parameter and lives outside the config.
struct NoisyActConfig {
    HardSatFn base = HardSatFn::hard_tanh();
    NoiseMode mode = NoiseMode::Deterministic;
    double alpha = 1.0;
    double c = 0.5;
    double sigma_fixed = 0.05;
    bool per_unit_p = false;
};

/// Throws std::invalid_argument if alpha, c or sigma_fixed are out of range.
void validate(const NoisyActConfig& cfg);

/// E[eps]: 0 for normal noise, sqrt(2/pi) for half-normal.
inline constexpr double half_normal_mean = 0.79788456080286535588;  // sqrt(2/pi)

struct NoiseSample {
    double xi;
    double epsilon;
};

NoiseSample sample_noise(NoiseMode mode, RngStream& rng);

// ---------------------------------------------------------------------------
// Elementwise math over Eigen arrays. All of these are pure.

/// u(x), the unclipped linearization.
template <typename Derived>
auto linearize(const HardSatFn& f, const Eigen::ArrayBase<Derived>& x) {
    return f.slope * x.derived() + f.intercept;
}

template <typename Derived>
auto hard_sat(const HardSatFn& f, const Eigen::ArrayBase<Derived>& x) {
    return linearize(f, x).max(f.clip_lo).min(f.clip_hi);
}

/// Delta = h(x) - u(x); zero inside the linear regime.
template <typename Derived>
auto delta(const HardSatFn& f, const Eigen::ArrayBase<Derived>& x) {
    return hard_sat(f, x) - linearize(f, x);
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// sigma = c * (sigmoid(p * delta) - 0.5)^2.
template <typename Derived>
auto noise_std(double c, double p, const Eigen::ArrayBase<Derived>& delta_values) {
    return c * (1.0 / (1.0 + (-p * delta_values.derived()).exp()) - 0.5).square();
}

/// sgn with sgn(0) = 1.
inline double sgn(double v) { return v >= 0.0 ? 1.0 : -1.0; }

/// d(x) = -sgn(x) * sgn(1 - alpha).
template <typename Derived>
auto direction(const Eigen::ArrayBase<Derived>& x, double alpha) {
    using Scalar = typename Derived::Scalar;
    return -sgn(1.0 - alpha) * (2.0 * (x.derived() >= Scalar(0)).template cast<Scalar>() - 1.0);
}

/// alpha h + (1 - alpha) u + d sigma eps with eps given (frozen noise).
template <typename DX, typename DE>
auto output_noise_with(const NoisyActConfig& cfg, double p, const Eigen::ArrayBase<DX>& x,
                       const Eigen::ArrayBase<DE>& eps) {
    using Array = Eigen::Array<typename DX::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Array xv = x.derived();
    const Array h = hard_sat(cfg.base, xv);
    const Array u = linearize(cfg.base, xv);
    const Array sigma = noise_std(cfg.c, p, (h - u).eval());
    const Array d = direction(xv, cfg.alpha);
    return Array(cfg.alpha * h + (1.0 - cfg.alpha) * u + d * sigma * eps.derived());
}

/// The same quantity written as u + alpha Delta + d sigma eps.
template <typename DX, typename DE>
auto output_noise_with_delta_form(const NoisyActConfig& cfg, double p, const Eigen::ArrayBase<DX>& x,
                                  const Eigen::ArrayBase<DE>& eps) {
    using Array = Eigen::Array<typename DX::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Array xv = x.derived();
    const Array u = linearize(cfg.base, xv);
    const Array dlt = delta(cfg.base, xv);
    const Array sigma = noise_std(cfg.c, p, dlt);
    const Array d = direction(xv, cfg.alpha);
    return Array(u + cfg.alpha * dlt + d * sigma * eps.derived());
}

/// h(x + s * xi) with s either sigma_fixed or sigma(x), gated by |x| >= threshold for NANIS.
template <typename DX, typename DE>
auto input_noise_with(const NoisyActConfig& cfg, double p, const Eigen::ArrayBase<DX>& x,
                      const Eigen::ArrayBase<DE>& xi) {
    using Array = Eigen::Array<typename DX::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Array xv = x.derived();
    Array s;
    if (cfg.mode == NoiseMode::Nanil) {
        s = noise_std(cfg.c, p, delta(cfg.base, xv).eval());
    } else {
        s = Array::Constant(xv.rows(), xv.cols(), cfg.sigma_fixed);
    }
    if (cfg.mode == NoiseMode::Nanis) {
        s = (xv.abs() >= cfg.base.threshold).select(s, 0.0);
    }
    return Array(hard_sat(cfg.base, (xv + s * xi.derived()).eval()));
}

/// Analytic partial derivatives of the output-noise activation at frozen eps.
struct OutputNoiseGradient {
    double d_x;
    double d_p;
};

/// dphi/dx = alpha h' + (1 - alpha) u' + d sigma' eps, with
/// sigma' = 2c (g(p Delta) - 0.5) g'(p Delta) p (h' - u'), and
/// dphi/dp = d eps 2c (g(p Delta) - 0.5) g'(p Delta) Delta.
OutputNoiseGradient backward_saturated_gradient(const NoisyActConfig& cfg, double p, double x,
                                                double eps);

// ---------------------------------------------------------------------------
// Tensor-level operations.

Tensor linearize(const HardSatFn& f, const Tensor& x);
Tensor hard_sat(const HardSatFn& f, const Tensor& x);
Tensor delta(const HardSatFn& f, const Tensor& x);
Tensor noise_std(const NoisyActConfig& cfg, double p, const Tensor& delta_values);
Tensor direction(const Tensor& x, double alpha);

/// Deterministic evaluation: alpha h + (1 - alpha) u + d sigma E[eps]; h(x) for Deterministic.
Tensor expected_output(const NoisyActConfig& cfg, double p, const Tensor& x);

/// Output-noise forward. training=false delegates to expected_output and draws nothing.
Tensor forward_output_noise(const NoisyActConfig& cfg, double p, const Tensor& x, RngStream& rng,
                            bool training);

/// Input-noise forward. training=false removes the noise (xi := 0) and draws nothing.
Tensor forward_input_noise(const NoisyActConfig& cfg, double p, const Tensor& x, RngStream& rng,
                           bool training);

// ---------------------------------------------------------------------------
// Tape recording.

/// Source of standard-normal draws for activation sites.
///
/// In sampling mode draws come from an RngStream and are recorded; in replay
/// mode previously recorded draws are handed back in order, which freezes the
/// noise for finite-difference checks of whole networks.
class NoiseSource {
public:
    explicit NoiseSource(RngStream& rng) : rng_(&rng) {}
    explicit NoiseSource(std::vector<Tensor> replay) : replay_(std::move(replay)) {}

    Tensor draw(std::size_t rows, std::size_t cols);
    const std::vector<Tensor>& recorded() const { return recorded_; }

private:
    RngStream* rng_ = nullptr;
    std::vector<Tensor> replay_;
    std::size_t cursor_ = 0;
    std::vector<Tensor> recorded_;
};

struct ForwardContext {
    NoiseSource* noise = nullptr;
    bool training = false;
    /// Replaces cfg.c at every site when set (noise annealing).
    std::optional<double> c_override;
};

/// Records phi(x) on the tape. `p` is the site's learnable scale (shape [] or
/// [units]); it is ignored when the mode does not use it. Noise is drawn from
/// ctx.noise only when ctx.training and the mode is noisy.
ad::VarId record_noisy_activation(ad::Tape& tape, const NoisyActConfig& cfg, ad::VarId x,
                                  std::optional<ad::VarId> p, const ForwardContext& ctx);

}  // namespace noisy
