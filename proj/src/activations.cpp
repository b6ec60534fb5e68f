#include "noisy/activations.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

namespace noisy {

namespace {

using Array = Tensor::Array;

// alpha h + (1 - alpha) u written as h - (1 - alpha) Delta, which is exactly h
// both where Delta == 0 and at alpha == 1.
Array biased_base(const NoisyActConfig& cfg, const Array& x) {
    const Array h = hard_sat(cfg.base, x);
    if (cfg.alpha == 1.0) return h;
    return h - (1.0 - cfg.alpha) * (h - linearize(cfg.base, x));
}

Array output_noise_exact(const NoisyActConfig& cfg, double p, const Array& x, const Array& eps) {
    const Array sigma = noise_std(cfg.c, p, delta(cfg.base, x).eval());
    return biased_base(cfg, x) + direction(x, cfg.alpha) * sigma * eps;
}

void require_mode(bool ok, std::string_view op, NoiseMode mode) {
    if (!ok) {
        throw std::invalid_argument(std::string(op) + ": unsupported noise mode " +
                                    std::string(to_string(mode)));
    }
}

Tensor draw_xi(RngStream& rng, const Tensor& like) {
    Tensor xi(like.shape());
    for (double& v : xi.values()) v = rng.normal();
    return xi;
}

}  // namespace

std::string_view to_string(NoiseMode mode) {
    switch (mode) {
    case NoiseMode::Deterministic: return "det";
    case NoiseMode::Nan: return "nan";
    case NoiseMode::Nah: return "nah";
    case NoiseMode::Nani: return "nani";
    case NoiseMode::Nanil: return "nanil";
    case NoiseMode::Nanis: return "nanis";
    }
    return "?";
}

NoiseMode parse_noise_mode(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "det" || s == "deterministic") return NoiseMode::Deterministic;
    if (s == "nan") return NoiseMode::Nan;
    if (s == "nah") return NoiseMode::Nah;
    if (s == "nani") return NoiseMode::Nani;
    if (s == "nanil") return NoiseMode::Nanil;
    if (s == "nanis") return NoiseMode::Nanis;
    throw std::invalid_argument("unknown noise mode '" + std::string(name) +
                                "' (expected det, nan, nah, nani, nanil or nanis)");
}

void validate(const NoisyActConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
        throw std::invalid_argument("noisy activation: alpha must lie in [0, 1]");
    }
    if (!(cfg.c > 0.0)) {
        throw std::invalid_argument("noisy activation: c must be positive");
    }
    if (!(cfg.sigma_fixed >= 0.0)) {
        throw std::invalid_argument("noisy activation: sigma_fixed must be nonnegative");
    }
}

NoiseSample sample_noise(NoiseMode mode, RngStream& rng) {
    const double xi = rng.normal();
    return {xi, mode == NoiseMode::Nah ? std::abs(xi) : xi};
}

OutputNoiseGradient backward_saturated_gradient(const NoisyActConfig& cfg, double p, double x,
                                                double eps) {
    const HardSatFn& f = cfg.base;
    const double u = f.slope * x + f.intercept;
    const double h = std::clamp(u, f.clip_lo, f.clip_hi);
    const double dlt = h - u;
    const double du = f.slope;
    const double dh = (u >= f.clip_lo && u <= f.clip_hi) ? f.slope : 0.0;
    const double g = logistic(p * dlt);
    const double common = 2.0 * cfg.c * (g - 0.5) * g * (1.0 - g);
    const double dsigma_dx = common * p * (dh - du);
    const double d = -sgn(x) * sgn(1.0 - cfg.alpha);
    return {cfg.alpha * dh + (1.0 - cfg.alpha) * du + d * dsigma_dx * eps,
            d * eps * common * dlt};
}

Tensor linearize(const HardSatFn& f, const Tensor& x) { return Tensor::like(x, linearize(f, x.array())); }
Tensor hard_sat(const HardSatFn& f, const Tensor& x) { return Tensor::like(x, hard_sat(f, x.array())); }
Tensor delta(const HardSatFn& f, const Tensor& x) { return Tensor::like(x, delta(f, x.array())); }

Tensor noise_std(const NoisyActConfig& cfg, double p, const Tensor& delta_values) {
    if (!(cfg.c > 0.0)) throw std::invalid_argument("noise_std: c must be positive");
    return Tensor::like(delta_values, noise_std(cfg.c, p, delta_values.array()));
}

Tensor direction(const Tensor& x, double alpha) { return Tensor::like(x, direction(x.array(), alpha)); }

Tensor expected_output(const NoisyActConfig& cfg, double p, const Tensor& x) {
    switch (cfg.mode) {
    case NoiseMode::Deterministic:
        return hard_sat(cfg.base, x);
    case NoiseMode::Nan:
        return Tensor::like(x, biased_base(cfg, x.array()));
    case NoiseMode::Nah:
        return Tensor::like(
            x, output_noise_exact(cfg, p, x.array(),
                                  Array::Constant(x.rows(), x.cols(), half_normal_mean)));
    default:
        require_mode(false, "expected_output", cfg.mode);
    }
    return {};
}

Tensor forward_output_noise(const NoisyActConfig& cfg, double p, const Tensor& x, RngStream& rng,
                            bool training) {
    require_mode(uses_output_noise(cfg.mode), "forward_output_noise", cfg.mode);
    if (!training) return expected_output(cfg, p, x);
    Array eps = draw_xi(rng, x).array();
    if (cfg.mode == NoiseMode::Nah) eps = eps.abs();
    return Tensor::like(x, output_noise_exact(cfg, p, x.array(), eps));
}

Tensor forward_input_noise(const NoisyActConfig& cfg, double p, const Tensor& x, RngStream& rng,
                           bool training) {
    require_mode(uses_input_noise(cfg.mode), "forward_input_noise", cfg.mode);
    if (!training) return hard_sat(cfg.base, x);
    const Tensor xi = draw_xi(rng, x);
    return Tensor::like(x, input_noise_with(cfg, p, x.array(), xi.array()));
}

Tensor NoiseSource::draw(std::size_t rows, std::size_t cols) {
    Tensor xi({rows, cols});
    if (rng_ != nullptr) {
        for (double& v : xi.values()) v = rng_->normal();
        recorded_.push_back(xi);
        return xi;
    }
    if (cursor_ >= replay_.size()) {
        throw std::logic_error("NoiseSource: replay exhausted");
    }
    const Tensor& saved = replay_[cursor_++];
    if (saved.shape() != xi.shape()) {
        throw std::logic_error("NoiseSource: replayed draw has shape " +
                               shape_to_string(saved.shape()) + ", expected " +
                               shape_to_string(xi.shape()));
    }
    recorded_.push_back(saved);
    return saved;
}

namespace {

ad::VarId record_linearize(ad::Tape& t, const HardSatFn& f, ad::VarId x) {
    if (f.slope == 1.0 && f.intercept == 0.0) return x;
    return ad::add_scalar(t, ad::scale(t, x, f.slope), f.intercept);
}

ad::VarId record_noise_std(ad::Tape& t, double c, ad::VarId dlt, ad::VarId p) {
    const auto g = ad::sigmoid(t, ad::mul_bias(t, dlt, p));
    return ad::scale(t, ad::square(t, ad::add_scalar(t, g, -0.5)), c);
}

Tensor row_shaped(const Tensor& x, Tensor values) {
    values.matrix().resize(x.rows(), x.cols());
    return Tensor::like(x, values.matrix());
}

}  // namespace

ad::VarId record_noisy_activation(ad::Tape& tape, const NoisyActConfig& cfg, ad::VarId x,
                                  std::optional<ad::VarId> p, const ForwardContext& ctx) {
    const HardSatFn& f = cfg.base;
    const Tensor xv = tape.value(x);
    const bool noisy = ctx.training && cfg.mode != NoiseMode::Deterministic;
    if (noisy && ctx.noise == nullptr) {
        throw std::invalid_argument("record_noisy_activation: training with noise needs a NoiseSource");
    }
    if (uses_learned_p(cfg.mode) && !p) {
        throw std::invalid_argument("record_noisy_activation: mode " +
                                    std::string(to_string(cfg.mode)) + " needs a p parameter");
    }
    const double c = ctx.c_override.value_or(cfg.c);

    const auto u = record_linearize(tape, f, x);
    const auto h = ad::clip(tape, u, f.clip_lo, f.clip_hi);

    if (cfg.mode == NoiseMode::Deterministic) return h;

    if (uses_input_noise(cfg.mode)) {
        if (!noisy) return h;
        const Tensor xi = row_shaped(xv, ctx.noise->draw(xv.rows(), xv.cols()));
        ad::VarId shifted;
        if (cfg.mode == NoiseMode::Nanil) {
            const auto sigma = record_noise_std(tape, c, ad::sub(tape, h, u), *p);
            shifted = ad::add(tape, x, ad::mul(tape, sigma, tape.constant(xi)));
        } else {
            Array s = cfg.sigma_fixed * xi.array();
            if (cfg.mode == NoiseMode::Nanis) {
                s = (xv.array().abs() >= f.threshold).select(s, 0.0);
            }
            shifted = ad::add(tape, x, tape.constant(Tensor::like(xv, s)));
        }
        return ad::clip(tape, record_linearize(tape, f, shifted), f.clip_lo, f.clip_hi);
    }

    // Output noise: h - (1 - alpha) Delta + d sigma eps.
    const auto dlt = ad::sub(tape, h, u);
    ad::VarId out = h;
    if (cfg.alpha != 1.0) {
        out = ad::add(tape, h, ad::scale(tape, dlt, -(1.0 - cfg.alpha)));
    }
    Array d_eps;
    if (noisy) {
        Array eps = row_shaped(xv, ctx.noise->draw(xv.rows(), xv.cols())).array();
        if (cfg.mode == NoiseMode::Nah) eps = eps.abs();
        d_eps = direction(xv.array(), cfg.alpha) * eps;
    } else if (cfg.mode == NoiseMode::Nah) {
        d_eps = direction(xv.array(), cfg.alpha) * half_normal_mean;
    } else {
        return out;  // E[xi] = 0
    }
    const auto sigma = record_noise_std(tape, c, dlt, *p);
    return ad::add(tape, out, ad::mul(tape, sigma, tape.constant(Tensor::like(xv, d_eps))));
}

}  // namespace noisy
