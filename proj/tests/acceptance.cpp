// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include "noisy/harness/anneal_demo.hpp"
#include "noisy/harness/config.hpp"
#include "noisy/harness/experiments.hpp"
#include "noisy/harness/metrics_io.hpp"
#include "support/activation_checks.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace noisy;
using namespace noisy::harness;
namespace fs = std::filesystem;

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double time_limit;  // seconds
    std::function<Outcome()> run;
};

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

fs::path work_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "noisyact_acceptance" / name;
    fs::remove_all(dir);
    return dir;
}

constexpr NoiseMode kAllModes[] = {NoiseMode::Nan, NoiseMode::Nah, NoiseMode::Nani, NoiseMode::Nanil,
                                   NoiseMode::Nanis};
const HardSatFn kBases[] = {HardSatFn::hard_sigmoid(), HardSatFn::hard_tanh()};

Outcome gradient_oracle() {
    RngStream rng(101, 0);
    std::string detail;
    bool ok = true;
    for (auto mode : kAllModes) {
        double worst = 0.0;
        int failures = 0;
        for (int i = 0; i < 1000; ++i) {
            const auto k = testing::random_case(mode, rng);
            const double err = testing::check_gradient(k).worst;
            worst = std::max(worst, err);
            failures += err > 1e-5;
        }
        ok = ok && failures == 0;
        detail += format("%s worst %.1e%s; ", std::string(to_string(mode)).c_str(), worst,
                         failures ? format(" (%d over)", failures).c_str() : "");
    }
    return {ok, detail};
}

Outcome expectation_oracle() {
    RngStream rng(102, 0);
    int checked = 0;
    int failures = 0;
    double worst_ratio = 0.0;
    for (auto mode : {NoiseMode::Nan, NoiseMode::Nah}) {
        for (const auto& base : kBases) {
            for (double alpha : {0.9, 1.0}) {
                NoisyActConfig cfg;
                cfg.base = base;
                cfg.mode = mode;
                cfg.alpha = alpha;
                cfg.c = 1.0;
                for (int j = -6; j <= 6; ++j) {
                    const double x = 0.5 * j;
                    const auto r = testing::check_expectation(cfg, 1.0, x, 100000, rng);
                    ++checked;
                    failures += !r.ok();
                    if (r.bound > 0) worst_ratio = std::max(worst_ratio, std::abs(r.mean - r.expected) / r.bound);
                }
            }
        }
    }
    return {failures == 0,
            format("%d grid points, %d outside 5 std/sqrt(n), worst |error|/bound %.2f", checked, failures, worst_ratio)};
}

Outcome regime_identity() {
    RngStream rng(103, 0);
    int mismatches = 0;
    int checked = 0;
    for (auto mode : {NoiseMode::Nan, NoiseMode::Nah, NoiseMode::Nanil, NoiseMode::Nanis}) {
        for (const auto& base : kBases) {
            NoisyActConfig cfg;
            cfg.base = base;
            cfg.mode = mode;
            cfg.alpha = rng.uniform(0.5, 1.0);
            cfg.c = 1.0;
            Tensor x({1, 10000});
            for (double& v : x.values()) v = rng.uniform(-base.threshold, base.threshold);
            if (mode != NoiseMode::Nanis) {
                x[0] = base.threshold;
                x[1] = -base.threshold;
            }
            const Tensor want = hard_sat(base, x);
            const Tensor got = uses_output_noise(mode) ? forward_output_noise(cfg, 0.7, x, rng, true)
                                                       : forward_input_noise(cfg, 0.7, x, rng, true);
            ad::Tape tape;
            NoiseSource noise(rng);
            const auto y = record_noisy_activation(tape, cfg, tape.constant(x), tape.constant(Tensor::scalar(0.7)),
                                                   {&noise, true, std::nullopt});
            for (std::size_t i = 0; i < x.size(); ++i) {
                mismatches += got[i] != want[i];
                mismatches += tape.value(y)[i] != want[i];
            }
            checked += static_cast<int>(x.size());
        }
    }
    return {mismatches == 0, format("%d points per mode and base, %d mismatches", checked / 8, mismatches)};
}

Outcome algebraic_identity() {
    RngStream rng(104, 0);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        NoisyActConfig cfg;
        cfg.base = kBases[i % 2];
        cfg.mode = i % 4 < 2 ? NoiseMode::Nan : NoiseMode::Nah;
        cfg.alpha = rng.uniform(0.0, 1.0);
        cfg.c = rng.uniform(0.05, 5.0);
        const double p = rng.uniform(-3.0, 3.0);
        Eigen::Array<double, 1, 1> x, eps;
        x(0, 0) = rng.uniform(-4.0 * cfg.base.threshold, 4.0 * cfg.base.threshold);
        eps(0, 0) = sample_noise(cfg.mode, rng).epsilon;
        const double a = output_noise_with(cfg, p, x, eps)(0, 0);
        const double b = output_noise_with_delta_form(cfg, p, x, eps)(0, 0);
        worst = std::max(worst, std::abs(a - b));
    }
    return {worst <= 1e-12, format("10000 inputs, max |difference| %.2e", worst)};
}

std::vector<double> column(const MetricsRecord& rec, double MetricsRow::*field) {
    std::vector<double> out;
    for (const auto& r : rec.rows) out.push_back(r.*field);
    return out;
}

ExperimentResult run_arm(ExperimentConfig cfg, const std::string& tag) {
    cfg.output_dir = work_dir(tag);
    return run_experiment(cfg);
}

Outcome gaussian_mixture() {
    std::string detail;
    bool ok = true;
    for (auto mode : {NoiseMode::Deterministic, NoiseMode::Nah}) {
        auto cfg = default_config(ExperimentId::GaussianMixture);
        cfg.noise.mode = mode;
        const auto res = run_arm(cfg, "gaussian_" + std::string(to_string(mode)));
        std::vector<double> best, final;
        for (const auto& run : res.runs) {
            const auto acc = column(run.metrics, &MetricsRow::eval_accuracy);
            best.push_back(*std::max_element(acc.begin(), acc.end()));
            final.push_back(acc.back());
        }
        const double m = median(best);
        ok = ok && m >= 0.95;
        detail += format("%s median best %.4f (final %.4f); ", std::string(to_string(mode)).c_str(), m, median(final));
    }
    return {ok, detail};
}

Outcome digits_curves() {
    auto nah = default_config(ExperimentId::DigitsMlp);
    auto det = nah;
    det.noise.mode = NoiseMode::Deterministic;
    auto soft = det;
    soft.model.activation = "tanh";
    const auto nll = [](const ExperimentResult& r) { return column(r.summary, &MetricsRow::eval_nll); };
    const auto c_nah = nll(run_arm(nah, "digits_nah"));
    const auto c_det = nll(run_arm(det, "digits_det"));
    const auto c_tanh = nll(run_arm(soft, "digits_tanh"));
    const double det_best = *std::min_element(c_det.begin(), c_det.end());
    std::size_t reach = 0;
    for (std::size_t e = 0; e < c_nah.size(); ++e) {
        if (c_nah[e] <= det_best) {
            reach = e + 1;
            break;
        }
    }
    const bool ok = reach != 0 && reach <= 50 && c_nah.back() <= c_tanh.back();
    return {ok, format("median eval NLL: hard-tanh best %.4f, NAH reaches it at epoch %zu (best %.4f), "
                       "final NAH %.4f vs tanh %.4f",
                       det_best, reach, *std::min_element(c_nah.begin(), c_nah.end()), c_nah.back(),
                       c_tanh.back())};
}

struct UniqueCountMedians {
    double annealed, fixed, reference;
    bool ordered() const { return annealed < fixed && fixed < reference && annealed <= 0.8 * reference; }
};

UniqueCountMedians unique_count_medians(const std::vector<std::uint64_t>& seeds, const std::string& tag) {
    auto annealed = default_config(ExperimentId::UniqueCount);
    annealed.seeds = seeds;
    annealed.noise.mode = NoiseMode::Nan;
    auto fixed = annealed;
    fixed.schedule.reset();
    auto reference = fixed;
    reference.noise.mode = NoiseMode::Deterministic;
    const auto final_error = [&](const ExperimentConfig& cfg, const std::string& arm) {
        const auto r = run_arm(cfg, "unique_" + tag + "_" + arm);
        std::vector<double> v;
        for (const auto& run : r.runs) v.push_back(run.metrics.rows.back().eval_error_pct);
        return median(v);
    };
    return {final_error(annealed, "annealed"), final_error(fixed, "nan"), final_error(reference, "det")};
}

// The configured seeds were used to choose the task settings, so the ordering
// must also hold on two seed sets that played no part in that choice.
Outcome unique_count() {
    const std::vector<std::pair<std::string, std::vector<std::uint64_t>>> sets = {
        {"seeds 1-5", default_config(ExperimentId::UniqueCount).seeds},
        {"seeds 6-10", {6, 7, 8, 9, 10}},
        {"seeds 11-15", {11, 12, 13, 14, 15}},
    };
    bool ok = true;
    std::string detail = "median test error % annealed/NAN/deterministic:";
    for (const auto& [label, seeds] : sets) {
        const auto m = unique_count_medians(seeds, label.substr(6));
        ok = ok && m.ordered();
        detail += format(" %s %.2f/%.2f/%.2f%s;", label.c_str(), m.annealed, m.fixed, m.reference,
                         m.ordered() ? "" : " (not met)");
    }
    return {ok, detail};
}

Outcome anneal_demo() {
    const auto cfg = default_config(ExperimentId::AnnealDemo);
    const auto stats = run_anneal_demo(cfg.demo, cfg.seeds.front());
    const bool ok = stats.annealed_hits >= 2 * stats.plain_hits && stats.annealed_hits > 0;
    return {ok, format("%zu starts: annealed %zu, noiseless %zu", stats.runs, stats.annealed_hits, stats.plain_hits)};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome determinism() {
    std::vector<ExperimentConfig> configs;
    auto gm = default_config(ExperimentId::GaussianMixture);
    gm.seeds = {1, 2};
    gm.train.epochs = 5;
    configs.push_back(gm);
    auto uc = default_config(ExperimentId::UniqueCount);
    uc.seeds = {3};
    uc.data.n_train = 256;
    uc.data.n_eval = 128;
    uc.train.epochs = 2;
    uc.schedule = AnnealSchedule{};
    configs.push_back(uc);
    int files = 0;
    int differing = 0;
    for (auto& cfg : configs) {
        const auto tag = to_string(cfg.experiment);
        cfg.output_dir = work_dir("determinism_a_" + tag);
        run_experiment(cfg);
        const auto first = cfg.output_dir;
        cfg.output_dir = work_dir("determinism_b_" + tag);
        run_experiment(cfg);
        for (const auto& entry : fs::directory_iterator(first)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("metrics_", 0) != 0 && name != "summary.csv") continue;
            ++files;
            differing += slurp(entry.path()) != slurp(cfg.output_dir / name);
        }
    }
    return {files > 0 && differing == 0, format("%d metrics files compared, %d differ", files, differing)};
}

Outcome invariants() {
    int violations = 0;
    int checks = 0;
    const auto expect = [&](bool cond) {
        ++checks;
        violations += !cond;
    };

    // Range and monotonicity of h and of the expected outputs on x = -6..6, step 1e-3.
    for (const auto& base : kBases) {
        Tensor x({1, 12001});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = -6.0 + 1e-3 * static_cast<double>(i);
        const Tensor h = hard_sat(base, x);
        for (std::size_t i = 0; i < x.size(); ++i) {
            expect(h[i] >= base.clip_lo && h[i] <= base.clip_hi);
            if (i > 0) expect(h[i] >= h[i - 1]);
        }
        for (double alpha : {0.9, 1.0}) {
            for (auto mode : {NoiseMode::Nan, NoiseMode::Nah}) {
                NoisyActConfig cfg;
                cfg.base = base;
                cfg.mode = mode;
                cfg.alpha = alpha;
                const Tensor e = expected_output(cfg, 1.0, x);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (alpha == 1.0 && mode == NoiseMode::Nan) expect(e[i] == h[i]);
                    if (alpha == 1.0 && mode == NoiseMode::Nah) {
                        expect(e[i] >= base.clip_lo - cfg.c && e[i] <= base.clip_hi + cfg.c);
                    }
                }
            }
        }
    }

    // Fixed point of the hard sigmoid.
    const HardSatFn hs = HardSatFn::hard_sigmoid();
    expect(hard_sat(hs, Tensor::scalar(2.0 / 3.0)).item() == 2.0 / 3.0);

    // Half-normal noise points from the saturated side back into the range:
    // x = +-(x_t + 0.1 k), k = 1..40, alpha in {0.5, 0.9}, 200 draws each.
    RngStream rng(110, 0);
    for (const auto& base : kBases) {
        for (double alpha : {0.5, 0.9, 1.0}) {
            NoisyActConfig cfg;
            cfg.base = base;
            cfg.mode = NoiseMode::Nah;
            cfg.alpha = alpha;
            for (int k = 1; k <= 40; ++k) {
                for (double side : {-1.0, 1.0}) {
                    const double xv = side * (base.threshold + 0.1 * k);
                    Tensor x({1, 200}, xv);
                    const Tensor y = forward_output_noise(cfg, 1.0, x, rng, true);
                    const double mean_part = alpha * hard_sat(base, Tensor::scalar(xv)).item() +
                                             (1 - alpha) * linearize(base, Tensor::scalar(xv)).item();
                    for (std::size_t i = 0; i < y.size(); ++i) {
                        const double noise = y[i] - mean_part;
                        expect(side * noise <= 1e-15);
                    }
                }
            }
        }
    }

    // Clip idempotence, bound and direction on 1000 random gradient sets.
    for (int i = 0; i < 1000; ++i) {
        GradientMap g;
        for (const char* name : {"a", "b", "c"}) {
            Tensor t({3, 2});
            for (double& v : t.values()) v = rng.normal() * std::exp(rng.uniform(-3.0, 3.0));
            g[name] = t;
        }
        const double threshold = rng.uniform(0.1, 10.0);
        const auto once = clip_global_norm(g, threshold);
        const auto twice = clip_global_norm(once, threshold);
        expect(global_norm(once) <= threshold * (1 + 1e-12));
        bool same = true;
        for (const auto& [name, t] : once) same = same && (t.matrix() - twice.at(name).matrix()).norm() <= 1e-12 * threshold;
        expect(same);
        const double scale = once.at("a")[0] / g.at("a")[0];
        for (const auto& [name, t] : g) {
            expect((once.at(name).matrix() - scale * t.matrix()).norm() <= 1e-12 * (1 + t.matrix().norm()));
        }
    }

    // Schedule monotonicity: c0 in {1, 5, 30, 100} x floor in {0, 0.5, 2} x period in {1, 7, 200}, t < 5000.
    for (double c0 : {1.0, 5.0, 30.0, 100.0}) {
        for (double floor : {0.0, 0.5, 2.0}) {
            for (std::uint64_t period : {1u, 7u, 200u}) {
                const AnnealSchedule s{c0, floor, period};
                double prev = anneal_value(s, 0);
                expect(prev == std::max(floor, c0));
                for (std::uint64_t t = 1; t < 5000; ++t) {
                    const double v = anneal_value(s, t);
                    expect(v <= prev && v >= floor);
                    prev = v;
                }
            }
        }
    }
    return {violations == 0, format("%d checks, %d violations", checks, violations)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    const std::vector<Criterion> criteria = {
        {1, "gradient oracle", 10, gradient_oracle},
        {2, "expectation oracle", 30, expectation_oracle},
        {3, "regime identity", 1, regime_identity},
        {4, "algebraic identity", 1, algebraic_identity},
        {5, "gaussian-mixture accuracy", 120, gaussian_mixture},
        {6, "digits learning curves", 300, digits_curves},
        {7, "unique-count ordering", 900, unique_count},
        {8, "annealing demo", 10, anneal_demo},
        {9, "determinism", 5, determinism},
        {10, "invariant suite", 10, invariants},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.time_limit;
        const bool ok = out.ok && in_time;
        failed += !ok;
        std::printf("criterion %d %s: %s  %s [%.1f s, limit %.0f s%s]\n", c.id, c.name, ok ? "PASS" : "FAIL",
                    out.detail.c_str(), secs, c.time_limit, in_time ? "" : ", over time");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
