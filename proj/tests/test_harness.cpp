#include "noisy/harness/anneal_demo.hpp"
#include "noisy/harness/config.hpp"
#include "noisy/harness/datasets.hpp"
#include "noisy/harness/experiments.hpp"
#include "noisy/harness/metrics_io.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace noisy::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("noisyact_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Config

TEST(Config, MissingKeysKeepDefaults) {
    const auto cfg = parse_config(json{{"experiment", "digits-mlp"}});
    const auto def = default_config(ExperimentId::DigitsMlp);
    EXPECT_EQ(to_json(cfg), to_json(def));
}

TEST(Config, OverridesNestedFields) {
    const auto cfg = parse_config(json::parse(R"({
        "experiment": "unique-count",
        "seeds": [7, 8],
        "noise": {"mode": "nah", "c": 2.5},
        "optimizer": {"kind": "sgd", "learning_rate": 0.05},
        "schedule": {"c0": 10, "floor": 1, "period": 50},
        "train": {"curriculum": [{"max_length": 5, "epochs": 2}]}
    })"));
    EXPECT_EQ(cfg.experiment, ExperimentId::UniqueCount);
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{7, 8}));
    EXPECT_EQ(cfg.noise.mode, NoiseMode::Nah);
    EXPECT_EQ(cfg.noise.c, 2.5);
    EXPECT_EQ(cfg.optimizer.kind, OptimizerKind::Sgd);
    EXPECT_EQ(cfg.optimizer.learning_rate, 0.05);
    ASSERT_TRUE(cfg.schedule.has_value());
    EXPECT_EQ(cfg.schedule->c0, 10.0);
    EXPECT_EQ(cfg.schedule->period, 50u);
    ASSERT_EQ(cfg.train.curriculum.size(), 1u);
    EXPECT_EQ(cfg.train.curriculum[0].max_length, 5u);
}

TEST(Config, RoundTripsThroughJson) {
    for (auto id : {ExperimentId::GaussianMixture, ExperimentId::DigitsMlp, ExperimentId::UniqueCount,
                    ExperimentId::AnnealDemo}) {
        const auto cfg = default_config(id);
        EXPECT_EQ(to_json(parse_config(to_json(cfg))), to_json(cfg)) << to_string(id);
    }
}

TEST(Config, RejectsUnknownKeys) {
    try {
        parse_config(json::parse(R"({"experiment": "gaussian-mixture", "noise": {"sigma": 1}})"));
        FAIL() << "expected invalid_argument";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("noise.sigma"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config(json::parse(R"({"experimnt": "gaussian-mixture"})")), std::invalid_argument);
}

TEST(Config, RejectsWrongTypes) {
    EXPECT_THROW(parse_config(json::parse(R"({"noise": {"c": "big"}})")), std::invalid_argument);
    EXPECT_THROW(parse_config(json::parse(R"({"seeds": "1"})")), std::invalid_argument);
    EXPECT_THROW(parse_config(json::parse(R"({"model": 3})")), std::invalid_argument);
}

TEST(Config, RejectsUnknownNames) {
    EXPECT_THROW(parse_config(json{{"experiment", "mnist"}}), std::invalid_argument);
    EXPECT_THROW(parse_config(json::parse(R"({"noise": {"mode": "loud"}})")), std::invalid_argument);
    EXPECT_THROW(parse_config(json::parse(R"({"optimizer": {"kind": "adam"}})")), std::invalid_argument);
}

TEST(Config, ValidationNamesTheProblem) {
    const auto expect_message = [](ExperimentConfig cfg, const std::string& needle) {
        try {
            validate(cfg);
            ADD_FAILURE() << "expected failure mentioning " << needle;
        } catch (const std::invalid_argument& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    auto cfg = default_config(ExperimentId::GaussianMixture);
    EXPECT_NO_THROW(validate(cfg));

    auto bad = cfg;
    bad.seeds = {};
    expect_message(bad, "seed");
    bad = cfg;
    bad.seeds = {3, 3};
    expect_message(bad, "distinct");
    bad = cfg;
    bad.noise.alpha = 1.5;
    expect_message(bad, "alpha");
    bad = cfg;
    bad.noise.c = 0.0;
    expect_message(bad, "c must be positive");
    bad = cfg;
    bad.train.batch_size = 0;
    expect_message(bad, "batch_size");
    bad = cfg;
    bad.model.activation = "swish";
    expect_message(bad, "swish");

    auto uc = default_config(ExperimentId::UniqueCount);
    EXPECT_NO_THROW(validate(uc));
    uc.train.curriculum = {{20, 1}};
    expect_message(uc, "max_length");
}

// Datasets

TEST(GaussianMixture, BalancedAndDeterministic) {
    const auto a = gen_gaussian_mixture(4, 50, 2);
    const auto b = gen_gaussian_mixture(4, 50, 2);
    const auto c = gen_gaussian_mixture(5, 50, 2);
    EXPECT_EQ(a.data.inputs.shape(), (Shape{150, 2}));
    std::array<int, 3> counts{};
    for (int y : a.data.labels) ++counts[static_cast<std::size_t>(y)];
    EXPECT_EQ(counts, (std::array<int, 3>{50, 50, 50}));
    EXPECT_EQ(a.data.inputs, b.data.inputs);
    EXPECT_FALSE(a.data.inputs == c.data.inputs);
    EXPECT_THROW(gen_gaussian_mixture(1, 0, 2), std::invalid_argument);
}

double log_density(const MixtureComponent& k, double x, double y) {
    const double s2 = k.stddev * k.stddev;
    const double r2 = (x - k.mean_x) * (x - k.mean_x) + (y - k.mean_y) * (y - k.mean_y);
    return -r2 / (2.0 * s2) - std::log(2.0 * std::numbers::pi * s2);
}

TEST(GaussianMixture, BayesClassifierIsNearlyPerfect) {
    // The Bayes rule with the generating parameters sets the ceiling for the
    // learned classifiers; it sits near 0.987 for these components.
    const auto ds = gen_gaussian_mixture(11, 20000, 2);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < ds.data.inputs.rows(); ++r) {
        int best = 0;
        double best_ll = -1e300;
        for (int k = 0; k < 3; ++k) {
            const double ll = log_density(kMixture[k], ds.data.inputs(r, 0), ds.data.inputs(r, 1));
            if (ll > best_ll) {
                best_ll = ll;
                best = k;
            }
        }
        correct += best == ds.data.labels[static_cast<std::size_t>(r)];
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(ds.data.labels.size());
    EXPECT_NEAR(acc, 0.987, 0.004);
    EXPECT_GT(acc, 0.95);
}

TEST(UniqueCount, CountsDistinctValues) {
    EXPECT_EQ(count_unique(std::vector<int>{3, 3, 3}), 1u);
    EXPECT_EQ(count_unique(std::vector<int>{0, 1, 2}), 3u);
    EXPECT_EQ(count_unique(std::vector<int>{5, 0, 5, 0}), 2u);
}

TEST(UniqueCount, LabelsMatchTheSequences) {
    const auto ds = gen_unique_count(3, 200, 10, 0, 5);
    EXPECT_EQ(ds.num_classes, 6u);
    EXPECT_EQ(ds.data.inputs.shape(), (Shape{200, 10}));
    for (std::size_t r = 0; r < 200; ++r) {
        std::vector<int> seq;
        for (Eigen::Index t = 0; t < 10; ++t) {
            const double v = ds.data.inputs(static_cast<Eigen::Index>(r), t);
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 5.0);
            seq.push_back(static_cast<int>(v));
        }
        EXPECT_EQ(ds.data.labels[r], static_cast<int>(count_unique(seq)) - 1);
    }
    EXPECT_EQ(gen_unique_count(3, 200, 10, 0, 5).data.inputs, ds.data.inputs);
}

TEST(UniqueCount, TokensAreOffsetsIntoTheRange) {
    const auto ds = gen_unique_count(9, 100, 4, 10, 12);
    EXPECT_EQ(ds.num_classes, 3u);
    EXPECT_LE(ds.data.inputs.matrix().maxCoeff(), 2.0);
    EXPECT_GE(ds.data.inputs.matrix().minCoeff(), 0.0);
}

TEST(UniqueCount, DistinctCountDistributionMatchesExactLaw) {
    // P(k distinct among 10 uniform draws from 6 values), k = 0..6.
    constexpr std::array<double, 7> law = {0.0, 9.92290301275212e-08, 0.0002535301719758167,
                                           0.018516137021795456, 0.20305236434994667,
                                           0.5063657407407407, 0.2718121284865112};
    const std::size_t n = 100000;
    const auto ds = gen_unique_count(21, n, 10, 0, 5);
    std::array<double, 7> freq{};
    for (int y : ds.data.labels) freq[static_cast<std::size_t>(y + 1)] += 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < law.size(); ++k) EXPECT_NEAR(freq[k], law[k], 0.02) << "k = " << k;
}

TEST(Digits, BundledSetLoads) {
    const auto ds = load_digits(default_digits_path());
    EXPECT_EQ(ds.num_classes, 10u);
    EXPECT_EQ(ds.data.inputs.shape()[1], 64u);
    EXPECT_GT(ds.data.labels.size(), 1000u);
    EXPECT_GE(ds.data.inputs.matrix().minCoeff(), 0.0);
    EXPECT_LE(ds.data.inputs.matrix().maxCoeff(), 1.0);
    EXPECT_THROW(load_digits("/nonexistent/digits.csv"), std::runtime_error);
}

TEST(Digits, SplitHoldsOutTheRequestedFraction) {
    const auto ds = load_digits(default_digits_path());
    const auto [train, eval] = split(ds.data, 0.25, 3);
    const auto n = ds.data.labels.size();
    EXPECT_EQ(train.labels.size() + eval.labels.size(), n);
    EXPECT_EQ(eval.labels.size(), static_cast<std::size_t>(std::lround(0.25 * static_cast<double>(n))));
    const auto [train2, eval2] = split(ds.data, 0.25, 3);
    EXPECT_EQ(eval.inputs, eval2.inputs);
}

// Anneal demo

TEST(AnnealDemo, GlobalMinimumIsStationary) {
    const double x = demo_global_minimum();
    EXPECT_NEAR(demo_gradient(x), 0.0, 1e-12);
    EXPECT_TRUE(in_global_basin(x));
    for (double y = -6.0; y <= 6.0; y += 0.01) EXPECT_GE(demo_objective(y), demo_objective(x) - 1e-12);
}

TEST(AnnealDemo, ZeroNoiseIsPlainDescent) {
    AnnealDemoSettings demo;
    demo.steps = 500;
    demo.settle_steps = 0;
    RngStream rng(1, 0);
    const double x = noisy_descent(2.0, demo, false, rng);
    EXPECT_EQ(rng.position(), 0u);
    double y = 2.0;
    for (std::size_t t = 0; t < demo.steps; ++t) y -= demo.learning_rate * demo_gradient(y);
    EXPECT_EQ(x, y);
}

TEST(AnnealDemo, NoiseFollowsTheSchedule) {
    AnnealDemoSettings demo;
    demo.steps = 300;
    RngStream rng(1, 0);
    std::vector<double> trace;
    noisy_descent(0.0, demo, true, rng, &trace);
    ASSERT_EQ(trace.size(), demo.steps);
    for (std::size_t t = 0; t < trace.size(); ++t) EXPECT_EQ(trace[t], anneal_value(demo.schedule, t));
    EXPECT_EQ(trace.front(), demo.schedule.c0);
}

TEST(AnnealDemo, StatsAreDeterministic) {
    AnnealDemoSettings demo;
    demo.runs = 10;
    demo.steps = 2000;
    const auto a = run_anneal_demo(demo, 3);
    const auto b = run_anneal_demo(demo, 3);
    EXPECT_EQ(a.runs, 10u);
    EXPECT_EQ(a.annealed_hits, b.annealed_hits);
    EXPECT_EQ(a.plain_hits, b.plain_hits);
}

// Metrics files

MetricsRecord sample_record(double shift) {
    MetricsRecord rec;
    for (std::size_t e = 1; e <= 3; ++e) {
        MetricsRow row;
        row.epoch = e;
        row.minibatches = 10 * e;
        row.train_nll = 1.0 / 3.0 + shift;
        row.eval_nll = 0.1 * static_cast<double>(e) + shift;
        row.eval_accuracy = 0.5 + shift;
        row.eval_error_pct = 50.0 - shift;
        row.c = 0.5;
        row.seconds = 0.25;
        rec.rows.push_back(row);
    }
    return rec;
}

TEST(MetricsIo, CsvRoundTripIsExact) {
    const auto dir = scratch_dir("metrics");
    fs::create_directories(dir);
    const auto rec = sample_record(1e-17);
    write_metrics_csv(dir / "m.csv", rec);
    const auto back = read_metrics_csv(dir / "m.csv");
    ASSERT_EQ(back.rows.size(), rec.rows.size());
    for (std::size_t i = 0; i < rec.rows.size(); ++i) EXPECT_TRUE(back.rows[i].same_results(rec.rows[i]));
    EXPECT_EQ(slurp(dir / "m.csv").substr(0, std::string(kMetricsHeader).size()), kMetricsHeader);
    fs::remove_all(dir);
}

TEST(MetricsIo, MetricsFileOmitsWallTime) {
    auto a = sample_record(0.0);
    auto b = a;
    for (auto& r : b.rows) r.seconds = 99.0;
    std::ostringstream sa, sb;
    write_metrics_csv(sa, a);
    write_metrics_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(MetricsIo, MedianSummary) {
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
    auto longer = sample_record(0.2);
    longer.rows.push_back(longer.rows.back());
    const auto s = median_summary({sample_record(0.0), sample_record(0.1), longer});
    ASSERT_EQ(s.rows.size(), 3u);
    EXPECT_DOUBLE_EQ(s.rows[1].eval_nll, 0.2 + 0.1);
    EXPECT_DOUBLE_EQ(s.rows[1].eval_error_pct, 50.0 - 0.1);
}

// Experiments

ExperimentConfig tiny_mixture(const fs::path& out) {
    auto cfg = default_config(ExperimentId::GaussianMixture);
    cfg.seeds = {1, 2};
    cfg.train.epochs = 3;
    cfg.data.n_per_class = 40;
    cfg.data.eval_per_class = 40;
    cfg.output_dir = out;
    return cfg;
}

TEST(Experiments, RerunWritesIdenticalMetrics) {
    const auto a = scratch_dir("rerun_a");
    const auto b = scratch_dir("rerun_b");
    run_experiment(tiny_mixture(a));
    run_experiment(tiny_mixture(b));
    for (const char* name : {"metrics_seed1.csv", "metrics_seed2.csv", "summary.csv", "checkpoint_seed1.txt"}) {
        ASSERT_TRUE(fs::exists(a / name)) << name;
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    }
    EXPECT_TRUE(fs::exists(a / "timing_seed1.csv"));
    EXPECT_TRUE(fs::exists(a / "config.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiments, WorkersDoNotChangeResults) {
    const auto a = scratch_dir("workers_a");
    const auto b = scratch_dir("workers_b");
    auto cfg = tiny_mixture(a);
    run_experiment(cfg);
    cfg.output_dir = b;
    cfg.workers = 2;
    run_experiment(cfg);
    EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiments, InvalidConfigFailsBeforeWriting) {
    const auto dir = scratch_dir("invalid");
    auto cfg = tiny_mixture(dir);
    cfg.noise.alpha = -1.0;
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
    EXPECT_FALSE(fs::exists(dir));
}

TEST(Experiments, UniqueCountRunsWithCurriculum) {
    const auto dir = scratch_dir("uc");
    auto cfg = default_config(ExperimentId::UniqueCount);
    cfg.seeds = {1};
    cfg.data.n_train = 64;
    cfg.data.n_eval = 32;
    cfg.model.recurrent_hidden = 8;
    cfg.model.head_hidden = 8;
    cfg.train.curriculum = {{3, 1}, {10, 1}};
    cfg.output_dir = dir;
    const auto res = run_experiment(cfg);
    ASSERT_EQ(res.runs.size(), 1u);
    EXPECT_EQ(res.runs[0].metrics.rows.size(), 2u);
    fs::remove_all(dir);
}

TEST(Experiments, AnnealDemoWritesBasinCsv) {
    const auto dir = scratch_dir("demo");
    auto cfg = default_config(ExperimentId::AnnealDemo);
    cfg.demo.runs = 5;
    cfg.demo.steps = 500;
    cfg.output_dir = dir;
    const auto res = run_experiment(cfg);
    ASSERT_TRUE(res.demo.has_value());
    EXPECT_EQ(res.demo->runs, 5u);
    const auto text = slurp(dir / "anneal_demo.csv");
    EXPECT_EQ(text.rfind("runs,annealed_hits,plain_hits,annealed_fraction,plain_fraction\n5,", 0), 0u);
    fs::remove_all(dir);
}

}  // namespace
}  // namespace noisy::harness
