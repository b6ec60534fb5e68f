#include "noisy/harness/experiments.hpp"

#include "noisy/checkpoint.hpp"
#include "noisy/harness/metrics_io.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace noisy::harness {

namespace {

Activation hidden_activation(const ExperimentConfig& cfg) {
    const auto& name = cfg.model.activation;
    if (name == "tanh") return Activation::soft_tanh();
    if (name == "sigmoid") return Activation::soft_sigmoid();
    if (name == "relu") return Activation::relu();
    if (name == "hardsigmoid") return Activation::hard_sat(activation_config(cfg.noise, HardSatFn::hard_sigmoid()));
    return Activation::hard_sat(activation_config(cfg.noise, HardSatFn::hard_tanh()));
}

double reported_c(const ExperimentConfig& cfg, const Classifier& model) {
    if (!model.has_noise()) return 0.0;
    if (cfg.noise.mode == NoiseMode::Nani || cfg.noise.mode == NoiseMode::Nanis) return cfg.noise.sigma_fixed;
    return cfg.noise.c;
}

}  // namespace

ExperimentData make_data(const ExperimentConfig& cfg) {
    ExperimentData out;
    const auto epochs_or_curriculum = [&](auto make_train) {
        if (cfg.train.curriculum.empty()) {
            out.train_phases.push_back(make_train(cfg.data.length, 0));
            out.phase_epochs.push_back(cfg.train.epochs);
            return;
        }
        for (std::size_t k = 0; k < cfg.train.curriculum.size(); ++k) {
            const auto& phase = cfg.train.curriculum[k];
            out.train_phases.push_back(make_train(phase.max_length, k));
            out.phase_epochs.push_back(phase.epochs);
        }
    };

    switch (cfg.experiment) {
    case ExperimentId::GaussianMixture: {
        auto train = gen_gaussian_mixture(2 * cfg.data.seed, cfg.data.n_per_class, cfg.data.dimension);
        auto eval = gen_gaussian_mixture(2 * cfg.data.seed + 1, cfg.data.eval_per_class, cfg.data.dimension);
        out.train_phases.push_back(std::move(train.data));
        out.phase_epochs.push_back(cfg.train.epochs);
        out.eval = std::move(eval.data);
        out.input_dim = cfg.data.dimension;
        out.num_classes = 3;
        break;
    }
    case ExperimentId::DigitsMlp: {
        const auto path = cfg.data.digits_path.empty() ? default_digits_path()
                                                       : std::filesystem::path(cfg.data.digits_path);
        const auto digits = load_digits(path);
        auto [train, eval] = split(digits.data, cfg.data.eval_fraction, cfg.data.seed);
        out.train_phases.push_back(std::move(train));
        out.phase_epochs.push_back(cfg.train.epochs);
        out.eval = std::move(eval);
        out.input_dim = 64;
        out.num_classes = 10;
        break;
    }
    case ExperimentId::UniqueCount: {
        const auto& d = cfg.data;
        epochs_or_curriculum([&](std::size_t length, std::size_t phase) {
            return gen_unique_count(3 * d.seed + 1000 * phase, d.n_train, length, d.value_lo, d.value_hi).data;
        });
        const auto eval = gen_unique_count(3 * d.seed + 1, d.n_eval, d.length, d.value_lo, d.value_hi);
        out.eval = eval.data;
        out.input_dim = static_cast<std::size_t>(d.value_hi - d.value_lo + 1);
        out.num_classes = eval.num_classes;
        break;
    }
    case ExperimentId::AnnealDemo:
        throw std::invalid_argument("make_data: the anneal demo has no dataset");
    }
    return out;
}

std::unique_ptr<Classifier> build_model(const ExperimentConfig& cfg, std::size_t input_dim,
                                        std::size_t num_classes) {
    if (cfg.experiment == ExperimentId::UniqueCount) {
        SequenceClassifier::Spec spec;
        spec.vocab = input_dim;
        spec.hidden = cfg.model.recurrent_hidden;
        spec.head_hidden = cfg.model.head_hidden;
        spec.classes = num_classes;
        spec.cell = cfg.model.cell == "gru" ? CellKind::Gru : CellKind::Lstm;
        if (cfg.model.gates == "soft") {
            spec.gate = Activation::soft_sigmoid();
            spec.candidate = Activation::soft_tanh();
        } else {
            spec.gate = Activation::hard_sat(activation_config(cfg.noise, HardSatFn::hard_sigmoid()));
            spec.candidate = Activation::hard_sat(activation_config(cfg.noise, HardSatFn::hard_tanh()));
        }
        spec.recurrent_init.scheme =
            cfg.model.recurrent_init == "uniform" ? InitScheme::FanInUniform : InitScheme::Orthogonal;
        spec.recurrent_init.scale = cfg.model.recurrent_init_scale;
        spec.forget_bias = cfg.model.forget_bias;
        return std::make_unique<SequenceClassifier>(spec);
    }
    return std::make_unique<Mlp>(make_mlp(input_dim, cfg.model.hidden, num_classes, hidden_activation(cfg)));
}

SeedRun run_seed(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed) {
    SeedRun run;
    run.seed = seed;
    auto model = build_model(cfg, data.input_dim, data.num_classes);
    RngStream init_rng(seed, 1);
    model->init(init_rng);

    RngStream rng(seed, 2);
    OptimizerState optimizer{cfg.optimizer, {}};
    EpochOptions options;
    options.batch_size = cfg.train.batch_size;
    options.clip_threshold = cfg.train.clip_threshold;
    options.fixed_c = reported_c(cfg, *model);
    if (model->has_noise() && cfg.schedule) options.schedule = cfg.schedule;

    TrainState state;
    double best_nll = std::numeric_limits<double>::infinity();
    std::size_t total_epochs = 0;
    for (auto e : data.phase_epochs) total_epochs += e;
    for (std::size_t phase = 0; phase < data.train_phases.size(); ++phase) {
        for (std::size_t e = 0; e < data.phase_epochs[phase]; ++e) {
            const bool last = state.epoch + 1 == total_epochs;
            options.run_eval = last || (state.epoch + 1) % cfg.train.eval_every == 0;
            const MetricsRow row = train_epoch(*model, data.train_phases[phase], data.eval, optimizer,
                                               options, rng, state);
            if (!options.run_eval) continue;
            run.metrics.rows.push_back(row);
            if (row.eval_nll < best_nll) {
                best_nll = row.eval_nll;
                run.best_params = model->params;
            }
        }
    }
    return run;
}

void write_basin_csv(const std::filesystem::path& path, const BasinStats& stats) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g\n", stats.runs, stats.annealed_hits,
                  stats.plain_hits, stats.annealed_fraction(), stats.plain_fraction());
    os << "runs,annealed_hits,plain_hits,annealed_fraction,plain_fraction\n" << buf;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream os(cfg.output_dir / "config.json", std::ios::binary);
        os << to_json(cfg).dump(2) << '\n';
    }

    ExperimentResult result;
    if (cfg.experiment == ExperimentId::AnnealDemo) {
        result.demo = run_anneal_demo(cfg.demo, cfg.seeds.front());
        write_basin_csv(cfg.output_dir / "anneal_demo.csv", *result.demo);
        return result;
    }

    const ExperimentData data = make_data(cfg);
    result.runs.resize(cfg.seeds.size());
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::mutex next_mutex;
    std::size_t next = 0;
    const auto worker = [&] {
        for (;;) {
            std::size_t k;
            {
                std::lock_guard lock(next_mutex);
                if (next == cfg.seeds.size()) return;
                k = next++;
            }
            try {
                result.runs[k] = run_seed(cfg, data, cfg.seeds[k]);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min(cfg.workers, cfg.seeds.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::vector<MetricsRecord> records;
    for (const auto& run : result.runs) {
        const auto tag = std::to_string(run.seed);
        write_metrics_csv(cfg.output_dir / ("metrics_seed" + tag + ".csv"), run.metrics);
        write_timing_csv(cfg.output_dir / ("timing_seed" + tag + ".csv"), run.metrics);
        save_checkpoint(cfg.output_dir / ("checkpoint_seed" + tag + ".txt"), run.best_params);
        records.push_back(run.metrics);
    }
    result.summary = median_summary(records);
    write_metrics_csv(cfg.output_dir / "summary.csv", result.summary);
    return result;
}

}  // namespace noisy::harness
