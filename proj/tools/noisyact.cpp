// noisyact: command-line front end for the noisy-activation experiments.

#include "noisy/checkpoint.hpp"
#include "noisy/harness/anneal_demo.hpp"
#include "noisy/harness/config.hpp"
#include "noisy/harness/datasets.hpp"
#include "noisy/harness/experiments.hpp"
#include "noisy/harness/metrics_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

namespace fs = std::filesystem;
using namespace noisy;
using namespace noisy::harness;

namespace {

struct CommonOptions {
    std::string config;
    std::string experiment;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)");
    cmd->add_option("--experiment", o.experiment,
                    "Experiment id when no config is given (gaussian-mixture, digits-mlp, unique-count, anneal-demo)");
    cmd->add_option("--seed", o.seed, "Run only this seed");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--mode", o.mode, "Noise mode override")
        ->check(CLI::IsMember({"det", "nan", "nah", "nani", "nanil", "nanis"}));
}

ExperimentConfig resolve(const CommonOptions& o) {
    ExperimentConfig cfg;
    if (!o.config.empty()) {
        cfg = load_config(o.config);
    } else if (!o.experiment.empty()) {
        cfg = default_config(parse_experiment_id(o.experiment));
    } else {
        throw std::invalid_argument("either --config or --experiment is required");
    }
    if (o.seed) cfg.seeds = {*o.seed};
    if (!o.mode.empty()) cfg.noise.mode = parse_noise_mode(o.mode);
    if (!o.out.empty()) {
        cfg.output_dir = o.out;
    } else if (const char* root = std::getenv(kOutputRootEnv); root && cfg.output_dir.is_relative()) {
        cfg.output_dir = fs::path(root) / cfg.output_dir;
    }
    validate(cfg);
    return cfg;
}

void print_row(const char* label, const MetricsRow& r) {
    std::printf("%s epoch=%zu train_nll=%.6f eval_nll=%.6f eval_acc=%.4f eval_err=%.2f%% c=%.4g\n", label,
                r.epoch, r.train_nll, r.eval_nll, r.eval_accuracy, r.eval_error_pct, r.c);
}

int cmd_gen_data(const CommonOptions& o) {
    const auto cfg = resolve(o);
    if (cfg.experiment == ExperimentId::AnnealDemo) {
        throw std::invalid_argument("the anneal demo has no dataset");
    }
    fs::create_directories(cfg.output_dir);
    const auto data = make_data(cfg);
    const std::string kind = to_string(cfg.experiment) == "unique-count" ? "unique-count" : "features";
    for (std::size_t k = 0; k < data.train_phases.size(); ++k) {
        const auto name = data.train_phases.size() == 1 ? std::string("train.csv")
                                                        : "train_phase" + std::to_string(k) + ".csv";
        write_dataset_csv(cfg.output_dir / name, {kind, data.train_phases[k], data.num_classes, cfg.data.seed});
    }
    write_dataset_csv(cfg.output_dir / "eval.csv", {kind, data.eval, data.num_classes, cfg.data.seed});
    std::printf("wrote %zu training file(s) and eval.csv to %s\n", data.train_phases.size(),
                cfg.output_dir.string().c_str());
    return 0;
}

int cmd_train(const CommonOptions& o) {
    const auto cfg = resolve(o);
    const auto result = run_experiment(cfg);
    if (result.demo) {
        std::printf("annealed %.2f plain %.2f (%zu runs)\n", result.demo->annealed_fraction(),
                    result.demo->plain_fraction(), result.demo->runs);
        return 0;
    }
    for (const auto& run : result.runs) {
        const auto label = "seed " + std::to_string(run.seed);
        print_row(label.c_str(), run.metrics.rows.back());
    }
    print_row("median", result.summary.rows.back());
    std::printf("outputs in %s\n", cfg.output_dir.string().c_str());
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
    const auto cfg = resolve(o);
    if (cfg.experiment == ExperimentId::AnnealDemo) {
        throw std::invalid_argument("the anneal demo has no model to evaluate");
    }
    const auto data = make_data(cfg);
    auto model = build_model(cfg, data.input_dim, data.num_classes);
    RngStream init(0);
    model->init(init);
    const auto loaded = load_checkpoint(checkpoint);
    for (const auto& [name, value] : model->params) {
        const auto it = loaded.find(name);
        if (it == loaded.end() || it->second.shape() != value.shape()) {
            throw std::invalid_argument("checkpoint does not match the configured model at '" + name + "'");
        }
    }
    model->params = loaded;
    const auto ev = evaluate(*model, data.eval);
    std::printf("eval_nll=%.17g eval_accuracy=%.17g eval_error_pct=%.17g\n", ev.nll, ev.accuracy,
                100.0 * (1.0 - ev.accuracy));
    return 0;
}

int cmd_anneal_demo(CommonOptions o, std::optional<std::size_t> runs) {
    if (o.config.empty() && o.experiment.empty()) o.experiment = "anneal-demo";
    auto cfg = resolve(o);
    if (runs) cfg.demo.runs = *runs;
    const auto stats = run_anneal_demo(cfg.demo, cfg.seeds.front());
    std::printf("runs=%zu annealed_global=%zu (%.2f) plain_global=%zu (%.2f)\n", stats.runs, stats.annealed_hits,
                stats.annealed_fraction(), stats.plain_hits, stats.plain_fraction());
    if (!o.out.empty()) {
        fs::create_directories(cfg.output_dir);
        write_basin_csv(cfg.output_dir / "anneal_demo.csv", stats);
    }
    return 0;
}

int cmd_summarize(const std::string& dir) {
    static const std::regex pattern(R"(metrics_seed\d+\.csv)");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (std::regex_match(entry.path().filename().string(), pattern)) files.push_back(entry.path());
    }
    if (files.empty()) throw std::invalid_argument("no metrics_seed*.csv files in " + dir);
    std::sort(files.begin(), files.end());
    std::vector<MetricsRecord> records;
    for (const auto& f : files) records.push_back(read_metrics_csv(f));
    const auto summary = median_summary(records);
    write_metrics_csv(fs::path(dir) / "summary.csv", summary);
    std::printf("%zu runs summarized\n", files.size());
    if (!summary.rows.empty()) print_row("median", summary.rows.back());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noisy activation function experiments"};
    app.require_subcommand(1);

    CommonOptions gen_opts, train_opts, eval_opts, demo_opts;
    std::string checkpoint, summary_dir;
    std::optional<std::size_t> demo_runs;

    auto* gen = app.add_subcommand("gen-data", "Write the experiment's datasets as CSV");
    add_common(gen, gen_opts);
    auto* train = app.add_subcommand("train", "Run an experiment over its seeds");
    add_common(train, train_opts);
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the experiment's eval set");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    auto* demo = app.add_subcommand("anneal-demo", "Noisy descent on a 1-D multimodal objective");
    add_common(demo, demo_opts);
    demo->add_option("--runs", demo_runs, "Number of random starts");
    auto* summarize = app.add_subcommand("summarize", "Median summary of metrics_seed*.csv in a directory");
    summarize->add_option("dir", summary_dir, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen_data(gen_opts);
        if (*train) return cmd_train(train_opts);
        if (*eval) return cmd_eval(eval_opts, checkpoint);
        if (*demo) return cmd_anneal_demo(demo_opts, demo_runs);
        if (*summarize) return cmd_summarize(summary_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
