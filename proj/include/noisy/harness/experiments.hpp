#pragma once

#include "noisy/harness/anneal_demo.hpp"
#include "noisy/harness/config.hpp"
#include "noisy/harness/datasets.hpp"
#include "noisy/networks.hpp"
#include "noisy/training.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace noisy::harness {

/// Training phases (one dataset per curriculum phase) plus the evaluation set.
struct ExperimentData {
    std::vector<LabeledData> train_phases;
    std::vector<std::size_t> phase_epochs;
    LabeledData eval;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
};

ExperimentData make_data(const ExperimentConfig& cfg);

std::unique_ptr<Classifier> build_model(const ExperimentConfig& cfg, std::size_t input_dim,
                                        std::size_t num_classes);

struct SeedRun {
    std::uint64_t seed = 0;
    MetricsRecord metrics;
    ParameterSet best_params;  // parameters at the lowest eval NLL
};

/// Trains one seed. Model init draws from RngStream(seed, 1), training from RngStream(seed, 2).
SeedRun run_seed(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed);

struct ExperimentResult {
    std::vector<SeedRun> runs;
    MetricsRecord summary;
    std::optional<BasinStats> demo;
};

/// Validates cfg, runs every seed (cfg.workers threads) and writes into cfg.output_dir:
///   metrics_seed<S>.csv, timing_seed<S>.csv, checkpoint_seed<S>.txt, summary.csv, config.json
/// or, for the anneal demo, anneal_demo.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes anneal_demo.csv (runs,annealed_hits,plain_hits,annealed_fraction,plain_fraction).
void write_basin_csv(const std::filesystem::path& path, const BasinStats& stats);

}  // namespace noisy::harness
