#pragma once

#include "noisy/activations.hpp"
#include "noisy/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace noisy::harness {

enum class ExperimentId { GaussianMixture, DigitsMlp, UniqueCount, AnnealDemo };

std::string to_string(ExperimentId id);
ExperimentId parse_experiment_id(const std::string& name);

struct NoiseSettings {
    NoiseMode mode = NoiseMode::Deterministic;
    double alpha = 1.0;
    double c = 0.5;
    double sigma_fixed = 0.05;
    bool per_unit_p = false;
};

struct ModelSettings {
    /// Hidden activation of MLPs: tanh, sigmoid, relu, hardtanh, hardsigmoid.
    /// The hard ones carry the configured noise mode.
    std::string activation = "hardtanh";
    std::vector<std::size_t> hidden = {8, 8, 8};
    /// Sequence model: "hard" gates follow the noise mode, "soft" is the plain sigmoid/tanh LSTM.
    std::string gates = "hard";
    std::string cell = "lstm";
    std::size_t recurrent_hidden = 32;
    std::size_t head_hidden = 32;
    std::string recurrent_init = "orthogonal";
    double recurrent_init_scale = 0.01;
    double forget_bias = 0.0;
};

struct DataSettings {
    std::uint64_t seed = 0;
    // gaussian-mixture
    std::size_t n_per_class = 200;
    std::size_t eval_per_class = 200;
    std::size_t dimension = 2;
    // unique-count
    std::size_t n_train = 4000;
    std::size_t n_eval = 2000;
    std::size_t length = 10;
    int value_lo = 0;
    int value_hi = 5;
    // digits
    std::string digits_path;  // empty: bundled data/digits.csv
    double eval_fraction = 0.25;
};

struct AnnealDemoSettings {
    std::size_t runs = 100;
    double learning_rate = 0.01;
    std::size_t steps = 20000;
    std::size_t settle_steps = 2000;
    double start_lo = -6.0;
    double start_hi = 6.0;
    AnnealSchedule schedule{30.0, 0.5, 1000};
};

struct ExperimentConfig {
    ExperimentId experiment = ExperimentId::GaussianMixture;
    ModelSettings model;
    NoiseSettings noise;
    OptimizerConfig optimizer;
    std::optional<AnnealSchedule> schedule;
    TrainLoopConfig train;
    DataSettings data;
    AnnealDemoSettings demo;
    std::vector<std::uint64_t> seeds = {1};
    std::filesystem::path output_dir = "runs";
    std::size_t workers = 1;
};

/// Defaults for each experiment, tuned for desk-scale runs.
ExperimentConfig default_config(ExperimentId id);

/// Parses a config document. Missing keys keep the experiment's defaults.
/// Throws std::invalid_argument on unknown keys or values of the wrong type.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Throws std::invalid_argument describing the first problem found.
void validate(const ExperimentConfig& cfg);

NoisyActConfig activation_config(const NoiseSettings& noise, HardSatFn base);

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "NOISYACT_OUTPUT_ROOT";

}  // namespace noisy::harness
