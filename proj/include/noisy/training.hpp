#pragma once

#include "noisy/networks.hpp"
#include "noisy/rng.hpp"
#include "noisy/tensor.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace noisy {

// ---------------------------------------------------------------------------
// Gradient clipping

double global_norm(const GradientMap& grads);

/// Rescales all gradients by threshold / norm when the global L2 norm exceeds
/// threshold. Throws std::domain_error naming the first non-finite parameter.
GradientMap clip_global_norm(GradientMap grads, double threshold);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, SgdMomentum, RmsProp };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::RmsProp;
    double learning_rate = 1e-3;
    double momentum = 0.9;  // SgdMomentum
    double decay = 0.9;     // RMSProp rho
    double epsilon = 1e-6;  // RMSProp delta
};

/// Optimizer hyper-parameters plus per-parameter accumulators (velocity for
/// momentum, running mean of g^2 for RMSProp), shaped like the parameters.
struct OptimizerState {
    OptimizerConfig config;
    GradientMap accumulators;
};

/// SGD:      theta <- theta - lr g
/// Momentum: v <- mu v - lr g, theta <- theta + v
/// RMSProp:  a <- rho a + (1 - rho) g^2, theta <- theta - lr g / (sqrt(a) + delta)
/// Throws std::domain_error if an update would produce a non-finite value.
void optimizer_step(OptimizerState& state, ParameterSet& params, const GradientMap& grads);

// ---------------------------------------------------------------------------
// Noise annealing

/// c(t) = max(floor, c0 / sqrt(t + 1)) with t = floor(minibatch_index / period).
struct AnnealSchedule {
    double c0 = 30.0;
    double floor = 0.5;
    std::uint64_t period = 200;
};

double anneal_value(const AnnealSchedule& s, std::uint64_t minibatch_index);

// ---------------------------------------------------------------------------
// Training loop

struct LabeledData {
    Tensor inputs;            // [n, features] or [n, steps]
    std::vector<int> labels;  // n entries

    std::size_t size() const { return labels.size(); }
};

/// Rows [first, first + count) of `data` in the order given by `order`.
LabeledData gather(const LabeledData& data, std::span<const std::size_t> order, std::size_t first,
                   std::size_t count);

struct CurriculumPhase {
    std::size_t max_length;
    std::size_t epochs;
};

struct TrainLoopConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double clip_threshold = 5.0;  // <= 0 disables clipping
    std::uint64_t seed = 1;
    std::size_t eval_every = 1;
    std::vector<CurriculumPhase> curriculum;
};

struct MetricsRow {
    std::size_t epoch = 0;
    std::uint64_t minibatches = 0;
    double train_nll = 0.0;
    double eval_nll = 0.0;
    double eval_accuracy = 0.0;
    double eval_error_pct = 0.0;
    double c = 0.0;
    double seconds = 0.0;

    /// Equality on every field except wall time.
    bool same_results(const MetricsRow& o) const;
};

struct MetricsRecord {
    std::vector<MetricsRow> rows;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, MetricsRow last_good)
        : std::runtime_error(what), last_good_(last_good) {}
    const MetricsRow& last_good() const { return last_good_; }

private:
    MetricsRow last_good_;
};

struct EvalResult {
    double nll = 0.0;
    double accuracy = 0.0;
};

/// Deterministic evaluation (expected-value activations). Consumes no randomness.
EvalResult evaluate(const Classifier& model, const LabeledData& data, std::size_t chunk = 256);

/// Mutable state threaded through successive epochs of one run.
struct TrainState {
    std::size_t epoch = 0;
    std::uint64_t minibatches = 0;
    MetricsRow last_good;
};

struct EpochOptions {
    std::size_t batch_size = 32;
    double clip_threshold = 5.0;
    /// When set, c of every noisy site follows the schedule; otherwise `fixed_c` is reported.
    std::optional<AnnealSchedule> schedule;
    double fixed_c = 0.0;
    bool run_eval = true;
};

/// One shuffled pass over `train`: forward with training noise, backward, clip,
/// step; then a deterministic evaluation on `eval`.
MetricsRow train_epoch(Classifier& model, const LabeledData& train, const LabeledData& eval,
                       OptimizerState& optimizer, const EpochOptions& options, RngStream& rng,
                       TrainState& state);

}  // namespace noisy
