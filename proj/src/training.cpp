#include "noisy/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace noisy {

double global_norm(const GradientMap& grads) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.matrix().squaredNorm();
    return std::sqrt(sq);
}

GradientMap clip_global_norm(GradientMap grads, double threshold) {
    if (!(threshold > 0.0)) {
        throw std::invalid_argument("clip_global_norm: threshold must be positive");
    }
    for (const auto& [name, g] : grads) {
        if (!g.all_finite()) {
            throw std::domain_error("clip_global_norm: non-finite gradient for '" + name + "'");
        }
    }
    const double norm = global_norm(grads);
    if (norm > threshold) {
        const double k = threshold / norm;
        for (auto& [name, g] : grads) g.matrix() *= k;
    }
    return grads;
}

void optimizer_step(OptimizerState& state, ParameterSet& params, const GradientMap& grads) {
    const auto& cfg = state.config;
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) {
            throw std::invalid_argument("optimizer_step: gradient for unknown parameter '" + name + "'");
        }
        Tensor& theta = it->second;
        if (theta.shape() != g.shape()) {
            throw std::invalid_argument("optimizer_step: shape mismatch for '" + name + "': " +
                                        shape_to_string(theta.shape()) + " vs " +
                                        shape_to_string(g.shape()));
        }
        Tensor::Matrix update;
        switch (cfg.kind) {
        case OptimizerKind::Sgd:
            update = -cfg.learning_rate * g.matrix();
            break;
        case OptimizerKind::SgdMomentum: {
            auto [acc, inserted] = state.accumulators.try_emplace(name, g.shape());
            acc->second.matrix() = cfg.momentum * acc->second.matrix() - cfg.learning_rate * g.matrix();
            update = acc->second.matrix();
            break;
        }
        case OptimizerKind::RmsProp: {
            auto [acc, inserted] = state.accumulators.try_emplace(name, g.shape());
            auto& a = acc->second.matrix();
            a = cfg.decay * a + (1.0 - cfg.decay) * g.matrix().cwiseAbs2();
            update = (-cfg.learning_rate * g.array() / (a.array().sqrt() + cfg.epsilon)).matrix();
            break;
        }
        }
        if (!update.allFinite()) {
            throw std::domain_error("optimizer_step: non-finite update for '" + name + "'");
        }
        theta.matrix() += update;
    }
}

double anneal_value(const AnnealSchedule& s, std::uint64_t minibatch_index) {
    const std::uint64_t t = s.period == 0 ? minibatch_index : minibatch_index / s.period;
    return std::max(s.floor, s.c0 / std::sqrt(static_cast<double>(t) + 1.0));
}

LabeledData gather(const LabeledData& data, std::span<const std::size_t> order, std::size_t first,
                   std::size_t count) {
    const auto cols = data.inputs.shape()[1];
    LabeledData out{Tensor({count, cols}), std::vector<int>(count)};
    for (std::size_t k = 0; k < count; ++k) {
        const auto src = static_cast<Eigen::Index>(order[first + k]);
        out.inputs.matrix().row(static_cast<Eigen::Index>(k)) = data.inputs.matrix().row(src);
        out.labels[k] = data.labels[order[first + k]];
    }
    return out;
}

bool MetricsRow::same_results(const MetricsRow& o) const {
    return epoch == o.epoch && minibatches == o.minibatches && train_nll == o.train_nll &&
           eval_nll == o.eval_nll && eval_accuracy == o.eval_accuracy &&
           eval_error_pct == o.eval_error_pct && c == o.c;
}

EvalResult evaluate(const Classifier& model, const LabeledData& data, std::size_t chunk) {
    if (data.size() == 0) return {};
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double nll = 0.0;
    std::size_t correct = 0;
    for (std::size_t first = 0; first < data.size(); first += chunk) {
        const auto count = std::min(chunk, data.size() - first);
        const LabeledData batch = gather(data, order, first, count);
        ad::Tape tape;
        const Binding b(tape, model.params);
        const ForwardContext ctx{nullptr, false, std::nullopt};
        const auto logits = model.logits(b, batch.inputs, ctx);
        const auto loss = ad::softmax_cross_entropy(tape, logits, batch.labels);
        nll += tape.value(loss).item() * static_cast<double>(count);
        const Tensor& lv = tape.value(logits);
        for (std::size_t r = 0; r < count; ++r) {
            if (argmax_row(lv, static_cast<Eigen::Index>(r)) == static_cast<std::size_t>(batch.labels[r])) {
                ++correct;
            }
        }
    }
    const auto n = static_cast<double>(data.size());
    return {nll / n, static_cast<double>(correct) / n};
}

MetricsRow train_epoch(Classifier& model, const LabeledData& train, const LabeledData& eval,
                       OptimizerState& optimizer, const EpochOptions& options, RngStream& rng,
                       TrainState& state) {
    if (train.size() == 0) throw std::invalid_argument("train_epoch: empty training data");
    if (options.batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be positive");
    const auto start = std::chrono::steady_clock::now();

    // Fisher-Yates on the run's stream.
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    double c = options.fixed_c;
    for (std::size_t first = 0; first < train.size(); first += options.batch_size) {
        const auto count = std::min(options.batch_size, train.size() - first);
        const LabeledData batch = gather(train, order, first, count);

        ForwardContext ctx{nullptr, true, std::nullopt};
        if (options.schedule) {
            c = anneal_value(*options.schedule, state.minibatches);
            ctx.c_override = c;
        }
        ad::Tape tape;
        const Binding b(tape, model.params);
        NoiseSource noise(rng);
        ctx.noise = &noise;
        const auto loss = ad::softmax_cross_entropy(tape, model.logits(b, batch.inputs, ctx), batch.labels);
        const double value = tape.value(loss).item();
        if (!std::isfinite(value)) {
            throw TrainingDiverged("training diverged at epoch " + std::to_string(state.epoch + 1) +
                                       ", minibatch " + std::to_string(state.minibatches),
                                   state.last_good);
        }
        loss_sum += value * static_cast<double>(count);
        tape.backward(loss);
        GradientMap grads = b.gradients();
        if (options.clip_threshold > 0.0) {
            grads = clip_global_norm(std::move(grads), options.clip_threshold);
        }
        optimizer_step(optimizer, model.params, grads);
        ++state.minibatches;
    }

    ++state.epoch;
    MetricsRow row;
    row.epoch = state.epoch;
    row.minibatches = state.minibatches;
    row.train_nll = loss_sum / static_cast<double>(train.size());
    row.c = c;
    if (options.run_eval) {
        const auto ev = evaluate(model, eval);
        row.eval_nll = ev.nll;
        row.eval_accuracy = ev.accuracy;
        row.eval_error_pct = 100.0 * (1.0 - ev.accuracy);
    }
    if (!std::isfinite(row.eval_nll)) {
        throw TrainingDiverged("evaluation loss is not finite after epoch " + std::to_string(state.epoch),
                               state.last_good);
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.last_good = row;
    return row;
}

}  // namespace noisy
