#include "noisy/networks.hpp"

#include <Eigen/QR>

#include <cmath>
#include <stdexcept>

namespace noisy {

namespace {

Tensor uniform_tensor(Shape shape, double lo, double hi, RngStream& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

Tensor fan_in_uniform(std::size_t in, std::size_t out, RngStream& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return uniform_tensor({in, out}, -bound, bound, rng);
}

Tensor orthogonal(std::size_t rows, std::size_t cols, double scale, RngStream& rng) {
    const auto n = static_cast<Eigen::Index>(std::max(rows, cols));
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    // Fix the sign ambiguity of QR so the result is Haar distributed.
    const Eigen::VectorXd d = qr.matrixQR().diagonal();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (d(j) < 0) q.col(j) *= -1.0;
    }
    return Tensor::from_matrix(scale * q.topLeftCorner(static_cast<Eigen::Index>(rows),
                                                       static_cast<Eigen::Index>(cols)));
}

Tensor recurrent_matrix(std::size_t n, const RecurrentInit& init, RngStream& rng) {
    if (init.scheme == InitScheme::Orthogonal) return orthogonal(n, n, init.scale, rng);
    Tensor w = fan_in_uniform(n, n, rng);
    w.matrix() *= init.scale;
    return w;
}

// x W + h U + b
ad::VarId gate_preactivation(const Binding& b, ad::VarId x, ad::VarId h, const std::string& prefix,
                             const std::string& gate) {
    auto& t = b.tape();
    const auto xw = ad::matmul(t, x, b[prefix + ".W" + gate]);
    const auto hu = ad::matmul(t, h, b[prefix + ".U" + gate]);
    return ad::add_bias(t, ad::add(t, xw, hu), b[prefix + ".b" + gate]);
}

void init_gate(ParameterSet& params, const std::string& prefix, const std::string& gate,
               std::size_t input, std::size_t hidden, const RecurrentInit& rinit, double bias,
               const Activation& act, RngStream& rng) {
    params[prefix + ".W" + gate] = fan_in_uniform(input, hidden, rng);
    params[prefix + ".U" + gate] = recurrent_matrix(hidden, rinit, rng);
    params[prefix + ".b" + gate] = Tensor({hidden}, bias);
    init_activation_p(params, prefix + ".p" + gate, act, hidden, rng);
}

}  // namespace

Binding::Binding(ad::Tape& tape, const ParameterSet& params) : tape_(&tape) {
    for (const auto& [name, value] : params) {
        vars_.emplace(name, tape.variable(value));
    }
}

ad::VarId Binding::operator[](const std::string& name) const {
    const auto it = vars_.find(name);
    if (it == vars_.end()) {
        throw std::out_of_range("no parameter named '" + name + "'");
    }
    return it->second;
}

std::optional<ad::VarId> Binding::find(const std::string& name) const {
    const auto it = vars_.find(name);
    if (it == vars_.end()) return std::nullopt;
    return it->second;
}

GradientMap Binding::gradients() const {
    GradientMap out;
    for (const auto& [name, id] : vars_) {
        out.emplace(name, tape_->grad(id));
    }
    return out;
}

void init_activation_p(ParameterSet& params, const std::string& name, const Activation& act,
                       std::size_t units, RngStream& rng) {
    if (!act.needs_p()) return;
    if (act.hard.per_unit_p) {
        params[name] = uniform_tensor({units}, -1.0, 1.0, rng);
    } else {
        params[name] = Tensor::scalar(rng.uniform(-1.0, 1.0));
    }
}

ad::VarId apply_activation(const Binding& b, const Activation& act, const std::string& p_name,
                           ad::VarId x, const ForwardContext& ctx) {
    auto& t = b.tape();
    switch (act.kind) {
    case Activation::Kind::Identity:
        return x;
    case Activation::Kind::Relu:
        return ad::relu(t, x);
    case Activation::Kind::Tanh:
        return ad::tanh(t, x);
    case Activation::Kind::Sigmoid:
        return ad::sigmoid(t, x);
    case Activation::Kind::HardSat:
        return record_noisy_activation(t, act.hard, x, b.find(p_name), ctx);
    }
    throw std::logic_error("apply_activation: unknown kind");
}

void DenseLayer::init(ParameterSet& params, RngStream& rng) const {
    params[name + ".W"] = fan_in_uniform(in, out, rng);
    params[name + ".b"] = Tensor({out});
    init_activation_p(params, name + ".p", activation, out, rng);
}

ad::VarId DenseLayer::forward(const Binding& b, ad::VarId x, const ForwardContext& ctx) const {
    auto& t = b.tape();
    const auto& xs = t.value(x).shape();
    if (xs.size() != 2 || xs[1] != in) {
        throw std::invalid_argument("dense layer '" + name + "': expected input [batch," +
                                    std::to_string(in) + "], got " + shape_to_string(xs));
    }
    const auto pre = ad::add_bias(t, ad::matmul(t, x, b[name + ".W"]), b[name + ".b"]);
    return apply_activation(b, activation, name + ".p", pre, ctx);
}

Tensor dense_forward(const DenseLayer& layer, const ParameterSet& params, const Tensor& x,
                     RngStream& rng, bool training) {
    ad::Tape tape;
    const Binding b(tape, params);
    NoiseSource noise(rng);
    const ForwardContext ctx{&noise, training, std::nullopt};
    return tape.value(layer.forward(b, tape.constant(x), ctx));
}

void GruCell::init(ParameterSet& params, RngStream& rng) const {
    init_gate(params, name, "z", input, hidden, recurrent_init, 0.0, gate, rng);
    init_gate(params, name, "r", input, hidden, recurrent_init, 0.0, gate, rng);
    init_gate(params, name, "c", input, hidden, recurrent_init, 0.0, candidate, rng);
}

ad::VarId GruCell::step(const Binding& b, ad::VarId h_prev, ad::VarId x,
                        const ForwardContext& ctx) const {
    auto& t = b.tape();
    const auto& hs = t.value(h_prev).shape();
    if (hs.size() != 2 || hs[1] != hidden) {
        throw std::invalid_argument("gru '" + name + "': expected state [batch," +
                                    std::to_string(hidden) + "], got " + shape_to_string(hs));
    }
    const auto z = apply_activation(b, gate, name + ".pz", gate_preactivation(b, x, h_prev, name, "z"), ctx);
    const auto r = apply_activation(b, gate, name + ".pr", gate_preactivation(b, x, h_prev, name, "r"), ctx);
    const auto rh = ad::mul(t, r, h_prev);
    const auto cand = apply_activation(b, candidate, name + ".pc",
                                       gate_preactivation(b, x, rh, name, "c"), ctx);
    // (1 - z) h + z c  ==  h + z (c - h)
    return ad::add(t, h_prev, ad::mul(t, z, ad::sub(t, cand, h_prev)));
}

void LstmCell::init(ParameterSet& params, RngStream& rng) const {
    init_gate(params, name, "i", input, hidden, recurrent_init, 0.0, gate, rng);
    init_gate(params, name, "f", input, hidden, recurrent_init, forget_bias, gate, rng);
    init_gate(params, name, "o", input, hidden, recurrent_init, 0.0, gate, rng);
    init_gate(params, name, "g", input, hidden, recurrent_init, 0.0, candidate, rng);
    init_activation_p(params, name + ".pc", candidate, hidden, rng);
}

LstmState LstmCell::step(const Binding& b, LstmState prev, ad::VarId x,
                         const ForwardContext& ctx) const {
    auto& t = b.tape();
    const auto& hs = t.value(prev.h).shape();
    if (hs.size() != 2 || hs[1] != hidden || t.value(prev.c).shape() != hs) {
        throw std::invalid_argument("lstm '" + name + "': expected state [batch," +
                                    std::to_string(hidden) + "], got " + shape_to_string(hs));
    }
    const auto i = apply_activation(b, gate, name + ".pi", gate_preactivation(b, x, prev.h, name, "i"), ctx);
    const auto f = apply_activation(b, gate, name + ".pf", gate_preactivation(b, x, prev.h, name, "f"), ctx);
    const auto o = apply_activation(b, gate, name + ".po", gate_preactivation(b, x, prev.h, name, "o"), ctx);
    const auto g = apply_activation(b, candidate, name + ".pg",
                                    gate_preactivation(b, x, prev.h, name, "g"), ctx);
    const auto c = ad::add(t, ad::mul(t, f, prev.c), ad::mul(t, i, g));
    const auto h = ad::mul(t, o, apply_activation(b, candidate, name + ".pc", c, ctx));
    return {h, c};
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("Mlp: needs at least one layer");
    for (std::size_t k = 1; k < layers_.size(); ++k) {
        if (layers_[k].in != layers_[k - 1].out) {
            throw std::invalid_argument("Mlp: layer '" + layers_[k].name + "' expects " +
                                        std::to_string(layers_[k].in) + " inputs but receives " +
                                        std::to_string(layers_[k - 1].out));
        }
    }
}

ad::VarId Mlp::logits(const Binding& b, const Tensor& inputs, const ForwardContext& ctx) const {
    auto x = b.tape().constant(inputs);
    for (const auto& layer : layers_) x = layer.forward(b, x, ctx);
    return x;
}

void Mlp::init(RngStream& rng) {
    params.clear();
    for (const auto& layer : layers_) layer.init(params, rng);
}

bool Mlp::has_noise() const {
    for (const auto& layer : layers_) {
        if (layer.activation.kind == Activation::Kind::HardSat &&
            layer.activation.hard.mode != NoiseMode::Deterministic) {
            return true;
        }
    }
    return false;
}

Mlp make_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t classes,
             const Activation& hidden_act) {
    std::vector<DenseLayer> layers;
    std::size_t prev = in;
    for (std::size_t k = 0; k < hidden.size(); ++k) {
        layers.push_back({"layer" + std::to_string(k), prev, hidden[k], hidden_act});
        prev = hidden[k];
    }
    layers.push_back({"logits", prev, classes, Activation::identity()});
    return Mlp(std::move(layers));
}

SequenceClassifier::SequenceClassifier(Spec spec) : spec_(std::move(spec)) {
    lstm_ = {"lstm", spec_.vocab, spec_.hidden, spec_.gate, spec_.candidate, spec_.recurrent_init,
             spec_.forget_bias};
    gru_ = {"gru", spec_.vocab, spec_.hidden, spec_.gate, spec_.candidate, spec_.recurrent_init};
    head_ = {"head", spec_.hidden, spec_.head_hidden, Activation::relu()};
    out_ = {"logits", spec_.head_hidden, spec_.classes, Activation::identity()};
}

void SequenceClassifier::init(RngStream& rng) {
    params.clear();
    if (spec_.cell == CellKind::Lstm) {
        lstm_.init(params, rng);
    } else {
        gru_.init(params, rng);
    }
    head_.init(params, rng);
    out_.init(params, rng);
}

bool SequenceClassifier::has_noise() const {
    const auto noisy = [](const Activation& a) {
        return a.kind == Activation::Kind::HardSat && a.hard.mode != NoiseMode::Deterministic;
    };
    return noisy(spec_.gate) || noisy(spec_.candidate);
}

Tensor SequenceClassifier::one_hot(const Tensor& inputs, std::size_t step) const {
    const auto batch = inputs.shape()[0];
    Tensor x({batch, spec_.vocab});
    for (std::size_t r = 0; r < batch; ++r) {
        const double v = inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(step));
        if (!(v >= 0.0 && v < static_cast<double>(spec_.vocab)) || v != std::floor(v)) {
            throw std::invalid_argument("sequence classifier: token " + std::to_string(v) +
                                        " outside vocabulary of size " + std::to_string(spec_.vocab));
        }
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(v)) = 1.0;
    }
    return x;
}

ad::VarId SequenceClassifier::pooled(const Binding& b, const Tensor& inputs,
                                     const ForwardContext& ctx) const {
    if (inputs.rank() != 2 || inputs.shape()[1] == 0) {
        throw std::invalid_argument("sequence classifier: expected [batch, steps] tokens, got " +
                                    shape_to_string(inputs.shape()));
    }
    auto& t = b.tape();
    const auto batch = inputs.shape()[0];
    const auto steps = inputs.shape()[1];
    const Tensor zeros({batch, spec_.hidden});
    LstmState state{t.constant(zeros), t.constant(zeros)};
    std::optional<ad::VarId> total;
    for (std::size_t s = 0; s < steps; ++s) {
        const auto x = t.constant(one_hot(inputs, s));
        if (spec_.cell == CellKind::Lstm) {
            state = lstm_.step(b, state, x, ctx);
        } else {
            state.h = gru_.step(b, state.h, x, ctx);
        }
        total = total ? ad::add(t, *total, state.h) : state.h;
    }
    if (steps == 1) return *total;
    return ad::scale(t, *total, 1.0 / static_cast<double>(steps));
}

ad::VarId SequenceClassifier::logits(const Binding& b, const Tensor& inputs,
                                     const ForwardContext& ctx) const {
    const auto hidden = head_.forward(b, pooled(b, inputs, ctx), ctx);
    return out_.forward(b, hidden, ctx);
}

Tensor classify_sequence(const SequenceClassifier& model, std::span<const int> tokens, RngStream& rng,
                         bool training) {
    Tensor inputs({1, tokens.size()});
    for (std::size_t k = 0; k < tokens.size(); ++k) inputs[k] = tokens[k];
    ad::Tape tape;
    const Binding b(tape, model.params);
    NoiseSource noise(rng);
    const ForwardContext ctx{&noise, training, std::nullopt};
    Tensor out = tape.value(model.logits(b, inputs, ctx));
    return Tensor::vector(out.values());
}

Tensor predict_logits(const Classifier& model, const Tensor& inputs) {
    ad::Tape tape;
    const Binding b(tape, model.params);
    const ForwardContext ctx{nullptr, false, std::nullopt};
    return tape.value(model.logits(b, inputs, ctx));
}

std::size_t argmax_row(const Tensor& logits, Eigen::Index row) {
    Eigen::Index best = 0;
    // maxCoeff returns the first maximal index, which is the lowest one.
    logits.matrix().row(row).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

}  // namespace noisy
