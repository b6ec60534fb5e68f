#pragma once

#include "noisy/activations.hpp"
#include "noisy/autodiff.hpp"
#include "noisy/rng.hpp"
#include "noisy/tensor.hpp"

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace noisy {

/// Named model parameters. Ordered by name, so iteration order is stable.
using ParameterSet = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

/// A ParameterSet registered as tape variables for one forward/backward pass.
class Binding {
public:
    Binding(ad::Tape& tape, const ParameterSet& params);

    ad::Tape& tape() const { return *tape_; }
    ad::VarId operator[](const std::string& name) const;
    std::optional<ad::VarId> find(const std::string& name) const;
    /// Gradients of every bound parameter after tape().backward().
    GradientMap gradients() const;

private:
    ad::Tape* tape_;
    std::map<std::string, ad::VarId> vars_;
};

struct Activation {
    enum class Kind { Identity, Relu, Tanh, Sigmoid, HardSat };

    Kind kind = Kind::Identity;
    NoisyActConfig hard;  // used when kind == HardSat

    static Activation identity() { return {}; }
    static Activation relu() { return {Kind::Relu, {}}; }
    static Activation soft_tanh() { return {Kind::Tanh, {}}; }
    static Activation soft_sigmoid() { return {Kind::Sigmoid, {}}; }
    static Activation hard_sat(NoisyActConfig cfg) { return {Kind::HardSat, cfg}; }

    bool needs_p() const { return kind == Kind::HardSat && uses_learned_p(hard.mode); }
};

/// Adds the p parameter for an activation site if its mode uses one.
/// p is drawn uniformly from [-1, 1]; its shape is [] or [units] when per-unit.
void init_activation_p(ParameterSet& params, const std::string& name, const Activation& act,
                       std::size_t units, RngStream& rng);

ad::VarId apply_activation(const Binding& b, const Activation& act, const std::string& p_name,
                           ad::VarId x, const ForwardContext& ctx);

enum class InitScheme { FanInUniform, Orthogonal };

/// Fully connected layer, activation(x W + b) with W [in, out] and b [out].
struct DenseLayer {
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation;

    void init(ParameterSet& params, RngStream& rng) const;
    ad::VarId forward(const Binding& b, ad::VarId x, const ForwardContext& ctx) const;
};

/// One-off evaluation of a dense layer on its own tape.
Tensor dense_forward(const DenseLayer& layer, const ParameterSet& params, const Tensor& x,
                     RngStream& rng, bool training);

struct RecurrentInit {
    InitScheme scheme = InitScheme::Orthogonal;
    double scale = 0.01;
};

/// Gated recurrent unit with hard-saturating (optionally noisy) gates:
///   z = gate(x Wz + h Uz + bz), r = gate(x Wr + h Ur + br),
///   c = cand(x Wc + (r * h) Uc + bc), h' = (1 - z) * h + z * c.
struct GruCell {
    std::string name;
    std::size_t input = 0;
    std::size_t hidden = 0;
    Activation gate = Activation::hard_sat({.base = HardSatFn::hard_sigmoid()});
    Activation candidate = Activation::hard_sat({.base = HardSatFn::hard_tanh()});
    RecurrentInit recurrent_init;

    void init(ParameterSet& params, RngStream& rng) const;
    ad::VarId step(const Binding& b, ad::VarId h_prev, ad::VarId x, const ForwardContext& ctx) const;
};

struct LstmState {
    ad::VarId h;
    ad::VarId c;
};

/// LSTM with hard-saturating (optionally noisy) gates:
///   i, f, o = gate(x W* + h U* + b*), g = cand(x Wg + h Ug + bg),
///   c' = f * c + i * g, h' = o * cand(c').
struct LstmCell {
    std::string name;
    std::size_t input = 0;
    std::size_t hidden = 0;
    Activation gate = Activation::hard_sat({.base = HardSatFn::hard_sigmoid()});
    Activation candidate = Activation::hard_sat({.base = HardSatFn::hard_tanh()});
    RecurrentInit recurrent_init;
    double forget_bias = 0.0;

    void init(ParameterSet& params, RngStream& rng) const;
    LstmState step(const Binding& b, LstmState prev, ad::VarId x, const ForwardContext& ctx) const;
};

/// Anything that maps a batch of inputs to class logits.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual ad::VarId logits(const Binding& b, const Tensor& inputs, const ForwardContext& ctx) const = 0;
    virtual std::size_t num_classes() const = 0;
    virtual void init(RngStream& rng) = 0;
    /// Activation sites with a noise scale that annealing may override.
    virtual bool has_noise() const = 0;

    ParameterSet params;
};

/// Stack of dense layers; the last one produces logits.
class Mlp final : public Classifier {
public:
    explicit Mlp(std::vector<DenseLayer> layers);

    ad::VarId logits(const Binding& b, const Tensor& inputs, const ForwardContext& ctx) const override;
    std::size_t num_classes() const override { return layers_.back().out; }
    void init(RngStream& rng) override;
    bool has_noise() const override;

    const std::vector<DenseLayer>& layers() const { return layers_; }

private:
    std::vector<DenseLayer> layers_;
};

/// Builds in -> hidden... -> classes with `hidden_act` on hidden layers and identity logits.
Mlp make_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t classes,
             const Activation& hidden_act);

enum class CellKind { Lstm, Gru };

/// One-hot tokens -> recurrent cell -> time-average pooling -> ReLU MLP head -> logits.
/// Inputs are [batch, steps] tensors of integer token ids stored as doubles.
class SequenceClassifier final : public Classifier {
public:
    struct Spec {
        std::size_t vocab = 6;
        std::size_t hidden = 32;
        std::size_t head_hidden = 32;
        std::size_t classes = 6;
        CellKind cell = CellKind::Lstm;
        Activation gate = Activation::hard_sat({.base = HardSatFn::hard_sigmoid()});
        Activation candidate = Activation::hard_sat({.base = HardSatFn::hard_tanh()});
        RecurrentInit recurrent_init;
        double forget_bias = 0.0;
    };

    explicit SequenceClassifier(Spec spec);

    ad::VarId logits(const Binding& b, const Tensor& inputs, const ForwardContext& ctx) const override;
    std::size_t num_classes() const override { return spec_.classes; }
    void init(RngStream& rng) override;
    bool has_noise() const override;

    /// Mean of the hidden states over time, [batch, hidden].
    ad::VarId pooled(const Binding& b, const Tensor& inputs, const ForwardContext& ctx) const;

    const Spec& spec() const { return spec_; }

private:
    Tensor one_hot(const Tensor& inputs, std::size_t step) const;

    Spec spec_;
    LstmCell lstm_;
    GruCell gru_;
    DenseLayer head_;
    DenseLayer out_;
};

/// Logits for a single token sequence; argmax ties go to the lowest index.
Tensor classify_sequence(const SequenceClassifier& model, std::span<const int> tokens, RngStream& rng,
                         bool training);

/// Deterministic logits for a batch; never touches any RngStream.
Tensor predict_logits(const Classifier& model, const Tensor& inputs);

std::size_t argmax_row(const Tensor& logits, Eigen::Index row);

}  // namespace noisy
