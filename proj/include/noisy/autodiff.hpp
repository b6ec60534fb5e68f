#pragma once

#include "noisy/tensor.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace noisy::ad {

enum class Primitive {
    Leaf,
    Add,
    Sub,
    Mul,        // elementwise, equal shapes
    MatMul,     // [m,k] x [k,n]
    AddBias,    // x + b, b of shape [] or [last dim]
    MulBias,    // x * b, b of shape [] or [last dim]
    ScalarMul,  // constant * x
    AddScalar,  // x + constant
    Clip,       // min(max(x, lo), hi)
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Square,
    Abs,
    Sign,       // 1 for x >= 0 else -1; derivative taken as 0
    Select,     // mask ? a : b, mask is a fixed 0/1 tensor
    Sum,        // all elements -> scalar
    MeanAxis,   // [r,c] -> [c] (axis 0) or [r] (axis 1)
    SoftmaxCrossEntropy,  // logits [batch,classes], integer labels -> mean NLL
};

std::string_view primitive_name(Primitive p);

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
class VarId {
public:
    VarId() = default;
    std::uint32_t index() const { return index_; }
    bool valid() const { return tape_ != 0; }
    friend bool operator==(VarId, VarId) = default;

private:
    friend class Tape;
    VarId(std::uint32_t tape, std::uint32_t index) : tape_(tape), index_(index) {}
    std::uint32_t tape_ = 0;
    std::uint32_t index_ = 0;
};

/// Per-primitive constants. Only the fields a primitive uses are read.
struct Attrs {
    double scalar = 0.0;  // ScalarMul / AddScalar
    double lo = 0.0;      // Clip
    double hi = 0.0;      // Clip
    int axis = 0;         // MeanAxis
    Tensor aux;           // Select mask, SoftmaxCrossEntropy labels
};

/// Reverse-mode recording of primitive operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// A tape is single-threaded and is discarded after one forward/backward pass.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// Differentiable input (parameter or input we want gradients for).
    VarId variable(Tensor value);
    /// Non-differentiable input; its gradient is never accumulated.
    VarId constant(Tensor value);

    /// Appends `op` applied to `inputs` and returns the new node.
    /// Throws std::invalid_argument on shape mismatch, naming the primitive and shapes.
    VarId record(Primitive op, std::span<const VarId> inputs, Attrs attrs = {});

    const Tensor& value(VarId v) const;
    /// Gradient of the last backward root with respect to `v` (zeros if unreachable).
    const Tensor& grad(VarId v) const;

    /// Reverse sweep from a scalar root. Throws if root is not scalar-valued.
    void backward(VarId root);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Primitive op;
        std::uint32_t in0;
        std::uint32_t in1;
        std::uint8_t arity;
        bool requires_grad;
        Attrs attrs;
        Tensor value;
    };

    std::uint32_t check(VarId v) const;
    Tensor evaluate(Primitive op, std::span<const Node* const> in, const Attrs& attrs) const;
    void propagate(const Node& node, const Tensor& g);
    void accumulate(std::uint32_t index, const Tensor::Matrix& g);

    std::uint32_t id_;
    std::vector<Node> nodes_;
    mutable std::vector<Tensor> grads_;
    mutable std::vector<bool> touched_;
};

// Typed recording helpers.
VarId add(Tape& t, VarId a, VarId b);
VarId sub(Tape& t, VarId a, VarId b);
VarId mul(Tape& t, VarId a, VarId b);
VarId matmul(Tape& t, VarId a, VarId b);
VarId add_bias(Tape& t, VarId x, VarId b);
VarId mul_bias(Tape& t, VarId x, VarId b);
VarId scale(Tape& t, VarId x, double k);
VarId add_scalar(Tape& t, VarId x, double k);
VarId clip(Tape& t, VarId x, double lo, double hi);
VarId relu(Tape& t, VarId x);
VarId sigmoid(Tape& t, VarId x);
VarId tanh(Tape& t, VarId x);
VarId exp(Tape& t, VarId x);
VarId log(Tape& t, VarId x);
VarId square(Tape& t, VarId x);
VarId abs(Tape& t, VarId x);
VarId sign(Tape& t, VarId x);
VarId select(Tape& t, const Tensor& mask, VarId a, VarId b);
VarId sum(Tape& t, VarId x);
VarId mean_axis(Tape& t, VarId x, int axis);
VarId softmax_cross_entropy(Tape& t, VarId logits, std::span<const int> labels);

}  // namespace noisy::ad
