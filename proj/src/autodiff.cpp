#include "noisy/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace noisy::ad {

namespace {

std::atomic<std::uint32_t> next_tape_id{1};

using Matrix = Tensor::Matrix;

[[noreturn]] void shape_error(Primitive op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(primitive_name(op)) + ": shape mismatch " +
                                shape_to_string(a) + " vs " + shape_to_string(b));
}

[[noreturn]] void shape_error(Primitive op, const Shape& a, const std::string& what) {
    throw std::invalid_argument(std::string(primitive_name(op)) + ": " + what + ", got " +
                                shape_to_string(a));
}

int arity_of(Primitive op) {
    switch (op) {
    case Primitive::Leaf:
        return 0;
    case Primitive::Add:
    case Primitive::Sub:
    case Primitive::Mul:
    case Primitive::MatMul:
    case Primitive::AddBias:
    case Primitive::MulBias:
    case Primitive::Select:
        return 2;
    default:
        return 1;
    }
}

bool is_scalar_bias(const Tensor& b) { return b.size() == 1 && b.rank() <= 1; }

void check_bias(Primitive op, const Tensor& x, const Tensor& b) {
    if (is_scalar_bias(b)) return;
    if (b.rank() != 1 || x.rank() == 0 || b.shape()[0] != x.shape().back()) {
        shape_error(op, x.shape(), b.shape());
    }
}

// Broadcasts a bias view (1x1 or 1xc) to the 2-D storage of x.
Matrix broadcast_bias(const Tensor& x, const Tensor& b) {
    if (is_scalar_bias(b)) return Matrix::Constant(x.rows(), x.cols(), b[0]);
    return b.matrix().replicate(x.rows(), 1);
}

// Reduces a gradient on x's storage down to the bias shape.
Matrix reduce_to_bias(const Matrix& g, const Tensor& b) {
    if (is_scalar_bias(b)) return Matrix::Constant(1, 1, g.sum());
    return g.colwise().sum();
}

}  // namespace

std::string_view primitive_name(Primitive p) {
    switch (p) {
    case Primitive::Leaf: return "leaf";
    case Primitive::Add: return "add";
    case Primitive::Sub: return "sub";
    case Primitive::Mul: return "mul";
    case Primitive::MatMul: return "matmul";
    case Primitive::AddBias: return "add_bias";
    case Primitive::MulBias: return "mul_bias";
    case Primitive::ScalarMul: return "scalar_mul";
    case Primitive::AddScalar: return "add_scalar";
    case Primitive::Clip: return "clip";
    case Primitive::Sigmoid: return "sigmoid";
    case Primitive::Tanh: return "tanh";
    case Primitive::Exp: return "exp";
    case Primitive::Log: return "log";
    case Primitive::Square: return "square";
    case Primitive::Abs: return "abs";
    case Primitive::Sign: return "sign";
    case Primitive::Select: return "select";
    case Primitive::Sum: return "sum";
    case Primitive::MeanAxis: return "mean_axis";
    case Primitive::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "unknown";
}

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

VarId Tape::variable(Tensor value) {
    nodes_.push_back({Primitive::Leaf, 0, 0, 0, true, {}, std::move(value)});
    return VarId(id_, static_cast<std::uint32_t>(nodes_.size() - 1));
}

VarId Tape::constant(Tensor value) {
    nodes_.push_back({Primitive::Leaf, 0, 0, 0, false, {}, std::move(value)});
    return VarId(id_, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::uint32_t Tape::check(VarId v) const {
    if (v.tape_ != id_ || v.index_ >= nodes_.size()) {
        throw std::invalid_argument("VarId does not belong to this tape");
    }
    return v.index_;
}

const Tensor& Tape::value(VarId v) const { return nodes_[check(v)].value; }

const Tensor& Tape::grad(VarId v) const {
    const auto i = check(v);
    if (i >= grads_.size()) {
        throw std::logic_error("Tape::grad: no backward pass covers this node");
    }
    if (!touched_[i]) {
        grads_[i] = Tensor(nodes_[i].value.shape());
        touched_[i] = true;
    }
    return grads_[i];
}

VarId Tape::record(Primitive op, std::span<const VarId> inputs, Attrs attrs) {
    const int arity = arity_of(op);
    if (op == Primitive::Leaf || static_cast<int>(inputs.size()) != arity) {
        throw std::invalid_argument(std::string(primitive_name(op)) + ": expected " +
                                    std::to_string(arity) + " inputs, got " +
                                    std::to_string(inputs.size()));
    }
    std::uint32_t idx[2] = {0, 0};
    const Node* in[2] = {nullptr, nullptr};
    bool requires_grad = false;
    for (int k = 0; k < arity; ++k) {
        idx[k] = check(inputs[k]);
        in[k] = &nodes_[idx[k]];
        requires_grad = requires_grad || in[k]->requires_grad;
    }
    Tensor value = evaluate(op, std::span<const Node* const>(in, arity), attrs);
    nodes_.push_back({op, idx[0], idx[1], static_cast<std::uint8_t>(arity), requires_grad,
                      std::move(attrs), std::move(value)});
    return VarId(id_, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor Tape::evaluate(Primitive op, std::span<const Node* const> in, const Attrs& attrs) const {
    const Tensor& a = in[0]->value;
    switch (op) {
    case Primitive::Add:
    case Primitive::Sub:
    case Primitive::Mul: {
        const Tensor& b = in[1]->value;
        if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
        if (op == Primitive::Add) return Tensor::like(a, a.matrix() + b.matrix());
        if (op == Primitive::Sub) return Tensor::like(a, a.matrix() - b.matrix());
        return Tensor::like(a, a.array() * b.array());
    }
    case Primitive::MatMul: {
        const Tensor& b = in[1]->value;
        if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
            shape_error(op, a.shape(), b.shape());
        }
        return Tensor::from_matrix(a.matrix() * b.matrix());
    }
    case Primitive::AddBias: {
        const Tensor& b = in[1]->value;
        check_bias(op, a, b);
        return Tensor::like(a, a.matrix() + broadcast_bias(a, b));
    }
    case Primitive::MulBias: {
        const Tensor& b = in[1]->value;
        check_bias(op, a, b);
        return Tensor::like(a, a.array() * broadcast_bias(a, b).array());
    }
    case Primitive::ScalarMul:
        return Tensor::like(a, attrs.scalar * a.matrix());
    case Primitive::AddScalar:
        return Tensor::like(a, a.array() + attrs.scalar);
    case Primitive::Clip:
        if (!(attrs.lo <= attrs.hi)) {
            throw std::invalid_argument("clip: lo must not exceed hi");
        }
        return Tensor::like(a, a.array().max(attrs.lo).min(attrs.hi));
    case Primitive::Sigmoid:
        return Tensor::like(a, 1.0 / (1.0 + (-a.array()).exp()));
    case Primitive::Tanh:
        return Tensor::like(a, a.array().tanh());
    case Primitive::Exp:
        return Tensor::like(a, a.array().exp());
    case Primitive::Log:
        return Tensor::like(a, a.array().log());
    case Primitive::Square:
        return Tensor::like(a, a.array().square());
    case Primitive::Abs:
        return Tensor::like(a, a.array().abs());
    case Primitive::Sign:
        return Tensor::like(a, (a.array() >= 0.0).select(1.0, Tensor::Array::Constant(a.rows(), a.cols(), -1.0)));
    case Primitive::Select: {
        const Tensor& b = in[1]->value;
        if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
        if (attrs.aux.shape() != a.shape()) shape_error(op, attrs.aux.shape(), a.shape());
        return Tensor::like(a, (attrs.aux.array() != 0.0).select(a.array(), b.array()));
    }
    case Primitive::Sum:
        return Tensor::scalar(a.matrix().sum());
    case Primitive::MeanAxis: {
        if (a.rank() != 2) shape_error(op, a.shape(), "expected rank 2");
        if (attrs.axis == 0) {
            Tensor out({a.shape()[1]});
            out.matrix() = a.matrix().colwise().mean();
            return out;
        }
        if (attrs.axis == 1) {
            Tensor out({a.shape()[0]});
            out.matrix() = a.matrix().rowwise().mean().transpose();
            return out;
        }
        throw std::invalid_argument("mean_axis: axis must be 0 or 1");
    }
    case Primitive::SoftmaxCrossEntropy: {
        if (a.rank() != 2) shape_error(op, a.shape(), "expected logits of rank 2");
        const Tensor& labels = attrs.aux;
        if (labels.rank() != 1 || labels.shape()[0] != a.shape()[0]) {
            shape_error(op, a.shape(), labels.shape());
        }
        double total = 0.0;
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
            const auto row = a.matrix().row(r);
            const double m = row.maxCoeff();
            const double lse = m + std::log((row.array() - m).exp().sum());
            const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
            if (label < 0 || label >= a.cols()) {
                throw std::invalid_argument("softmax_cross_entropy: label " +
                                            std::to_string(label) + " out of range for " +
                                            std::to_string(a.cols()) + " classes");
            }
            total += lse - row(label);
        }
        return Tensor::scalar(total / static_cast<double>(a.rows()));
    }
    case Primitive::Leaf:
        break;
    }
    throw std::logic_error("evaluate: unhandled primitive");
}

void Tape::accumulate(std::uint32_t index, const Matrix& g) {
    if (!nodes_[index].requires_grad) return;
    if (touched_[index]) {
        grads_[index].matrix() += g;
    } else {
        grads_[index] = Tensor::like(nodes_[index].value, g);
        touched_[index] = true;
    }
}

void Tape::backward(VarId root) {
    const auto r = check(root);
    if (nodes_[r].value.size() != 1 || nodes_[r].value.rank() > 1) {
        throw std::invalid_argument("backward: root must be scalar-valued, got shape " +
                                    shape_to_string(nodes_[r].value.shape()));
    }
    grads_.assign(nodes_.size(), Tensor());
    touched_.assign(nodes_.size(), false);
    grads_[r] = Tensor(nodes_[r].value.shape());
    grads_[r].matrix().setOnes();
    touched_[r] = true;
    for (std::size_t i = r + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.op == Primitive::Leaf || !n.requires_grad || !touched_[i]) continue;
        propagate(n, grads_[i]);
    }
}

void Tape::propagate(const Node& n, const Tensor& gt) {
    const Matrix& g = gt.matrix();
    const Tensor& a = nodes_[n.in0].value;
    switch (n.op) {
    case Primitive::Add:
        accumulate(n.in0, g);
        accumulate(n.in1, g);
        return;
    case Primitive::Sub:
        accumulate(n.in0, g);
        accumulate(n.in1, -g);
        return;
    case Primitive::Mul: {
        const Tensor& b = nodes_[n.in1].value;
        accumulate(n.in0, (g.array() * b.array()).matrix());
        accumulate(n.in1, (g.array() * a.array()).matrix());
        return;
    }
    case Primitive::MatMul: {
        const Tensor& b = nodes_[n.in1].value;
        if (nodes_[n.in0].requires_grad) accumulate(n.in0, g * b.matrix().transpose());
        if (nodes_[n.in1].requires_grad) accumulate(n.in1, a.matrix().transpose() * g);
        return;
    }
    case Primitive::AddBias: {
        const Tensor& b = nodes_[n.in1].value;
        accumulate(n.in0, g);
        accumulate(n.in1, reduce_to_bias(g, b));
        return;
    }
    case Primitive::MulBias: {
        const Tensor& b = nodes_[n.in1].value;
        accumulate(n.in0, (g.array() * broadcast_bias(a, b).array()).matrix());
        accumulate(n.in1, reduce_to_bias((g.array() * a.array()).matrix(), b));
        return;
    }
    case Primitive::ScalarMul:
        accumulate(n.in0, n.attrs.scalar * g);
        return;
    case Primitive::AddScalar:
        accumulate(n.in0, g);
        return;
    case Primitive::Clip: {
        // Closed interval: at x == lo or x == hi the interior slope 1 is used.
        const auto inside = (a.array() >= n.attrs.lo && a.array() <= n.attrs.hi);
        accumulate(n.in0, inside.select(g.array(), 0.0).matrix());
        return;
    }
    case Primitive::Sigmoid: {
        const auto& y = n.value.array();
        accumulate(n.in0, (g.array() * y * (1.0 - y)).matrix());
        return;
    }
    case Primitive::Tanh: {
        const auto& y = n.value.array();
        accumulate(n.in0, (g.array() * (1.0 - y.square())).matrix());
        return;
    }
    case Primitive::Exp:
        accumulate(n.in0, (g.array() * n.value.array()).matrix());
        return;
    case Primitive::Log:
        accumulate(n.in0, (g.array() / a.array()).matrix());
        return;
    case Primitive::Square:
        accumulate(n.in0, (2.0 * g.array() * a.array()).matrix());
        return;
    case Primitive::Abs:
        accumulate(n.in0, (a.array() >= 0.0).select(g.array(), -g.array()).matrix());
        return;
    case Primitive::Sign:
        return;
    case Primitive::Select: {
        const auto on = (n.attrs.aux.array() != 0.0);
        accumulate(n.in0, on.select(g.array(), 0.0).matrix());
        accumulate(n.in1, on.select(0.0, g.array()).matrix());
        return;
    }
    case Primitive::Sum:
        accumulate(n.in0, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        return;
    case Primitive::MeanAxis: {
        if (n.attrs.axis == 0) {
            accumulate(n.in0, (g / static_cast<double>(a.rows())).replicate(a.rows(), 1));
        } else {
            accumulate(n.in0,
                       (g.transpose() / static_cast<double>(a.cols())).replicate(1, a.cols()));
        }
        return;
    }
    case Primitive::SoftmaxCrossEntropy: {
        const Matrix& logits = a.matrix();
        Matrix d(logits.rows(), logits.cols());
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const auto row = logits.row(r).array();
            const auto e = (row - row.maxCoeff()).exp();
            d.row(r) = (e / e.sum()).matrix();
            d(r, static_cast<Eigen::Index>(n.attrs.aux[static_cast<std::size_t>(r)])) -= 1.0;
        }
        accumulate(n.in0, d * (g(0, 0) / static_cast<double>(logits.rows())));
        return;
    }
    case Primitive::Leaf:
        return;
    }
}

VarId add(Tape& t, VarId a, VarId b) {
    const VarId in[] = {a, b};
    return t.record(Primitive::Add, in);
}

VarId sub(Tape& t, VarId a, VarId b) {
    const VarId in[] = {a, b};
    return t.record(Primitive::Sub, in);
}

VarId mul(Tape& t, VarId a, VarId b) {
    const VarId in[] = {a, b};
    return t.record(Primitive::Mul, in);
}

VarId matmul(Tape& t, VarId a, VarId b) {
    const VarId in[] = {a, b};
    return t.record(Primitive::MatMul, in);
}

VarId add_bias(Tape& t, VarId x, VarId b) {
    const VarId in[] = {x, b};
    return t.record(Primitive::AddBias, in);
}

VarId mul_bias(Tape& t, VarId x, VarId b) {
    const VarId in[] = {x, b};
    return t.record(Primitive::MulBias, in);
}

VarId scale(Tape& t, VarId x, double k) {
    const VarId in[] = {x};
    Attrs attrs;
    attrs.scalar = k;
    return t.record(Primitive::ScalarMul, in, std::move(attrs));
}

VarId add_scalar(Tape& t, VarId x, double k) {
    const VarId in[] = {x};
    Attrs attrs;
    attrs.scalar = k;
    return t.record(Primitive::AddScalar, in, std::move(attrs));
}

VarId clip(Tape& t, VarId x, double lo, double hi) {
    const VarId in[] = {x};
    Attrs attrs;
    attrs.lo = lo;
    attrs.hi = hi;
    return t.record(Primitive::Clip, in, std::move(attrs));
}

VarId relu(Tape& t, VarId x) {
    return clip(t, x, 0.0, std::numeric_limits<double>::infinity());
}

namespace {

VarId unary(Tape& t, Primitive op, VarId x) {
    const VarId in[] = {x};
    return t.record(op, in);
}

}  // namespace

VarId sigmoid(Tape& t, VarId x) { return unary(t, Primitive::Sigmoid, x); }
VarId tanh(Tape& t, VarId x) { return unary(t, Primitive::Tanh, x); }
VarId exp(Tape& t, VarId x) { return unary(t, Primitive::Exp, x); }
VarId log(Tape& t, VarId x) { return unary(t, Primitive::Log, x); }
VarId square(Tape& t, VarId x) { return unary(t, Primitive::Square, x); }
VarId abs(Tape& t, VarId x) { return unary(t, Primitive::Abs, x); }
VarId sign(Tape& t, VarId x) { return unary(t, Primitive::Sign, x); }
VarId sum(Tape& t, VarId x) { return unary(t, Primitive::Sum, x); }

VarId select(Tape& t, const Tensor& mask, VarId a, VarId b) {
    const VarId in[] = {a, b};
    Attrs attrs;
    attrs.aux = mask;
    return t.record(Primitive::Select, in, std::move(attrs));
}

VarId mean_axis(Tape& t, VarId x, int axis) {
    const VarId in[] = {x};
    Attrs attrs;
    attrs.axis = axis;
    return t.record(Primitive::MeanAxis, in, std::move(attrs));
}

VarId softmax_cross_entropy(Tape& t, VarId logits, std::span<const int> labels) {
    const VarId in[] = {logits};
    Attrs attrs;
    attrs.aux = Tensor({labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        attrs.aux[i] = static_cast<double>(labels[i]);
    }
    return t.record(Primitive::SoftmaxCrossEntropy, in, std::move(attrs));
}

}  // namespace noisy::ad
