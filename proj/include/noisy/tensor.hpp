#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace noisy {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense, shape-tagged, row-major array of rank 0, 1 or 2.
///
/// Storage is a row-major Eigen matrix. A scalar is held as 1x1, a vector of
/// length n as 1xn, and a [rows, cols] tensor as rows x cols, so `matrix()`
/// and `array()` give a zero-copy 2-D view for every supported rank.
template <typename Scalar>
class BasicTensor {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    BasicTensor() : data_(Matrix::Zero(1, 1)) {}

    explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
        const auto [rows, cols] = storage_dims(shape_);
        data_ = Matrix::Constant(rows, cols, fill);
    }

    BasicTensor(Shape shape, std::span<const Scalar> values) : BasicTensor(std::move(shape)) {
        if (values.size() != size()) {
            throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                        " values do not fill shape " + shape_to_string(shape_));
        }
        std::copy(values.begin(), values.end(), data_.data());
    }

    BasicTensor(Shape shape, std::initializer_list<Scalar> values)
        : BasicTensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}

    /// Wraps a 2-D Eigen expression as a [rows, cols] tensor.
    template <typename Derived>
    static BasicTensor from_matrix(const Eigen::DenseBase<Derived>& m) {
        return BasicTensor(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                           Matrix(m.derived().template cast<Scalar>().matrix()));
    }

    static BasicTensor scalar(Scalar v) {
        BasicTensor t;
        t.data_(0, 0) = v;
        return t;
    }

    static BasicTensor vector(std::span<const Scalar> values) {
        return BasicTensor({values.size()}, values);
    }

    /// Same shape as `like`, storage replaced by `m` (which must match the 2-D view).
    template <typename Derived>
    static BasicTensor like(const BasicTensor& like, const Eigen::DenseBase<Derived>& m) {
        return BasicTensor(like.shape_, Matrix(m.derived().matrix()));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
    Eigen::Index rows() const { return data_.rows(); }
    Eigen::Index cols() const { return data_.cols(); }

    Matrix& matrix() { return data_; }
    const Matrix& matrix() const { return data_; }
    auto array() { return data_.array(); }
    auto array() const { return data_.array(); }

    std::span<Scalar> values() { return {data_.data(), size()}; }
    std::span<const Scalar> values() const { return {data_.data(), size()}; }

    Scalar& operator[](std::size_t i) { return data_.data()[i]; }
    Scalar operator[](std::size_t i) const { return data_.data()[i]; }
    Scalar& operator()(Eigen::Index r, Eigen::Index c) { return data_(r, c); }
    Scalar operator()(Eigen::Index r, Eigen::Index c) const { return data_(r, c); }

    Scalar item() const {
        if (size() != 1) {
            throw std::invalid_argument("Tensor::item on shape " + shape_to_string(shape_));
        }
        return data_(0, 0);
    }

    bool all_finite() const { return data_.allFinite(); }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    BasicTensor(Shape shape, Matrix data) : shape_(std::move(shape)), data_(std::move(data)) {}

    static std::pair<Eigen::Index, Eigen::Index> storage_dims(const Shape& shape) {
        switch (shape.size()) {
        case 0:
            return {1, 1};
        case 1:
            return {1, static_cast<Eigen::Index>(shape[0])};
        case 2:
            return {static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1])};
        default:
            throw std::invalid_argument("Tensor: rank " + std::to_string(shape.size()) +
                                        " not supported (max 2)");
        }
    }

    Shape shape_;
    Matrix data_;
};

using Tensor = BasicTensor<double>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace noisy
