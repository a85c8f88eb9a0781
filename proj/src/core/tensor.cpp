#include "reimagine/core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace reimagine {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (data_.size() != shape_size(shape_)) {
        throw std::invalid_argument("tensor: value count does not match shape " + shape_string());
    }
}

void Tensor::fill(double value) {
    for (auto& v : data_) v = value;
}

MatrixMap Tensor::matrix(std::size_t rows, std::size_t cols) {
    if (rows * cols != data_.size()) throw std::invalid_argument("tensor: bad matrix view " + shape_string());
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatrixMap Tensor::matrix(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) throw std::invalid_argument("tensor: bad matrix view " + shape_string());
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixMap Tensor::matrix() {
    if (shape_.size() == 1) return matrix(1, shape_[0]);
    if (shape_.size() != 2) throw std::invalid_argument("tensor: matrix() needs rank <= 2, got " + shape_string());
    return matrix(shape_[0], shape_[1]);
}

ConstMatrixMap Tensor::matrix() const {
    if (shape_.size() == 1) return matrix(1, shape_[0]);
    if (shape_.size() != 2) throw std::invalid_argument("tensor: matrix() needs rank <= 2, got " + shape_string());
    return matrix(shape_[0], shape_[1]);
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                                    b.shape_string());
    }
}

void CompensatedSum::add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        compensation_ += (sum_ - t) + x;
    } else {
        compensation_ += (x - t) + sum_;
    }
    sum_ = t;
}

}  // namespace reimagine
