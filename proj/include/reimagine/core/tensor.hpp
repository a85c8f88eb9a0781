#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace reimagine {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<MatrixRM>;
using ConstMatrixMap = Eigen::Map<const MatrixRM>;

// Storage is aligned to Eigen's widest packet so vectorized kernels take the
// same code path, and hence round the same way, for every allocation.
using TensorStorage = std::vector<double, Eigen::aligned_allocator<double>>;

// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    TensorStorage& storage() { return data_; }
    const TensorStorage& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    void fill(double value);

    // Views a rank-2 tensor (or any tensor as rows x cols) as an Eigen matrix.
    MatrixMap matrix(std::size_t rows, std::size_t cols);
    ConstMatrixMap matrix(std::size_t rows, std::size_t cols) const;
    MatrixMap matrix();
    ConstMatrixMap matrix() const;

    std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    TensorStorage data_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

// Throws std::invalid_argument naming `what` when the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Neumaier-compensated summation; order-dependent but reproducible.
class CompensatedSum {
public:
    void add(double x);
    double value() const { return sum_ + compensation_; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

}  // namespace reimagine
