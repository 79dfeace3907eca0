#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "diffpose/errors.hpp"

namespace diffpose {

// Dense row-major tensor of doubles.  Rank is dynamic (1..4 in practice);
// storage is always contiguous so Eigen can map slices directly.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<double> data) {
        if (count(shape) != static_cast<std::int64_t>(data.size()))
            throw ShapeError("tensor data size does not match shape");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Row-major index helpers for the common ranks.
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
    double& at(int c, int h, int w) {
        return data_[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
    }
    double at(int c, int h, int w) const {
        return data_[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// View a contiguous span of a tensor as a rows x cols matrix.
inline MatMap as_matrix(Tensor& t, Eigen::Index rows, Eigen::Index cols, std::int64_t offset = 0) {
    return MatMap(t.data() + offset, rows, cols);
}
inline ConstMatMap as_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols,
                             std::int64_t offset = 0) {
    return ConstMatMap(t.data() + offset, rows, cols);
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

inline void check_shape(const Tensor& t, const std::vector<int>& want, const char* what) {
    if (t.shape() != want)
        throw ShapeError(std::string(what) + ": expected shape " + shape_str(want) + ", got " +
                         t.shape_str());
}

}  // namespace diffpose
