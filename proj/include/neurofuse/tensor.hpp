#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace neurofuse {

/// Thrown when tensor shapes do not line up for an operation.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when a computation produces or receives non-finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of doubles. Immutable by convention once built:
/// ops take tensors by const reference and return fresh outputs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count_of(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count_of(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
    }

    static Tensor vector(std::vector<double> data) {
        std::vector<std::size_t> shape{data.size()};
        return Tensor(std::move(shape), std::move(data));
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const char* where) const {
        if (!all_finite()) throw NumericError(std::string("non-finite values in ") + where);
    }

    static std::string shape_string(const std::vector<std::size_t>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }

    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t count_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline void axpy(Tensor& acc, double scale, const Tensor& t) {
    if (!acc.same_shape(t)) throw DimensionError("axpy shape mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * t[i];
}

}  // namespace neurofuse
