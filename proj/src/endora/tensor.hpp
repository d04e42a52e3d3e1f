#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace endora {

using Shape = std::vector<long>;

long shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles. The single value type used by the
/// model, the codecs and the metrics; schedule math uses plain double arrays.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v);

    long numel() const { return static_cast<long>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    long size(int i) const;

    double& operator[](long i) { return data[static_cast<size_t>(i)]; }
    double operator[](long i) const { return data[static_cast<size_t>(i)]; }

    double& at(std::initializer_list<long> idx);
    double at(std::initializer_list<long> idx) const;

    Tensor reshaped(Shape s) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

/// Contract violation (shape mismatch, bad argument). Maps to usage errors
/// at the C boundary.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Configuration problem (bad config value, indivisible dims).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Data problem (missing files, unreadable frames, empty datasets).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failure (NaN/Inf surfaced, non-PSD covariance).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg);
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& ctx);
void require_finite(const Tensor& t, const std::string& ctx);

}  // namespace endora
