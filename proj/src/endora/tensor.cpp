#include "endora/tensor.hpp"

#include <cmath>
#include <sstream>

namespace endora {

long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) {
        if (d < 0) throw ContractError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<long>(data.size()))
        throw ContractError("tensor data size does not match shape " + shape_str(shape));
}

Tensor Tensor::full(Shape s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

long Tensor::size(int i) const {
    if (i < 0) i += ndim();
    if (i < 0 || i >= ndim()) throw ContractError("tensor axis out of range");
    return shape[static_cast<size_t>(i)];
}

namespace {
long flat_offset(const Shape& shape, std::initializer_list<long> idx) {
    if (idx.size() != shape.size()) throw ContractError("index rank mismatch");
    long off = 0;
    size_t i = 0;
    for (long v : idx) {
        if (v < 0 || v >= shape[i]) throw ContractError("index out of bounds");
        off = off * shape[i] + v;
        ++i;
    }
    return off;
}
}  // namespace

double& Tensor::at(std::initializer_list<long> idx) {
    return data[static_cast<size_t>(flat_offset(shape, idx))];
}

double Tensor::at(std::initializer_list<long> idx) const {
    return data[static_cast<size_t>(flat_offset(shape, idx))];
}

Tensor Tensor::reshaped(Shape s) const {
    if (shape_numel(s) != numel())
        throw ContractError("reshape " + shape_str(shape) + " -> " + shape_str(s) + " changes element count");
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& ctx) {
    if (!a.same_shape(b))
        throw ContractError(ctx + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

void require_finite(const Tensor& t, const std::string& ctx) {
    if (!t.all_finite()) throw NumericError(ctx + ": non-finite values");
}

}  // namespace endora
