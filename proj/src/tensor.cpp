#include "prunekit/tensor.hpp"

#include <cmath>
#include <limits>

#include "prunekit/error.hpp"

namespace prunekit {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty() || dims_.size() > 4) {
        throw validation_error("shape rank must be 1-4, got " + std::to_string(dims_.size()));
    }
    elements_ = 1;
    for (std::size_t d : dims_) {
        if (d == 0) throw validation_error("shape extents must be >= 1: " + to_string());
        if (elements_ > std::numeric_limits<std::size_t>::max() / d) {
            throw validation_error("shape element count overflows: " + to_string());
        }
        elements_ *= d;
    }
}

std::string Shape::to_string() const {
    std::string out = "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(dims_[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.elements(), fill) {
    if (data_.empty()) throw validation_error("tensor must have a non-empty shape");
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.empty() || data_.size() != shape_.elements()) {
        throw validation_error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                               shape_.to_string());
    }
}

Tensor Tensor::flatten() const { return Tensor(Shape{data_.size()}, data_); }

Tensor Tensor::scaled(double c) const {
    Tensor out = *this;
    for (double& v : out.data_) v *= c;
    return out;
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

double frobenius_norm(const Tensor& t) { return l2_norm(t.data()); }

double l2_norm(const Tensor& t) { return l2_norm(t.data()); }

}  // namespace prunekit
