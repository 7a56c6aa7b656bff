// SPDX-License-Identifier: Apache-2.0
#include "trisense/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trisense {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.empty()) shape = {1};
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    impl_ = std::make_shared<Storage>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(shape, std::move(v), requires_grad);
}

Tensor Tensor::uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi,
                       bool requires_grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(shape, std::move(v), requires_grad);
}

Tensor::Storage& Tensor::storage() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return storage().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return storage().data.size(); }

std::span<double> Tensor::values() { return storage().data; }
std::span<const double> Tensor::values() const { return storage().data; }

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
    return storage().data[0];
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw DimensionError("index rank does not match " + shape_to_string(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw DimensionError("index out of range for " + shape_to_string(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return storage().data[flat_index(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return storage().data[flat_index(index)]; }

bool Tensor::requires_grad() const { return storage().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    storage().requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return !storage().grad.empty(); }

std::span<double> Tensor::grad() const {
    auto& st = storage();
    if (st.grad.empty()) st.grad.assign(st.data.size(), 0.0);
    return st.grad;
}

void Tensor::zero_grad() {
    auto& st = storage();
    std::fill(st.grad.begin(), st.grad.end(), 0.0);
}

void Tensor::drop_grad() { storage().grad.clear(); }

Tensor Tensor::clone() const {
    const auto& st = storage();
    return Tensor(st.shape, st.data, st.requires_grad);
}

bool Tensor::all_finite() const {
    const auto& d = storage().data;
    return std::all_of(d.begin(), d.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace trisense
