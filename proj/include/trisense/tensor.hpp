// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trisense {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dense row-major float64 array. Copies of a Tensor share storage; use clone()
// for a deep, detached copy.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0,
                        bool requires_grad = false);
    static Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<double> values();
    std::span<const double> values() const;
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);

    bool has_grad() const;
    // Allocates a zero gradient buffer on first use. Gradient buffers are
    // writable through const handles so grad rules can capture by value.
    std::span<double> grad() const;
    void zero_grad();
    void drop_grad();

    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    bool all_finite() const;

private:
    struct Storage {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> impl_;

    std::size_t flat_index(std::initializer_list<std::size_t> index) const;
    Storage& storage() const;
};

}  // namespace trisense
