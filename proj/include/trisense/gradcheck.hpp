// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trisense/graph.hpp"
#include "trisense/params.hpp"

namespace trisense {

class NondeterminismError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using LossFn = std::function<Tensor(Graph&)>;

struct FiniteDiffOptions {
    double h = 1e-5;
    // 0 checks every coordinate; otherwise a seeded sample of this size.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
};

// max |analytic - (f(p+h) - f(p-h)) / 2h| / (|analytic| + 1e-8) over the
// checked coordinates of param. Zeroes param's gradient buffer.
double finite_diff_check(const LossFn& loss_fn, Tensor param, const FiniteDiffOptions& options = {});

struct ParamCheck {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords = 0;
};

// One backward pass, then central differences for every parameter in store.
std::vector<ParamCheck> finite_diff_check_all(const LossFn& loss_fn, ParameterStore& store,
                                              const FiniteDiffOptions& options = {});

}  // namespace trisense
