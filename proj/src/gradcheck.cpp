// SPDX-License-Identifier: Apache-2.0
#include "trisense/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace trisense {

namespace {

double evaluate(const LossFn& loss_fn) {
    Graph g(Graph::Mode::Inference);
    return loss_fn(g).item();
}

void validate(const FiniteDiffOptions& options) {
    if (!(options.h >= 1e-7 && options.h <= 1e-3)) {
        throw ParameterError("finite-difference step must lie in [1e-7, 1e-3], got " + std::to_string(options.h));
    }
}

void check_determinism(const LossFn& loss_fn) {
    const double first = evaluate(loss_fn);
    const double second = evaluate(loss_fn);
    if (first != second && !(std::isnan(first) && std::isnan(second))) {
        throw NondeterminismError("loss function is not deterministic: " + std::to_string(first) + " vs " +
                                  std::to_string(second));
    }
}

std::vector<std::size_t> pick_coords(std::size_t n, const FiniteDiffOptions& options) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_coords == 0 || options.max_coords >= n) return idx;
    std::mt19937_64 rng(options.seed);
    for (std::size_t i = 0; i < options.max_coords; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(options.max_coords);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double compare(const LossFn& loss_fn, Tensor& param, std::span<const double> analytic,
               const FiniteDiffOptions& options, std::size_t* checked) {
    auto values = param.values();
    double worst = 0.0;
    const auto coords = pick_coords(values.size(), options);
    for (auto i : coords) {
        const double orig = values[i];
        values[i] = orig + options.h;
        const double up = evaluate(loss_fn);
        values[i] = orig - options.h;
        const double down = evaluate(loss_fn);
        values[i] = orig;
        const double numeric = (up - down) / (2.0 * options.h);
        const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
        worst = std::max(worst, std::isnan(err) ? INFINITY : err);
    }
    if (checked) *checked = coords.size();
    return worst;
}

}  // namespace

double finite_diff_check(const LossFn& loss_fn, Tensor param, const FiniteDiffOptions& options) {
    validate(options);
    check_determinism(loss_fn);
    const bool had = param.requires_grad();
    param.set_requires_grad(true);
    param.zero_grad();
    {
        Graph g;
        backward(g, loss_fn(g));
    }
    auto grad = param.grad();
    std::vector<double> analytic(grad.begin(), grad.end());
    param.set_requires_grad(had);
    return compare(loss_fn, param, analytic, options, nullptr);
}

std::vector<ParamCheck> finite_diff_check_all(const LossFn& loss_fn, ParameterStore& store,
                                              const FiniteDiffOptions& options) {
    validate(options);
    check_determinism(loss_fn);
    store.zero_grad();
    {
        Graph g;
        backward(g, loss_fn(g));
    }
    std::vector<ParamCheck> out;
    for (auto& [name, t] : store) {
        auto grad = t.grad();
        std::vector<double> analytic(grad.begin(), grad.end());
        ParamCheck pc{name, 0.0, 0};
        pc.max_rel_err = compare(loss_fn, t, analytic, options, &pc.coords);
        out.push_back(pc);
    }
    return out;
}

}  // namespace trisense
