// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "trisense/gradcheck.hpp"
#include "trisense/graph.hpp"
#include "trisense/params.hpp"

using namespace trisense;

namespace {

Tensor param(const Shape& s, std::mt19937_64& rng, double stddev = 1.0) { return Tensor::randn(s, rng, stddev, true); }

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Matmul, IdentityAndDot) {
    Graph g;
    const Tensor i({2, 2}, {1, 0, 0, 1});
    const Tensor b({2, 2}, {3, 4, 5, 6});
    EXPECT_EQ(vals(g.matmul(i, b)), (std::vector<double>{3, 4, 5, 6}));
    const Tensor r({1, 2}, {1, 2});
    const Tensor c({2, 1}, {3, 4});
    EXPECT_EQ(g.matmul(r, c).item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesShapes) {
    Graph g;
    try {
        g.matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
        FAIL();
    } catch (const DimensionError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("[2x3]"), std::string::npos) << what;
        EXPECT_NE(what.find("[4x2]"), std::string::npos) << what;
    }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(1);
    Tensor a = param({5, 7}, rng), b = param({7, 3}, rng), w = Tensor::randn({5, 3}, rng);
    auto loss = [&](Graph& g) { return g.sum(g.mul(g.matmul(a, b), w)); };
    EXPECT_LT(finite_diff_check(loss, a), 1e-6);
    EXPECT_LT(finite_diff_check(loss, b), 1e-6);
}

TEST(Softmax, WorkedExamples) {
    Graph g;
    auto y = g.softmax(Tensor({3}, {0, 0, 0}), 0);
    for (double v : y.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    y = g.softmax(Tensor({3}, {std::log(2.0), 0, 0}), 0);
    EXPECT_NEAR(y.values()[0], 0.5, 1e-15);
    EXPECT_NEAR(y.values()[1], 0.25, 1e-15);
    EXPECT_NEAR(y.values()[2], 0.25, 1e-15);
    y = g.softmax(Tensor({2}, {1000, 0}), 0);
    EXPECT_TRUE(y.all_finite());
    EXPECT_NEAR(y.values()[0], 1.0, 1e-15);
    EXPECT_LT(y.values()[1], 1e-300);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
    Graph g;
    EXPECT_THROW(g.softmax(Tensor({2}, {1, 2}), 0, 0.0), ParameterError);
    EXPECT_THROW(g.softmax(Tensor({2}, {1, 2}), 0, -1.0), ParameterError);
}

TEST(Softmax, SimplexAndShiftInvarianceFuzz) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> x(5);
        for (double& v : x) v = u(rng);
        const double shift = u(rng);
        std::vector<double> xs = x;
        for (double& v : xs) v += shift;
        Graph g(Graph::Mode::Inference);
        const Tensor y = g.softmax(Tensor({5}, x), 0, 0.5 + k % 3);
        const Tensor ys = g.softmax(Tensor({5}, xs), 0, 0.5 + k % 3);
        double total = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            const double a = y.values()[i];
            ASSERT_GE(a, 0.0);
            ASSERT_TRUE(std::isfinite(a));
            total += a;
            ASSERT_LE(std::abs(a - ys.values()[i]), 1e-12 * std::max(1.0, a));
        }
        ASSERT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Softmax, MaskedEntriesAreExactlyZero) {
    Graph g;
    const std::vector<std::uint8_t> mask{1, 0, 1};
    const Tensor y = g.softmax(Tensor({3}, {0.3, 5.0, 0.3}), 0, 1.0, mask);
    EXPECT_EQ(y.values()[1], 0.0);
    EXPECT_NEAR(y.values()[0], 0.5, 1e-15);
}

TEST(LayerNorm, WorkedExamples) {
    Graph g;
    const Tensor one = Tensor::full({2}, 1.0), zero = Tensor::zeros({2});
    const Tensor y = g.layer_norm(Tensor({2}, {1, 3}), one, zero, 0.0);
    EXPECT_NEAR(y.values()[0], -1.0, 1e-15);
    EXPECT_NEAR(y.values()[1], 1.0, 1e-15);
    const Tensor c = g.layer_norm(Tensor({4}, {2, 2, 2, 2}), Tensor::full({4}, 1.0), Tensor::zeros({4}));
    for (double v : c.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, SizeOneWithoutEpsIsRejected) {
    Graph g;
    EXPECT_THROW(g.layer_norm(Tensor({3, 1}, {1, 2, 3}), Tensor::full({1}, 1.0), Tensor::zeros({1}), 0.0),
                 ParameterError);
}

TEST(LayerNorm, RowStatisticsOracle) {
    std::mt19937_64 rng(3);
    Graph g;
    const Tensor x = Tensor::randn({4, 8}, rng, 3.0);
    const Tensor y = g.layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 8; ++c) m += y.at({r, c}) / 8.0;
        for (std::size_t c = 0; c < 8; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m) / 8.0;
        EXPECT_LT(std::abs(m), 1e-10);
        EXPECT_NEAR(v, 1.0, 1e-5);  // eps = 1e-5 shrinks the variance slightly
    }
}

TEST(LayerNorm, ShapeErrors) {
    Graph g;
    EXPECT_THROW(g.layer_norm(Tensor::zeros({2, 3}), Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(Mean, ExamplesAndOracle) {
    Graph g;
    EXPECT_EQ(vals(g.mean(Tensor({2, 2}, {1, 2, 3, 4}), 0)), (std::vector<double>{2, 3}));
    EXPECT_EQ(vals(g.mean(Tensor({1, 3}, {5, 6, 7}), 0)), (std::vector<double>{5, 6, 7}));
    std::mt19937_64 rng(4);
    const Tensor x = Tensor::randn({6, 16}, rng);
    const Tensor m = g.mean(x, 0);
    for (std::size_t c = 0; c < 16; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < 6; ++r) s += x.at({r, c});
        EXPECT_NEAR(m.values()[c], s / 6.0, 1e-12);
    }
    EXPECT_THROW(g.mean(x, 2), DimensionError);
}

TEST(Backward, SumAndQuadratic) {
    std::mt19937_64 rng(5);
    Tensor p = param({2, 3}, rng);
    {
        Graph g;
        backward(g, g.sum(p));
    }
    for (double v : p.grad()) EXPECT_EQ(v, 1.0);
    p.zero_grad();
    {
        Graph g;
        backward(g, g.scale(g.sum(g.mul(p, p)), 0.5));
    }
    for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.grad()[i], p.values()[i], 1e-15);
}

TEST(Backward, AccumulatesUntilZeroed) {
    Tensor p = Tensor::full({3}, 2.0, true);
    for (int k = 0; k < 2; ++k) {
        Graph g;
        backward(g, g.sum(p));
    }
    for (double v : p.grad()) EXPECT_EQ(v, 2.0);
    p.zero_grad();
    for (double v : p.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonScalarLossIsRejected) {
    Tensor p = Tensor::full({3}, 2.0, true);
    Graph g;
    const Tensor y = g.scale(p, 2.0);
    EXPECT_THROW(backward(g, y), DimensionError);
}

TEST(Graph, InferenceModeRecordsNothing) {
    Tensor p = Tensor::full({3}, 2.0, true);
    Graph g(Graph::Mode::Inference);
    g.sum(g.mul(p, p));
    EXPECT_EQ(g.size(), 0u);
}

TEST(Graph, ForwardNeverProducesNonFiniteValues) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> xs(24);
        for (double& v : xs) v = u(rng);
        const Tensor x({4, 6}, xs);
        Graph g(Graph::Mode::Inference);
        EXPECT_TRUE(g.softmax(x, 1).all_finite());
        EXPECT_TRUE(g.layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6})).all_finite());
        EXPECT_TRUE(g.gelu(x).all_finite());
        EXPECT_TRUE(g.tanh(x).all_finite());
        const std::vector<std::size_t> targets{0, 1, 2, 3};
        EXPECT_TRUE(g.cross_entropy(x, targets).all_finite());
    }
}

// Every differentiable op, 10 random instances each.
TEST(Gradients, EveryOpPassesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a = param({2, 3, 4}, rng), b = param({2, 4, 3}, rng), c = param({2, 3, 4}, rng);
        Tensor gain = param({4}, rng), bias = param({4}, rng), w = param({4, 5}, rng), wb = param({5}, rng);
        Tensor table = param({6, 4}, rng), col = param({2, 3}, rng);
        const Tensor probe = Tensor::randn({2, 3, 4}, rng);
        const std::vector<std::size_t> ids{0, 5, 2};
        const std::vector<std::size_t> targets{1, 0, 4, 3, 2, 1};
        const std::vector<LossFn> losses{
            [&](Graph& g) { return g.sum(g.mul(g.matmul(a, b), g.matmul(c, g.transpose(c)))); },
            [&](Graph& g) { return g.sum(g.mul(g.add(a, g.sub(c, g.scale(a, 0.5))), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.softmax(a, 2, 0.7), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.softmax(a, 1), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.layer_norm(a, gain, bias), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.mean(a, 1), g.mean(c, 1))); },
            [&](Graph& g) { return g.sum(g.mul(g.gelu(a), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.tanh(a), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.linear(a, w, wb), g.linear(c, w, wb))); },
            [&](Graph& g) { return g.sum(g.mul(g.add_bias(a, bias), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.scale_by(a, col, 1), probe)); },
            [&](Graph& g) { return g.sum(g.mul(g.gather_rows(table, ids), g.reshape(g.slice(a, 0, 0, 1), {3, 4}))); },
            [&](Graph& g) { return g.sum(g.mul(g.concat({a, c}, 2), g.concat({c, a}, 2))); },
            [&](Graph& g) { return g.cross_entropy(g.reshape(g.linear(a, w, wb), {6, 5}), targets); },
        };
        for (std::size_t k = 0; k < losses.size(); ++k) {
            ParameterStore store;
            store.add("a", a);
            store.add("b", b);
            store.add("c", c);
            store.add("gain", gain);
            store.add("bias", bias);
            store.add("w", w);
            store.add("wb", wb);
            store.add("table", table);
            store.add("col", col);
            for (const auto& r : finite_diff_check_all(losses[k], store)) {
                EXPECT_LT(r.max_rel_err, 1e-4) << "loss " << k << " param " << r.name << " seed " << seed;
            }
        }
    }
}

TEST(FiniteDiff, LinearLossIsExact) {
    std::mt19937_64 rng(7);
    Tensor p = param({3, 3}, rng);
    const Tensor w = Tensor::randn({3, 3}, rng);
    EXPECT_LT(finite_diff_check([&](Graph& g) { return g.sum(g.mul(p, w)); }, p), 1e-6);
}

TEST(FiniteDiff, SoftmaxCrossEntropyToy) {
    std::mt19937_64 rng(8);
    Tensor logits = param({4, 5}, rng);
    const std::vector<std::size_t> t{0, 3, 1, 4};
    EXPECT_LT(finite_diff_check([&](Graph& g) { return g.cross_entropy(logits, t); }, logits), 1e-5);
}

TEST(FiniteDiff, CorruptedRuleIsCaught) {
    std::mt19937_64 rng(9);
    Tensor p = param({4}, rng);
    auto broken = [&](Graph& g) {
        Tensor out = Tensor::scalar(0.0);
        for (double v : p.values()) out.values()[0] += v * v;
        // Claims d/dp = p instead of 2p.
        return g.record(out, {p}, [p, out] {
            for (std::size_t i = 0; i < p.numel(); ++i) p.grad()[i] += out.grad()[0] * p.values()[i];
        });
    };
    EXPECT_GT(finite_diff_check(broken, p), 1e-2);
}

TEST(FiniteDiff, NondeterministicLossIsRejected) {
    Tensor p = Tensor::full({2}, 1.0, true);
    int calls = 0;
    auto flaky = [&](Graph& g) { return g.scale(g.sum(p), 1.0 + 1e-3 * ++calls); };
    EXPECT_THROW(finite_diff_check(flaky, p), NondeterminismError);
}

TEST(FiniteDiff, StepOutsideRangeIsRejected) {
    Tensor p = Tensor::full({2}, 1.0, true);
    FiniteDiffOptions o;
    o.h = 1e-2;
    EXPECT_THROW(finite_diff_check([&](Graph& g) { return g.sum(p); }, p, o), ParameterError);
}

TEST(Tensor, InvariantsAndErrors) {
    EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.at({1, 2}), 6.0);
    Tensor shared = t;
    shared.at({0, 0}) = 9.0;
    EXPECT_EQ(t.at({0, 0}), 9.0);
    Tensor copy = t.clone();
    copy.at({0, 0}) = 1.0;
    EXPECT_EQ(t.at({0, 0}), 9.0);
    t.set_requires_grad(true);
    EXPECT_EQ(t.grad().size(), t.numel());
}

TEST(Checkpoint, ExactJsonRoundTrip) {
    std::mt19937_64 rng(10);
    ParameterStore store;
    store.add("connector.w", Tensor::randn({3, 4}, rng));
    store.add("backbone.b", Tensor::randn({7}, rng));
    const auto back = checkpoint_from_json(checkpoint_to_json(store, {{"stage", 2}}));
    EXPECT_EQ(back.meta.at("stage"), 2);
    for (const auto& [name, t] : store) {
        const auto a = t.values();
        const auto b = back.params.get(name).values();
        ASSERT_EQ(back.params.get(name).shape(), t.shape());
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    }
}

TEST(Checkpoint, AssignRequiresMatchingShapes) {
    ParameterStore a, b;
    a.add("x", Tensor::zeros({2}));
    b.add("x", Tensor::zeros({3}));
    EXPECT_THROW(assign_parameters(a, b), DimensionError);
}
