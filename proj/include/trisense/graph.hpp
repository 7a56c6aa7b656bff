// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "trisense/tensor.hpp"

namespace trisense {

// Reverse-mode tape. Every op whose inputs require gradients appends a record
// holding its inputs, output and local gradient rule; backward() walks the
// records once in reverse order. A Graph and the tensors it produces belong to
// one thread; separate graphs may run concurrently as long as they do not
// backpropagate into the same leaf tensors at the same time.
class Graph {
public:
    enum class Mode { Training, Inference };

    // Local gradient rule: reads the output gradient and accumulates into the
    // gradients of the inputs that require them.
    using GradRule = std::function<void()>;

    explicit Graph(Mode mode = Mode::Training) : mode_(mode) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Mode mode() const { return mode_; }
    std::size_t size() const { return records_.size(); }

    // Batched matrix product over the last two axes. Batch axes must match
    // exactly; a rank-2 right operand is shared across all batch entries.
    Tensor matmul(const Tensor& a, const Tensor& b);
    // Swaps the last two axes.
    Tensor transpose(const Tensor& x);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& x, double factor);
    // x + bias, bias broadcast along every axis except the last.
    Tensor add_bias(const Tensor& x, const Tensor& bias);
    // x[b, ...] * weights[b, column]; weights has shape [B, M].
    Tensor scale_by(const Tensor& x, const Tensor& weights, std::size_t column);
    Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

    // exp((x - max) / temperature) normalized along axis. Entries whose mask
    // byte is zero are excluded and come out exactly 0.
    Tensor softmax(const Tensor& x, std::size_t axis, double temperature = 1.0,
                   std::span<const std::uint8_t> mask = {});
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
    Tensor mean(const Tensor& x, std::size_t axis);
    Tensor sum(const Tensor& x);
    Tensor gelu(const Tensor& x);
    Tensor tanh(const Tensor& x);

    // Row gather from a rank-2 table: out[i] = table[ids[i]].
    Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
    Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
    Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
    Tensor reshape(const Tensor& x, const Shape& shape);

    // Sum over rows of -log softmax(logits[i])[targets[i]] for logits [N, C].
    Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

    // Registers a custom differentiable op whose output was computed by the
    // caller. The rule runs during backward with the output gradient filled in.
    Tensor record(Tensor output, std::vector<Tensor> inputs, GradRule rule);

    void backward(const Tensor& loss);

private:
    struct Record {
        std::vector<Tensor> inputs;
        Tensor output;
        GradRule rule;
    };

    bool tracks(std::initializer_list<const Tensor*> inputs) const;

    Mode mode_;
    std::vector<Record> records_;
};

// Accumulates dloss/dp into every leaf reachable from loss.
void backward(Graph& graph, const Tensor& loss);

}  // namespace trisense
