// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trisense/connector.hpp"
#include "trisense/decoding.hpp"
#include "trisense/events.hpp"
#include "trisense/params.hpp"
#include "trisense/temporal.hpp"

namespace trisense {

struct DecoderConfig {
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t mlp_hidden = 256;
    std::size_t max_positions = 256;
    std::size_t time_embed_dim = 16;
};

struct ModelConfig {
    ConnectorConfig connector;
    DecoderConfig decoder;
    std::size_t vocab_size = kFirstWord + 1;

    void validate() const;
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& doc);

// One sample as seen by the model. Streams are [1, F, T, D].
struct ModelInput {
    ModalityBundle bundle;
    std::vector<TokenId> query;   // words encoded into f(q) for the connector
    std::vector<TokenId> prompt;  // decoder prompt tokens
    std::vector<double> frame_times;
    double duration = 0.0;
};

struct EncodedContext {
    Tensor rows;  // [C, D_llm]: fused tokens, frame time features, prompt
    ConnectorOutput connector;
};

struct ResponseLoss {
    Tensor total;  // summed NLL, scalar
    std::size_t scored_tokens = 0;
};

// Query-conditioned connector feeding a small causal decoder with an LM head
// and an 11-way time head. Parameter groups: connector, time_encoder,
// time_head, lm_head, backbone.
class TriSenseModel {
public:
    TriSenseModel(const ModelConfig& config, std::uint64_t seed);
    TriSenseModel(const ModelConfig& config, ParameterStore params);

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    Tensor encode_query(Graph& g, const std::vector<TokenId>& query) const;  // [1, L, D]
    EncodedContext encode(Graph& g, const ModelInput& input) const;
    // Final-layer states for context rows followed by the given tokens.
    Tensor hidden_states(Graph& g, const Tensor& context, const std::vector<TokenId>& tokens) const;
    Tensor lm_logits(Graph& g, const Tensor& hidden) const;
    Tensor time_logits(Graph& g, const Tensor& hidden) const;

    // Teacher-forced NLL of `response`. Tokens before `score_from` only
    // condition. Time symbols inside <sync> blocks are scored by the time
    // head, the closing <sync> is forced and unscored, every other token is
    // scored by the LM head over the full vocabulary.
    ResponseLoss response_nll(Graph& g, const ModelInput& input, const std::vector<TokenId>& response,
                              std::size_t score_from = 0) const;
    ResponseLoss response_nll(Graph& g, const EncodedContext& ctx, const std::vector<TokenId>& response,
                              std::size_t score_from = 0) const;
    // NLL of the next event given the serialized prior events.
    ResponseLoss next_event_nll(Graph& g, const ModelInput& input, const std::vector<Event>& prior,
                                const Event& target) const;

    GenerateResult generate(const ModelInput& input, const DecodeLimits& limits) const;
    GenerateResult generate(const EncodedContext& ctx, const DecodeLimits& limits) const;
    // First emitted span, or nullopt when the decoder emits no event.
    std::optional<TimeSpan> moment_retrieval(const ModelInput& input) const;
    std::vector<TokenId> segment_caption(const ModelInput& input, std::size_t max_tokens = 32) const;

private:
    void init(std::uint64_t seed);

    ModelConfig config_;
    ParameterStore params_;
    TimeEncoder time_encoder_;
};

// "connector", "time_encoder", "time_head", "lm_head", "backbone".
const std::vector<std::string>& parameter_groups();

}  // namespace trisense
