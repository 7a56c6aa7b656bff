// SPDX-License-Identifier: Apache-2.0
#include "trisense/model.hpp"

#include <cmath>

namespace trisense {

const std::vector<std::string>& parameter_groups() {
    static const std::vector<std::string> groups{"connector", "time_encoder", "time_head", "lm_head", "backbone"};
    return groups;
}

void ModelConfig::validate() const {
    const auto& c = connector;
    if (c.dim == 0 || c.dim % 4 != 0) throw ParameterError("connector dim must be a positive multiple of 4");
    if (c.llm_dim == 0 || c.mlp_hidden == 0) throw ParameterError("connector widths must be positive");
    if (!(c.temperature > 0.0)) throw ParameterError("temperature must be positive");
    if (decoder.heads == 0 || c.llm_dim % decoder.heads != 0) {
        throw ParameterError("decoder width " + std::to_string(c.llm_dim) + " is not divisible by " +
                             std::to_string(decoder.heads) + " heads");
    }
    if (decoder.layers == 0 || decoder.mlp_hidden == 0 || decoder.time_embed_dim == 0) {
        throw ParameterError("decoder sizes must be positive");
    }
    if (vocab_size <= kFirstWord) throw ParameterError("vocabulary must contain at least one word");
}

nlohmann::json config_to_json(const ModelConfig& config) {
    const auto& c = config.connector;
    const auto& d = config.decoder;
    return {{"dim", c.dim},
            {"llm_dim", c.llm_dim},
            {"connector_mlp_hidden", c.mlp_hidden},
            {"temperature", c.temperature},
            {"ln_eps", c.ln_eps},
            {"fusion", std::string(fusion_mode_name(c.mode))},
            {"layers", d.layers},
            {"heads", d.heads},
            {"decoder_mlp_hidden", d.mlp_hidden},
            {"max_positions", d.max_positions},
            {"time_embed_dim", d.time_embed_dim},
            {"vocab_size", config.vocab_size}};
}

ModelConfig config_from_json(const nlohmann::json& doc) {
    ModelConfig config;
    auto& c = config.connector;
    auto& d = config.decoder;
    c.dim = doc.at("dim").get<std::size_t>();
    c.llm_dim = doc.at("llm_dim").get<std::size_t>();
    c.mlp_hidden = doc.at("connector_mlp_hidden").get<std::size_t>();
    c.temperature = doc.at("temperature").get<double>();
    c.ln_eps = doc.at("ln_eps").get<double>();
    c.mode = parse_fusion_mode(doc.at("fusion").get<std::string>());
    d.layers = doc.at("layers").get<std::size_t>();
    d.heads = doc.at("heads").get<std::size_t>();
    d.mlp_hidden = doc.at("decoder_mlp_hidden").get<std::size_t>();
    d.max_positions = doc.at("max_positions").get<std::size_t>();
    d.time_embed_dim = doc.at("time_embed_dim").get<std::size_t>();
    config.vocab_size = doc.at("vocab_size").get<std::size_t>();
    config.validate();
    return config;
}

namespace {

std::string layer_key(std::size_t layer, const char* leaf) {
    return "backbone.layer" + std::to_string(layer) + "." + leaf;
}

Tensor scaled_randn(const Shape& shape, std::mt19937_64& rng, std::size_t fan_in) {
    return Tensor::randn(shape, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

const std::vector<std::uint8_t>& causal_mask(std::size_t n) {
    thread_local std::vector<std::vector<std::uint8_t>> cache;
    if (cache.size() <= n) cache.resize(n + 1);
    auto& m = cache[n];
    if (m.empty()) {
        m.assign(n * n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 1;
        }
    }
    return m;
}

}  // namespace

TriSenseModel::TriSenseModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    init(seed);
}

TriSenseModel::TriSenseModel(const ModelConfig& config, ParameterStore params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    TriSenseModel reference(config_, 0);
    for (const auto& [name, t] : reference.params()) {
        if (!params_.contains(name)) throw ParameterError("checkpoint is missing parameter " + name);
        if (params_.get(name).shape() != t.shape()) {
            throw DimensionError("parameter " + name + " has shape " + shape_to_string(params_.get(name).shape()) +
                                 ", expected " + shape_to_string(t.shape()));
        }
    }
    if (params_.size() != reference.params().size()) throw ParameterError("checkpoint has unexpected parameters");
    time_encoder_ = TimeEncoder("time_encoder", config_.decoder.time_embed_dim, config_.connector.llm_dim);
}

void TriSenseModel::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = config_.connector.dim;
    const std::size_t e = config_.connector.llm_dim;
    const std::size_t v = config_.vocab_size;
    const auto& dc = config_.decoder;

    init_connector_params(params_, config_.connector, rng);
    params_.add("connector.query_proj.w", scaled_randn({e, d}, rng, e));
    params_.add("connector.query_proj.b", Tensor::zeros({d}));
    time_encoder_ = TimeEncoder(params_, "time_encoder", dc.time_embed_dim, e, rng);

    params_.add("backbone.tok_embed", Tensor::randn({v, e}, rng, 1.0));
    params_.add("backbone.pos_embed", Tensor::randn({dc.max_positions, e}, rng, 0.1));
    for (std::size_t l = 0; l < dc.layers; ++l) {
        params_.add(layer_key(l, "ln1.g"), Tensor::full({e}, 1.0));
        params_.add(layer_key(l, "ln1.b"), Tensor::zeros({e}));
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
            params_.add(layer_key(l, w), scaled_randn({e, e}, rng, e));
        }
        params_.add(layer_key(l, "attn.bo"), Tensor::zeros({e}));
        params_.add(layer_key(l, "ln2.g"), Tensor::full({e}, 1.0));
        params_.add(layer_key(l, "ln2.b"), Tensor::zeros({e}));
        params_.add(layer_key(l, "mlp.w1"), scaled_randn({e, dc.mlp_hidden}, rng, e));
        params_.add(layer_key(l, "mlp.b1"), Tensor::zeros({dc.mlp_hidden}));
        params_.add(layer_key(l, "mlp.w2"), scaled_randn({dc.mlp_hidden, e}, rng, dc.mlp_hidden));
        params_.add(layer_key(l, "mlp.b2"), Tensor::zeros({e}));
    }
    params_.add("backbone.final_ln.g", Tensor::full({e}, 1.0));
    params_.add("backbone.final_ln.b", Tensor::zeros({e}));
    params_.add("lm_head.w", scaled_randn({e, v}, rng, e));
    params_.add("lm_head.b", Tensor::zeros({v}));
    params_.add("time_head.w", scaled_randn({e, kTimeAlphabetSize}, rng, e));
    params_.add("time_head.b", Tensor::zeros({kTimeAlphabetSize}));
}

Tensor TriSenseModel::encode_query(Graph& g, const std::vector<TokenId>& query) const {
    if (query.empty()) throw DimensionError("query must contain at least one token");
    Tensor emb = g.gather_rows(params_.get("backbone.tok_embed"), query);
    Tensor q = g.linear(emb, params_.get("connector.query_proj.w"), params_.get("connector.query_proj.b"));
    return g.reshape(q, {1, query.size(), config_.connector.dim});
}

EncodedContext TriSenseModel::encode(Graph& g, const ModelInput& input) const {
    input.bundle.validate();
    std::size_t frames = 0;
    for (auto m : kAllModalities) {
        if (!input.bundle.present.contains(m)) continue;
        const Tensor& t = input.bundle.stream(m);
        if (t.dim(0) != 1) throw DimensionError("model input streams must have batch size 1");
        frames = t.dim(1);
    }
    if (input.frame_times.size() != frames) {
        throw DimensionError("got " + std::to_string(input.frame_times.size()) + " frame times for " +
                             std::to_string(frames) + " frames");
    }
    EncodedContext ctx;
    Tensor q = encode_query(g, input.query);
    ctx.connector = connector_forward(g, input.bundle, QueryEncoding{q}, params_, config_.connector);
    const std::size_t e = config_.connector.llm_dim;
    std::vector<Tensor> parts;
    parts.push_back(g.reshape(ctx.connector.fused, {input.query.size(), e}));
    std::vector<TimeTokenSeq> stamps;
    stamps.reserve(frames);
    for (double t : input.frame_times) stamps.push_back(tokenize_timestamp(t));
    parts.push_back(time_encoder_.encode(g, params_, stamps));
    if (!input.prompt.empty()) parts.push_back(g.gather_rows(params_.get("backbone.tok_embed"), input.prompt));
    ctx.rows = g.concat(parts, 0);
    return ctx;
}

Tensor TriSenseModel::hidden_states(Graph& g, const Tensor& context, const std::vector<TokenId>& tokens) const {
    const auto& dc = config_.decoder;
    const std::size_t e = config_.connector.llm_dim;
    Tensor x = context;
    if (!tokens.empty()) x = g.concat({context, g.gather_rows(params_.get("backbone.tok_embed"), tokens)}, 0);
    const std::size_t n = x.dim(0);
    if (n > dc.max_positions) {
        throw DimensionError("sequence of " + std::to_string(n) + " rows exceeds " +
                             std::to_string(dc.max_positions) + " positions");
    }
    x = g.add(x, g.slice(params_.get("backbone.pos_embed"), 0, 0, n));
    const auto& mask = causal_mask(n);
    const std::size_t dh = e / dc.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t l = 0; l < dc.layers; ++l) {
        Tensor h = g.layer_norm(x, params_.get(layer_key(l, "ln1.g")), params_.get(layer_key(l, "ln1.b")),
                                config_.connector.ln_eps);
        Tensor q = g.matmul(h, params_.get(layer_key(l, "attn.wq")));
        Tensor kt = g.transpose(g.matmul(h, params_.get(layer_key(l, "attn.wk"))));
        Tensor v = g.matmul(h, params_.get(layer_key(l, "attn.wv")));
        std::vector<Tensor> heads;
        heads.reserve(dc.heads);
        for (std::size_t hd = 0; hd < dc.heads; ++hd) {
            Tensor logits = g.scale(g.matmul(g.slice(q, 1, hd * dh, dh), g.slice(kt, 0, hd * dh, dh)), inv_sqrt);
            Tensor a = g.softmax(logits, 1, 1.0, mask);
            heads.push_back(g.matmul(a, g.slice(v, 1, hd * dh, dh)));
        }
        Tensor attn = dc.heads == 1 ? heads[0] : g.concat(heads, 1);
        x = g.add(x, g.linear(attn, params_.get(layer_key(l, "attn.wo")), params_.get(layer_key(l, "attn.bo"))));
        Tensor h2 = g.layer_norm(x, params_.get(layer_key(l, "ln2.g")), params_.get(layer_key(l, "ln2.b")),
                                 config_.connector.ln_eps);
        Tensor mid = g.gelu(g.linear(h2, params_.get(layer_key(l, "mlp.w1")), params_.get(layer_key(l, "mlp.b1"))));
        x = g.add(x, g.linear(mid, params_.get(layer_key(l, "mlp.w2")), params_.get(layer_key(l, "mlp.b2"))));
    }
    return g.layer_norm(x, params_.get("backbone.final_ln.g"), params_.get("backbone.final_ln.b"),
                        config_.connector.ln_eps);
}

Tensor TriSenseModel::lm_logits(Graph& g, const Tensor& hidden) const {
    return g.linear(hidden, params_.get("lm_head.w"), params_.get("lm_head.b"));
}

Tensor TriSenseModel::time_logits(Graph& g, const Tensor& hidden) const {
    return g.linear(hidden, params_.get("time_head.w"), params_.get("time_head.b"));
}

ResponseLoss TriSenseModel::response_nll(Graph& g, const ModelInput& input, const std::vector<TokenId>& response,
                                         std::size_t score_from) const {
    return response_nll(g, encode(g, input), response, score_from);
}

ResponseLoss TriSenseModel::response_nll(Graph& g, const EncodedContext& ctx, const std::vector<TokenId>& response,
                                         std::size_t score_from) const {
    if (response.empty()) throw std::invalid_argument("response must contain at least one token");
    std::vector<std::size_t> lm_rows, lm_targets, time_rows, time_targets;
    const std::size_t c = ctx.rows.dim(0);
    std::size_t block_pos = kTimeBlockLength;  // == length means "not in a block"
    bool expect_close = false;
    for (std::size_t j = 0; j < response.size(); ++j) {
        const TokenId tok = response[j];
        if (tok >= config_.vocab_size) throw std::out_of_range("response token " + std::to_string(tok) + " out of range");
        const std::size_t row = c - 1 + j;
        if (block_pos < kTimeBlockLength) {
            if (!is_time_token(tok)) throw EventFormatError("time block interrupted by a non-time token", j);
            const auto sym = time_symbol(tok);
            if ((block_pos % kTimeTokenCount == 4) != (sym == kTimeDot)) {
                throw EventFormatError("malformed time block", j);
            }
            if (j >= score_from) {
                time_rows.push_back(row);
                time_targets.push_back(sym);
            }
            if (++block_pos == kTimeBlockLength) expect_close = true;
            continue;
        }
        if (expect_close) {
            if (tok != kSync) throw EventFormatError("time block not closed by <sync>", j);
            expect_close = false;
            continue;
        }
        if (is_time_token(tok)) throw EventFormatError("time symbol outside a <sync> block", j);
        if (tok == kSync) block_pos = 0;
        if (j >= score_from) {
            lm_rows.push_back(row);
            lm_targets.push_back(tok);
        }
    }
    if (block_pos < kTimeBlockLength || expect_close) {
        throw EventFormatError("response ends inside a time block", response.size());
    }

    const std::vector<TokenId> inputs(response.begin(), response.end() - 1);
    Tensor hidden = hidden_states(g, ctx.rows, inputs);
    ResponseLoss out;
    out.scored_tokens = lm_rows.size() + time_rows.size();
    if (!lm_rows.empty()) {
        out.total = g.cross_entropy(lm_logits(g, g.gather_rows(hidden, lm_rows)), lm_targets);
    }
    if (!time_rows.empty()) {
        Tensor t = g.cross_entropy(time_logits(g, g.gather_rows(hidden, time_rows)), time_targets);
        out.total = out.total.defined() ? g.add(out.total, t) : t;
    }
    if (!out.total.defined()) out.total = Tensor::scalar(0.0);
    return out;
}

ResponseLoss TriSenseModel::next_event_nll(Graph& g, const ModelInput& input, const std::vector<Event>& prior,
                                           const Event& target) const {
    validate_span(target.span, input.duration);
    std::vector<TokenId> response = serialize_events(prior);
    response.pop_back();
    const std::size_t score_from = response.size();
    auto event_tokens = serialize_events({target});
    response.insert(response.end(), event_tokens.begin(), event_tokens.end() - 1);
    return response_nll(g, input, response, score_from);
}

GenerateResult TriSenseModel::generate(const ModelInput& input, const DecodeLimits& limits) const {
    Graph g(Graph::Mode::Inference);
    return generate(encode(g, input), limits);
}

GenerateResult TriSenseModel::generate(const EncodedContext& ctx, const DecodeLimits& limits) const {
    DecodeLimits bounded = limits;
    const std::size_t c = ctx.rows.dim(0);
    const std::size_t room = config_.decoder.max_positions > c ? config_.decoder.max_positions - c : 0;
    if (room <= kTimeBlockLength + 1) throw DimensionError("context leaves no room for decoding");
    bounded.max_tokens = std::min(bounded.max_tokens, room - kTimeBlockLength - 1);
    HeadSwitchDecoder decoder(config_.vocab_size, bounded);
    while (!decoder.done()) {
        Graph g(Graph::Mode::Inference);
        Tensor hidden = hidden_states(g, ctx.rows, decoder.result().tokens);
        Tensor last = g.slice(hidden, 0, hidden.dim(0) - 1, 1);
        Tensor logits = decoder.active_head() == Head::Lm ? lm_logits(g, last) : time_logits(g, last);
        decoder.step(logits.values());
    }
    return decoder.take_result();
}

std::optional<TimeSpan> TriSenseModel::moment_retrieval(const ModelInput& input) const {
    DecodeLimits limits;
    limits.max_events = 1;
    limits.max_tokens = 48;
    limits.duration = input.duration;
    auto result = generate(input, limits);
    if (result.events.empty()) return std::nullopt;
    return result.events.front().span;
}

std::vector<TokenId> TriSenseModel::segment_caption(const ModelInput& input, std::size_t max_tokens) const {
    DecodeLimits limits;
    limits.captions_only = true;
    limits.max_tokens = max_tokens;
    limits.duration = input.duration;
    return generate(input, limits).text;
}

}  // namespace trisense
