// SPDX-License-Identifier: Apache-2.0
#include "trisense/connector.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

#include "trisense/temporal.hpp"

namespace trisense {

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::Vision: return "vision";
        case Modality::Audio: return "audio";
        case Modality::Speech: return "speech";
    }
    return "?";
}

char modality_letter(Modality m) {
    switch (m) {
        case Modality::Vision: return 'V';
        case Modality::Audio: return 'A';
        case Modality::Speech: return 'S';
    }
    return '?';
}

Modality parse_modality(std::string_view text) {
    std::string lower;
    for (char c : text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "v" || lower == "vision" || lower == "visual") return Modality::Vision;
    if (lower == "a" || lower == "audio") return Modality::Audio;
    if (lower == "s" || lower == "speech") return Modality::Speech;
    throw std::invalid_argument("unknown modality: " + std::string(text));
}

ModalitySet ModalitySet::of(std::initializer_list<Modality> ms) {
    ModalitySet s;
    for (auto m : ms) s = s.with(m);
    return s;
}

ModalitySet ModalitySet::parse(std::string_view label) {
    ModalitySet s;
    for (char c : label) {
        switch (std::toupper(static_cast<unsigned char>(c))) {
            case 'V': s = s.with(Modality::Vision); break;
            case 'A': s = s.with(Modality::Audio); break;
            case 'S': s = s.with(Modality::Speech); break;
            default: throw std::invalid_argument("bad modality set label: " + std::string(label));
        }
    }
    if (s.empty()) throw std::invalid_argument("empty modality set label");
    return s;
}

std::array<ModalitySet, 7> ModalitySet::nonempty_subsets() {
    return {ModalitySet(7), ModalitySet(3), ModalitySet(6), ModalitySet(5),
            ModalitySet(1), ModalitySet(2), ModalitySet(4)};
}

std::size_t ModalitySet::count() const {
    return static_cast<std::size_t>((bits_ & 1u) + ((bits_ >> 1) & 1u) + ((bits_ >> 2) & 1u));
}

std::string ModalitySet::label() const {
    std::string out;
    if (contains(Modality::Audio)) out += 'A';
    if (contains(Modality::Vision)) out += 'V';
    if (contains(Modality::Speech)) out += 'S';
    return out;
}

std::vector<std::string> ModalitySet::names() const {
    std::vector<std::string> out;
    for (auto m : kAllModalities) {
        if (contains(m)) out.emplace_back(modality_name(m));
    }
    return out;
}

void ModalityBundle::validate() const {
    if (present.empty()) throw std::invalid_argument("modality bundle has no present modality");
    const Tensor* ref = nullptr;
    for (auto m : kAllModalities) {
        if (!present.contains(m)) continue;
        const Tensor& t = stream(m);
        if (!t.defined()) {
            throw std::invalid_argument(std::string(modality_name(m)) + " is marked present but has no tensor");
        }
        if (t.rank() != 4) {
            throw DimensionError(std::string(modality_name(m)) + " stream must be [B, F, T, D], got " +
                                 shape_to_string(t.shape()));
        }
        if (!ref) {
            ref = &t;
            continue;
        }
        const auto& a = ref->shape();
        const auto& b = t.shape();
        if (a[0] != b[0] || a[1] != b[1] || a[3] != b[3]) {
            throw DimensionError("modality streams disagree on B, F or D: " + shape_to_string(a) + " vs " +
                                 shape_to_string(b));
        }
    }
}

bool ModalityWeights::on_masked_simplex(double tol) const {
    double total = 0.0;
    for (auto m : kAllModalities) {
        const double v = (*this)[m];
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
        if (!present.contains(m)) {
            if (v != 0.0) return false;
            continue;
        }
        total += v;
    }
    return std::abs(total - 1.0) <= tol;
}

std::string_view fusion_mode_name(FusionMode mode) {
    switch (mode) {
        case FusionMode::Adaptive: return "adaptive";
        case FusionMode::FixedWeights: return "fixed";
        case FusionMode::Addition: return "addition";
    }
    return "?";
}

FusionMode parse_fusion_mode(std::string_view text) {
    if (text == "adaptive") return FusionMode::Adaptive;
    if (text == "fixed" || text == "fixed-weights") return FusionMode::FixedWeights;
    if (text == "addition") return FusionMode::Addition;
    throw std::invalid_argument("unknown fusion mode: " + std::string(text));
}

namespace {

std::string attn_key(Modality m, const char* leaf) {
    return "connector.attn." + std::string(modality_name(m)) + "." + leaf;
}

void add_dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng) {
    store.add(name + ".w", Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
    store.add(name + ".b", Tensor::zeros({out}));
}

void add_norm(ParameterStore& store, const std::string& name, std::size_t dim) {
    store.add(name + ".g", Tensor::full({dim}, 1.0));
    store.add(name + ".b", Tensor::zeros({dim}));
}

Tensor tiled_pe(std::size_t batch, std::size_t frames, std::size_t tokens, std::size_t dim) {
    thread_local std::map<std::array<std::size_t, 3>, Tensor> cache;
    auto [it, fresh] = cache.try_emplace({frames, tokens, dim});
    if (fresh) it->second = sinusoidal_pe_2d(frames, tokens, dim);
    const Tensor& pe = it->second;
    std::vector<double> v;
    v.reserve(batch * pe.numel());
    for (std::size_t b = 0; b < batch; ++b) v.insert(v.end(), pe.values().begin(), pe.values().end());
    return Tensor({batch, frames * tokens, dim}, std::move(v));
}

}  // namespace

void init_connector_params(ParameterStore& store, const ConnectorConfig& config, std::mt19937_64& rng) {
    const std::size_t d = config.dim;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto m : kAllModalities) {
        store.add(attn_key(m, "wq"), Tensor::randn({d, d}, rng, s));
        store.add(attn_key(m, "bq"), Tensor::zeros({d}));
        store.add(attn_key(m, "wk"), Tensor::randn({d, d}, rng, s));
        store.add(attn_key(m, "wv"), Tensor::randn({d, d}, rng, s));
        store.add(attn_key(m, "bv"), Tensor::zeros({d}));
        store.add(attn_key(m, "wo"), Tensor::randn({d, d}, rng, s));
        store.add(attn_key(m, "bo"), Tensor::zeros({d}));
        store.add(attn_key(m, "ln.g"), Tensor::full({d}, 1.0));
        store.add(attn_key(m, "ln.b"), Tensor::zeros({d}));
    }
    // Zero gate: training starts from equal weights over the present set.
    store.add("connector.weighting.w", Tensor::zeros({3 * d, 3}));
    store.add("connector.weighting.b", Tensor::zeros({3}));
    add_norm(store, "connector.fuse_ln", d);
    add_dense(store, "connector.mlp1", d, config.mlp_hidden, rng);
    add_dense(store, "connector.mlp2", config.mlp_hidden, config.llm_dim, rng);
    if (config.llm_dim != d) {
        store.add("connector.residual", Tensor::randn({d, config.llm_dim}, rng, s));
    }
    add_norm(store, "connector.out_ln", config.llm_dim);
}

CrossAttention cross_attend(Graph& g, const Tensor& modality, const QueryEncoding& query, Modality m,
                            const ParameterStore& store, const ConnectorConfig& config) {
    const Tensor& q_in = query.tokens;
    if (modality.rank() != 3 || q_in.rank() != 3 || modality.dim(2) != config.dim || q_in.dim(2) != config.dim ||
        modality.dim(0) != q_in.dim(0)) {
        throw DimensionError("cross_attend: modality " + shape_to_string(modality.shape()) + " and query " +
                             shape_to_string(q_in.shape()) + " must be [B, N, " + std::to_string(config.dim) +
                             "] and [B, L, " + std::to_string(config.dim) + "]");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.dim));
    Tensor q = g.linear(q_in, store.get(attn_key(m, "wq")), store.get(attn_key(m, "bq")));
    // (Q Wq)(X Wk)^T == ((Q Wq) Wk^T) X^T, and attn (X Wv + bv) == (attn X) Wv + bv
    // because attention rows sum to one. Both forms avoid projecting all N keys.
    Tensor qk = g.matmul(q, g.transpose(store.get(attn_key(m, "wk"))));
    Tensor logits = g.scale(g.matmul(qk, g.transpose(modality)), inv_sqrt_d);
    Tensor attn = g.softmax(logits, 2);
    Tensor ctx = g.matmul(attn, modality);
    Tensor v = g.linear(ctx, store.get(attn_key(m, "wv")), store.get(attn_key(m, "bv")));
    Tensor o = g.linear(v, store.get(attn_key(m, "wo")), store.get(attn_key(m, "bo")));
    Tensor out = g.layer_norm(o, store.get(attn_key(m, "ln.g")), store.get(attn_key(m, "ln.b")), config.ln_eps);
    return {out, attn};
}

Tensor pool_modality(Graph& g, const Tensor& attended) {
    if (attended.rank() != 3) throw DimensionError("pool_modality expects [B, L, D], got " + shape_to_string(attended.shape()));
    return g.mean(attended, 1);
}

Tensor compute_weights(Graph& g, const std::array<Tensor, 3>& pooled, ModalitySet present,
                       const ParameterStore& store, const ConnectorConfig& config) {
    if (present.empty()) throw std::invalid_argument("compute_weights: no modality present");
    std::size_t batch = 0;
    for (auto m : kAllModalities) {
        if (!present.contains(m)) continue;
        const Tensor& c = pooled[static_cast<std::size_t>(m)];
        if (!c.defined() || c.rank() != 2 || c.dim(1) != config.dim) {
            throw DimensionError("compute_weights: pooled " + std::string(modality_name(m)) + " must be [B, " +
                                 std::to_string(config.dim) + "]");
        }
        if (batch && c.dim(0) != batch) throw DimensionError("compute_weights: batch sizes differ");
        batch = c.dim(0);
    }

    if (config.mode != FusionMode::Adaptive) {
        const double on = config.mode == FusionMode::Addition ? 1.0 : 1.0 / static_cast<double>(present.count());
        std::vector<double> w(batch * 3, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            for (auto m : kAllModalities) {
                if (present.contains(m)) w[b * 3 + static_cast<std::size_t>(m)] = on;
            }
        }
        return Tensor({batch, 3}, std::move(w));
    }

    std::vector<Tensor> parts;
    for (auto m : kAllModalities) {
        parts.push_back(present.contains(m) ? pooled[static_cast<std::size_t>(m)] : Tensor::zeros({batch, config.dim}));
    }
    Tensor concat = g.concat(parts, 1);
    Tensor logits = g.linear(concat, store.get("connector.weighting.w"), store.get("connector.weighting.b"));
    std::vector<std::uint8_t> mask(batch * 3, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (auto m : kAllModalities) mask[b * 3 + static_cast<std::size_t>(m)] = present.contains(m) ? 1 : 0;
    }
    return g.softmax(logits, 1, config.temperature, mask);
}

std::vector<ModalityWeights> weights_from_tensor(const Tensor& weights, ModalitySet present) {
    std::vector<ModalityWeights> out;
    auto v = weights.values();
    for (std::size_t b = 0; b < weights.dim(0); ++b) {
        ModalityWeights mw;
        mw.present = present;
        for (std::size_t i = 0; i < 3; ++i) mw.w[i] = v[b * 3 + i];
        out.push_back(mw);
    }
    return out;
}

FusionResult fuse(Graph& g, const Tensor& weights, const std::array<Tensor, 3>& attended, ModalitySet present,
                  const ParameterStore& store, const ConnectorConfig& config) {
    if (present.empty()) throw std::invalid_argument("fuse: no modality present");
    auto wv = weights.values();
    for (std::size_t b = 0; b < weights.dim(0); ++b) {
        for (auto m : kAllModalities) {
            if (!present.contains(m) && wv[b * 3 + static_cast<std::size_t>(m)] != 0.0) {
                throw InvariantViolation("nonzero weight on absent modality " + std::string(modality_name(m)));
            }
        }
    }
    Tensor mixed;
    for (auto m : kAllModalities) {
        if (!present.contains(m)) continue;
        const Tensor& f = attended[static_cast<std::size_t>(m)];
        if (!f.defined()) throw std::invalid_argument("fuse: missing features for " + std::string(modality_name(m)));
        Tensor term = g.scale_by(f, weights, static_cast<std::size_t>(m));
        mixed = mixed.defined() ? g.add(mixed, term) : term;
    }
    Tensor s = g.layer_norm(mixed, store.get("connector.fuse_ln.g"), store.get("connector.fuse_ln.b"), config.ln_eps);
    Tensor h = g.gelu(g.linear(s, store.get("connector.mlp1.w"), store.get("connector.mlp1.b")));
    Tensor mlp = g.linear(h, store.get("connector.mlp2.w"), store.get("connector.mlp2.b"));
    Tensor skip = config.llm_dim == config.dim ? s : g.matmul(s, store.get("connector.residual"));
    Tensor z = g.layer_norm(g.add(mlp, skip), store.get("connector.out_ln.g"), store.get("connector.out_ln.b"),
                            config.ln_eps);
    return {mixed, z};
}

ConnectorOutput connector_forward(Graph& g, const ModalityBundle& bundle, const QueryEncoding& query,
                                  const ParameterStore& store, const ConnectorConfig& config) {
    bundle.validate();
    if (!query.tokens.defined() || query.tokens.rank() != 3 || query.tokens.dim(1) == 0) {
        throw DimensionError("query must be [B, L, D] with L >= 1");
    }
    ConnectorOutput out;
    std::array<Tensor, 3> pooled;
    for (auto m : kAllModalities) {
        if (!bundle.present.contains(m)) continue;
        const Tensor& x = bundle.stream(m);
        const auto& s = x.shape();
        const std::size_t batch = s[0], frames = s[1], tokens = s[2], dim = s[3];
        if (dim != config.dim) {
            throw DimensionError("modality dim " + std::to_string(dim) + " does not match connector dim " +
                                 std::to_string(config.dim));
        }
        Tensor flat = g.reshape(x, {batch, frames * tokens, dim});
        Tensor with_pe = g.add(flat, tiled_pe(batch, frames, tokens, dim));
        auto ca = cross_attend(g, with_pe, query, m, store, config);
        out.attended[static_cast<std::size_t>(m)] = ca.output;
        pooled[static_cast<std::size_t>(m)] = pool_modality(g, ca.output);
    }
    out.weights = compute_weights(g, pooled, bundle.present, store, config);
    out.weight_values = weights_from_tensor(out.weights, bundle.present);
    auto fr = fuse(g, out.weights, out.attended, bundle.present, store, config);
    out.mixed = fr.mixed;
    out.fused = fr.output;
    return out;
}

}  // namespace trisense
