// SPDX-License-Identifier: Apache-2.0
#include "trisense/verify.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "trisense/connector.hpp"
#include "trisense/decoding.hpp"
#include "trisense/metrics.hpp"

namespace trisense {

GradcheckFixture gradcheck_fixture(std::uint64_t seed, FusionMode mode) {
    SynthConfig sc;
    sc.duration = 16.0;
    sc.frames = 4;
    sc.tokens_per_frame = 2;
    sc.dim = 8;
    sc.signatures = 2;
    sc.events_per_video = 1;
    sc.min_bins = 1;
    sc.max_bins = 2;
    sc.span_grid = 6;
    sc.echo = 0.5;
    sc.noise = 0.2;
    sc.include_sc = false;

    GradcheckFixture f;
    f.corpus = generate_corpus(sc, seed, 1);
    const Vocabulary vocab = f.corpus.vocabulary();
    f.config.connector.dim = sc.dim;
    f.config.connector.llm_dim = 8;
    f.config.connector.mlp_hidden = 8;
    f.config.connector.mode = mode;
    f.config.decoder.layers = 1;
    f.config.decoder.heads = 2;
    f.config.decoder.mlp_hidden = 8;
    f.config.decoder.time_embed_dim = 4;
    f.config.decoder.max_positions = 64;
    f.config.vocab_size = vocab.size();

    TriSenseModel model(f.config, seed);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (auto& [name, t] : model.params()) {
        for (double& v : t.values()) v += jitter(rng);
    }
    f.params = model.params().clone();

    const auto& q = f.corpus.queries.at(0);
    f.input = make_input(f.corpus, q, vocab, ModalitySet::all());
    f.response = gold_response(q, vocab);
    return f;
}

std::vector<ParamCheck> model_gradcheck(std::uint64_t seed, const FiniteDiffOptions& options, FusionMode mode) {
    GradcheckFixture f = gradcheck_fixture(seed, mode);
    TriSenseModel model(f.config, f.params);
    return finite_diff_check_all(
        [&](Graph& g) { return model.response_nll(g, f.input, f.response).total; }, model.params(), options);
}

namespace {

VerifyCheck check_gradients(std::uint64_t seed) {
    VerifyCheck c{"gradients", true, "", seed};
    double worst = 0.0;
    std::string where;
    for (const auto& p : model_gradcheck(seed)) {
        if (p.max_rel_err > worst) {
            worst = p.max_rel_err;
            where = p.name;
        }
    }
    c.passed = worst < 1e-4;
    c.detail = "max rel err " + std::to_string(worst) + (where.empty() ? "" : " at " + where);
    return c;
}

VerifyCheck check_simplex(std::uint64_t seed) {
    VerifyCheck c{"simplex-weights", true, "", seed};
    ConnectorConfig cfg;
    cfg.dim = 8;
    cfg.llm_dim = 8;
    cfg.mlp_hidden = 8;
    std::mt19937_64 rng(seed);
    ParameterStore store;
    init_connector_params(store, cfg, rng);
    for (double& v : store.get("connector.weighting.w").values()) v = std::normal_distribution<double>(0.0, 2.0)(rng);
    const auto subsets = ModalitySet::nonempty_subsets();
    for (std::size_t i = 0; i < 210 && c.passed; ++i) {
        ModalityBundle bundle;
        bundle.present = subsets[i % subsets.size()];
        for (Modality m : kAllModalities) {
            if (bundle.present.contains(m)) bundle.stream(m) = Tensor::randn({2, 2, 3, cfg.dim}, rng, 3.0);
        }
        QueryEncoding q{Tensor::randn({2, 3, cfg.dim}, rng)};
        Graph g(Graph::Mode::Inference);
        const auto out = connector_forward(g, bundle, q, store, cfg);
        for (const auto& w : out.weight_values) {
            if (!w.on_masked_simplex(1e-9)) {
                c.passed = false;
                c.detail = "off-simplex weights for " + bundle.present.label() + " at draw " + std::to_string(i);
            }
        }
    }
    if (c.passed) c.detail = "210 bundles over 7 subsets";
    return c;
}

VerifyCheck check_time_tokens() {
    VerifyCheck c{"time-token-round-trip", true, "", 0};
    for (int i = 0; i <= 99999; ++i) {
        const double t = i / 10.0;
        if (detokenize_timestamp(tokenize_timestamp(t)) != t) {
            c.passed = false;
            c.detail = "round trip fails at " + std::to_string(t);
            return c;
        }
    }
    c.passed = to_string(tokenize_timestamp(123.4)) == "<0><1><2><3><.><4>";
    c.detail = c.passed ? "100000 grid values" : "123.4 spelled " + to_string(tokenize_timestamp(123.4));
    return c;
}

VerifyCheck check_decoder(std::uint64_t seed) {
    VerifyCheck c{"decoder-automaton", true, "", seed};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t n = 0; n < 1000 && c.passed; ++n) {
        DecodeLimits limits;
        limits.max_events = 1 + rng() % 4;
        limits.max_tokens = 8 + rng() % 64;
        limits.duration = std::round(std::uniform_real_distribution<double>(1.0, 9999.9)(rng) * 10.0) / 10.0;
        const std::size_t vocab = kFirstWord + 1 + rng() % 8;
        HeadSwitchDecoder dec(vocab, limits);
        std::vector<double> logits;
        while (!dec.done()) {
            logits.resize(dec.support().size());
            // Favour <sync> so time blocks are common.
            for (double& v : logits) v = normal(rng);
            if (dec.active_head() == Head::Lm) logits[kSync] += 1.0;
            dec.step(logits);
        }
        const auto& r = dec.result();
        for (std::size_t i = 0; i < r.tokens.size() && c.passed; ++i) {
            if (!is_time_token(r.tokens[i])) continue;
            // Must sit inside <sync> t*12 <sync>.
            std::size_t open = i;
            while (open > 0 && is_time_token(r.tokens[open - 1])) --open;
            const std::size_t run = [&] {
                std::size_t k = open;
                while (k < r.tokens.size() && is_time_token(r.tokens[k])) ++k;
                return k - open;
            }();
            const bool closed = open + run < r.tokens.size() && r.tokens[open + run] == kSync;
            if (open == 0 || r.tokens[open - 1] != kSync || run != kTimeBlockLength || !closed) {
                c.passed = false;
                c.detail = "stray time token in sequence " + std::to_string(n);
            }
            i = open + run;
        }
        for (const auto& e : r.events) {
            const bool on_grid = std::abs(e.span.start * 10 - std::round(e.span.start * 10)) < 1e-9 &&
                                 std::abs(e.span.end * 10 - std::round(e.span.end * 10)) < 1e-9;
            if (!(e.span.start >= 0.0 && e.span.start <= e.span.end && e.span.end <= limits.duration) || !on_grid) {
                c.passed = false;
                c.detail = "bad span in sequence " + std::to_string(n);
            }
        }
    }
    if (c.passed) c.detail = "1000 fuzzed sequences";
    return c;
}

VerifyCheck check_span_metrics(std::uint64_t seed) {
    VerifyCheck c{"span-metrics", true, "", seed};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int set = 0; set < 100 && c.passed; ++set) {
        std::vector<SpanPrediction> preds;
        double hits = 0.0, total = 0.0;
        for (int i = 0; i < 20; ++i) {
            double a = u(rng), b = u(rng), x = u(rng), y = u(rng);
            if (a > b) std::swap(a, b);
            if (x > y) std::swap(x, y);
            preds.push_back({std::to_string(i), TimeSpan{a, b}, TimeSpan{x, y}});
            const double inter = std::max(0.0, std::min(b, y) - std::max(a, x));
            const double uni = std::max(b, y) - std::min(a, x);
            const double v = uni > 0 ? inter / uni : 0.0;
            total += v;
            hits += v >= 0.5;
        }
        if (std::abs(recall_at_iou(preds, 0.5) - hits / 20.0) > 1e-12 || std::abs(mean_iou(preds) - total / 20.0) > 1e-12) {
            c.passed = false;
            c.detail = "mismatch on set " + std::to_string(set);
        }
    }
    if (c.passed) c.detail = "100 random span sets";
    return c;
}

VerifyCheck check_softmax() {
    VerifyCheck c{"softmax-stability", true, "", 0};
    Graph g(Graph::Mode::Inference);
    const Tensor x({1, 3}, {1000.0, 1000.0, -1000.0});
    const Tensor out = g.softmax(x, 1);
    const auto y = out.values();
    c.passed = std::isfinite(y[0]) && std::abs(y[0] - 0.5) < 1e-15 && std::abs(y[1] - 0.5) < 1e-15 && y[2] == 0.0;
    std::ostringstream os;
    os << "softmax(1000, 1000, -1000) = (" << y[0] << ", " << y[1] << ", " << y[2] << ")";
    c.detail = os.str();
    return c;
}

VerifyCheck check_synth_oracle(std::uint64_t seed) {
    VerifyCheck c{"synthetic-oracle-gate", true, "", seed};
    SynthConfig sc = bench_synth_config();
    sc.noise = 0.0;
    const auto corpus = generate_corpus(sc, seed, 20);
    const auto again = generate_corpus(sc, seed, 20);
    std::vector<SpanPrediction> preds;
    for (const auto& q : corpus.queries) {
        preds.push_back({q.id, oracle_retrieve(corpus, corpus.videos.at(q.video), q), q.gold});
    }
    const double r = recall_at_iou(preds, 1.0);
    bool same = true;
    for (std::size_t v = 0; v < corpus.videos.size(); ++v) {
        for (std::size_t m = 0; m < 3; ++m) {
            const auto a = corpus.videos[v].tracks[m].values();
            const auto b = again.videos[v].tracks[m].values();
            same = same && std::equal(a.begin(), a.end(), b.begin(), b.end());
        }
    }
    c.passed = r == 1.0 && same;
    c.detail = "oracle IoU=1 on " + std::to_string(r * 100.0) + "% of " + std::to_string(preds.size()) +
               " queries" + (same ? "" : ", corpus not reproducible");
    return c;
}

}  // namespace

std::vector<VerifyCheck> run_verify(std::uint64_t seed) {
    return {check_gradients(seed),    check_simplex(seed), check_time_tokens(),     check_decoder(seed),
            check_span_metrics(seed), check_softmax(),     check_synth_oracle(seed)};
}

}  // namespace trisense
