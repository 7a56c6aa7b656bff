// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit status is nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trisense/bench.hpp"
#include "trisense/connector.hpp"
#include "trisense/decoding.hpp"
#include "trisense/metrics.hpp"
#include "trisense/pipeline.hpp"
#include "trisense/temporal.hpp"
#include "trisense/training.hpp"
#include "trisense/verify.hpp"

using namespace trisense;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// --- 1: gradients -----------------------------------------------------------

Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    std::size_t coords = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        FiniteDiffOptions opt;
        opt.h = 1e-5;
        for (const auto& c : model_gradcheck(seed, opt)) {
            coords += c.coords;
            if (!(c.max_rel_err <= worst)) {
                worst = c.max_rel_err;
                worst_name = c.name;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 120.0,
            fmt("max rel err %.2e over %.0f coordinates, 10 seeds, %.1f s", worst, static_cast<double>(coords), secs) +
                " (worst: " + worst_name + ")"};
}

// --- 2: simplex -------------------------------------------------------------

Outcome simplex_invariant() {
    std::mt19937_64 rng(2024);
    ConnectorConfig cfg;
    cfg.dim = 8;
    cfg.llm_dim = 12;
    cfg.mlp_hidden = 10;
    const auto subsets = ModalitySet::nonempty_subsets();
    std::uniform_real_distribution<double> scale(0.01, 30.0);
    std::size_t bundles = 0, rows = 0, bad = 0;
    std::set<std::uint8_t> seen;
    for (int i = 0; i < 1000; ++i) {
        ParameterStore store;
        init_connector_params(store, cfg, rng);
        const double s = scale(rng);
        for (auto& [name, t] : store) {
            std::normal_distribution<double> n(0.0, name.find("weighting") != std::string::npos ? s : 0.3);
            for (double& v : t.values()) v += n(rng);
        }
        cfg.temperature = std::uniform_real_distribution<double>(0.05, 5.0)(rng);
        const ModalitySet present = subsets[rng() % 7];
        seen.insert(present.bits());
        const std::size_t batch = 1 + rng() % 3, frames = 1 + rng() % 4, tokens = 1 + rng() % 3;
        ModalityBundle b;
        b.present = present;
        for (Modality m : kAllModalities) {
            if (present.contains(m)) b.stream(m) = Tensor::randn({batch, frames, tokens, cfg.dim}, rng, scale(rng));
        }
        Graph g(Graph::Mode::Inference);
        const auto out =
            connector_forward(g, b, {Tensor::randn({batch, 1 + rng() % 5, cfg.dim}, rng, scale(rng))}, store, cfg);
        ++bundles;
        for (const auto& w : out.weight_values) {
            ++rows;
            double sum = 0.0;
            bool ok = true;
            for (Modality m : kAllModalities) {
                const double v = w[m];
                if (present.contains(m)) {
                    ok = ok && v >= 0.0 && std::isfinite(v);
                    sum += v;
                } else {
                    ok = ok && v == 0.0;
                }
            }
            ok = ok && std::abs(sum - 1.0) <= 1e-9;
            bad += !ok;
        }
    }
    return {bad == 0 && seen.size() == 7,
            std::to_string(bundles) + " bundles, " + std::to_string(rows) + " weight rows, " +
                std::to_string(seen.size()) + " subsets, " + std::to_string(bad) + " violations"};
}

// --- 3: time tokens ---------------------------------------------------------

Outcome time_round_trip() {
    const auto t0 = Clock::now();
    std::size_t bad = 0;
    for (int i = 0; i <= 99999; ++i) {
        const double t = i / 10.0;
        const auto seq = tokenize_timestamp(t);
        // Digits read back independently of the library's decoder.
        const std::string text = to_string(seq);
        int value = 0;
        for (char ch : text) {
            if (ch >= '0' && ch <= '9') value = value * 10 + (ch - '0');
        }
        if (value != i || detokenize_timestamp(seq) != t || parse_time_tokens(text) != seq) ++bad;
    }
    const bool example = to_string(tokenize_timestamp(123.4)) == "<0><1><2><3><.><4>" &&
                         detokenize_timestamp(parse_time_tokens("<0><1><2><3><.><4>")) == 123.4;
    const double secs = seconds_since(t0);
    return {bad == 0 && example && secs < 1.0,
            std::to_string(bad) + " mismatches over 100000 values, 123.4 example " + (example ? "ok" : "wrong") +
                fmt(", %.3f s", secs)};
}

// --- 4: decoder -------------------------------------------------------------

Outcome decoder_automaton() {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::size_t bad = 0, spans = 0;
    for (int n = 0; n < 10000; ++n) {
        DecodeLimits limits;
        limits.max_events = 1 + rng() % 4;
        limits.max_tokens = 4 + rng() % 80;
        limits.duration = std::round(std::uniform_real_distribution<double>(0.1, 9999.9)(rng) * 10.0) / 10.0;
        const std::size_t vocab = kFirstWord + 1 + rng() % 8;
        HeadSwitchDecoder dec(vocab, limits);
        const double bias = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
        while (!dec.done()) {
            std::vector<double> logits(dec.support().size());
            for (double& v : logits) v = normal(rng);
            if (dec.active_head() == Head::Lm && logits.size() > kSync) logits[kSync] += bias;
            if (rng() % 9 == 0) logits[rng() % logits.size()] = std::nan("");
            dec.step(logits);
        }
        const auto& r = dec.result();
        bool ok = true;
        std::size_t i = 0;
        while (ok && i < r.tokens.size()) {
            if (r.tokens[i] == kSync) {
                ok = i + kTimeBlockLength + 1 < r.tokens.size() && r.tokens[i + kTimeBlockLength + 1] == kSync;
                for (std::size_t k = 1; ok && k <= kTimeBlockLength; ++k) ok = is_time_token(r.tokens[i + k]);
                i += kTimeBlockLength + 2;
                continue;
            }
            ok = !is_time_token(r.tokens[i]);
            ++i;
        }
        for (const auto& e : r.events) {
            ++spans;
            auto on_grid = [](double t) { return std::abs(t * 10.0 - std::round(t * 10.0)) < 1e-6; };
            ok = ok && e.span.start >= 0.0 && e.span.start <= e.span.end && on_grid(e.span.start) &&
                 on_grid(e.span.end);
        }
        bad += !ok;
    }
    return {bad == 0, "10000 sequences, " + std::to_string(spans) + " spans, " + std::to_string(bad) + " malformed"};
}

// --- 5: metrics -------------------------------------------------------------

double cell_iou(int a0, int a1, int b0, int b1) {
    int inter = 0, uni = 0;
    for (int c = std::min(a0, b0); c < std::max(a1, b1); ++c) {
        const bool in_a = c >= a0 && c < a1, in_b = c >= b0 && c < b1;
        inter += in_a && in_b;
        uni += in_a || in_b;
    }
    if (uni == 0) return a0 == b0 && a1 == b1 ? 1.0 : 0.0;
    return static_cast<double>(inter) / uni;
}

Outcome metric_oracles() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int set = 0; set < 1000; ++set) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<SpanPrediction> preds;
        std::vector<double> oracle;
        for (std::size_t i = 0; i < n; ++i) {
            int a0 = rng() % 1000, a1 = rng() % 1000, b0 = rng() % 1000, b1 = rng() % 1000;
            if (a0 > a1) std::swap(a0, a1);
            if (b0 > b1) std::swap(b0, b1);
            if (rng() % 8 == 0) {
                b0 = a0;
                b1 = a1 + static_cast<int>(rng() % 3);
            }
            SpanPrediction p{std::to_string(i), TimeSpan{a0 / 10.0, a1 / 10.0}, {b0 / 10.0, b1 / 10.0}};
            double o = cell_iou(a0, a1, b0, b1);
            if (rng() % 25 == 0) {
                p.pred.reset();
                o = 0.0;
            }
            preds.push_back(p);
            oracle.push_back(o);
            if (p.pred) worst = std::max(worst, std::abs(iou(*p.pred, p.gold) - o));
        }
        for (double th : {0.3, 0.5, 0.7}) {
            double hits = 0;
            for (double v : oracle) hits += v >= th;
            worst = std::max(worst, std::abs(recall_at_iou(preds, th) - hits / n));
        }
        double sum = 0;
        for (double v : oracle) sum += v;
        worst = std::max(worst, std::abs(mean_iou(preds) - sum / n));
    }

    auto w = tokenize_caption;
    // Hand-computed: precisions 5/6, 3/5, 1/4 and a floored 0/3, no brevity penalty.
    const double bleu_a = std::pow(5.0 / 6 * 3.0 / 5 * 1.0 / 4 * (1e-9 / 3), 0.25);
    const double bleu_b = std::pow(0.2, 0.25);  // 4/5, 3/4, 2/3, 1/2 -> product 1/5
    const double bleu_c = std::exp(1.0 - 6.0 / 4.0);
    double fixture_err = 0.0;
    fixture_err = std::max(fixture_err, std::abs(bleu4(w("the cat sat on the mat"), {w("the cat is on the mat")}) - bleu_a));
    fixture_err = std::max(fixture_err,
                           std::abs(bleu4(w("the quick brown fox jumps"), {w("the quick brown fox leaps")}) - bleu_b));
    fixture_err = std::max(fixture_err, std::abs(bleu4(w("a b c d"), {w("a b c d e f")}) - bleu_c));
    fixture_err = std::max(fixture_err, std::abs(bleu4(w("x y z w"), {w("x y z w")}) - 1.0));
    // LCS 2 of 2 and 3: P = 1, R = 2/3, F = (1 + 1.2) P R / (R + 1.2 P) = 11/14.
    fixture_err = std::max(fixture_err, std::abs(rouge_l(w("a c"), {w("a b c")}) - 11.0 / 14.0));
    // LCS 3 ("police killed gunman") of 4 and 4: P = R = 3/4.
    fixture_err = std::max(fixture_err, std::abs(rouge_l(w("police killed the gunman"), {w("police kill the gunman")}) -
                                                 0.75));

    const std::vector<Tokens> preds{w("a dog runs"), w("a cat sleeps on a mat"), w("birds sing loudly")};
    const std::vector<std::vector<Tokens>> refs{{w("a dog runs fast")},
                                                {w("the cat sleeps on the mat"), w("a cat is asleep")},
                                                {w("birds are singing")}};
    const auto base = cider(preds, refs);
    auto p2 = preds;
    auto r2 = refs;
    for (int k = 0; k < 2; ++k) {
        p2.insert(p2.end(), preds.begin(), preds.end());
        r2.insert(r2.end(), refs.begin(), refs.end());
    }
    const auto tripled = cider(p2, r2);
    double cider_err = std::abs(tripled.mean - base.mean);
    for (std::size_t i = 0; i < p2.size(); ++i)
        cider_err = std::max(cider_err, std::abs(tripled.scores[i] - base.scores[i % preds.size()]));

    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && fixture_err <= 1e-12 && cider_err <= 1e-12 && secs < 30.0,
            fmt("span max err %.1e, BLEU/ROUGE fixture err %.1e, CIDEr duplication drift %.1e, %.2f s", worst,
                fixture_err, cider_err, secs)};
}

// --- 6, 7, 8: synthetic benchmark -------------------------------------------

struct DropoutStats {
    std::size_t compared = 0;
    std::size_t changed = 0;
    std::vector<double> full_r05, dropped_r05;
};

void measure_dropout(const TriSenseModel& model, const BenchData& data, DropoutStats& out) {
    auto spans_with = [&](const PresentFn& present) {
        return evaluate(model, data.test, data.vocab, Task::MR, present);
    };
    auto r05 = [](const std::vector<Prediction>& preds) {
        std::vector<SpanPrediction> s;
        for (const auto& p : preds) s.push_back({p.sample_id, p.pred_span, p.gold_span});
        return recall_at_iou(s, 0.5);
    };
    const auto full = spans_with([](const SyntheticQuery&) { return ModalitySet::all(); });
    for (int shift : {1, 2}) {
        const auto dropped = spans_with([shift](const SyntheticQuery& q) {
            const auto gone = static_cast<Modality>((static_cast<int>(q.informative) + shift) % 3);
            return ModalitySet::all().without(gone);
        });
        for (std::size_t i = 0; i < full.size(); ++i) {
            ++out.compared;
            out.changed += !(full[i].pred_span == dropped[i].pred_span);
        }
    }
    const auto blind = spans_with([](const SyntheticQuery& q) {
        return ModalitySet::all().without(q.informative);
    });
    out.full_r05.push_back(r05(full));
    out.dropped_r05.push_back(r05(blind));
}

struct BenchOutcomes {
    Outcome ordering, frames, dropout;
};

std::string pct(const std::vector<double>& v) {
    return fmt("%.1f +- %.1f", 100.0 * mean_of(v), 100.0 * stddev_of(v));
}

BenchOutcomes synthetic_benchmark(bool want7) {
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    BenchOutcomes out;
    auto progress = [](const std::string& line) { std::cout << "  " << line << std::endl; };

    BenchConfig cfg;
    DropoutStats drop;
    const auto t0 = Clock::now();
    const auto table = run_ablation(
        cfg, seeds, {FusionMode::Adaptive, FusionMode::FixedWeights, FusionMode::Addition},
        [&](std::uint64_t, FusionMode mode, const TriSenseModel& model, const BenchData& data) {
            if (mode == FusionMode::Adaptive) measure_dropout(model, data, drop);
        },
        progress);
    const double secs = seconds_since(t0);
    std::cout << render_ablation(table);
    const double a = mean_of(table.rows[0].r05), f = mean_of(table.rows[1].r05), d = mean_of(table.rows[2].r05);
    out.ordering = {a >= f && f >= d && a - d >= 0.05 && secs < 1800.0,
                    "R@0.5 adaptive " + pct(table.rows[0].r05) + ", fixed " + pct(table.rows[1].r05) + ", addition " +
                        pct(table.rows[2].r05) + fmt(", %.0f s including dropout probes", secs)};

    const double changed = static_cast<double>(drop.changed) / static_cast<double>(std::max<std::size_t>(drop.compared, 1));
    const double loss = mean_of(drop.full_r05) - mean_of(drop.dropped_r05);
    out.dropout = {changed <= 0.05 && loss >= 0.30,
                   fmt("uninformative removal changed %.1f%% of %.0f spans; informative removal R@0.5 %.1f -> %.1f", 100.0 * changed,
                       static_cast<double>(drop.compared), 100.0 * mean_of(drop.full_r05),
                       100.0 * mean_of(drop.dropped_r05))};

    if (want7) {
        std::map<std::size_t, std::vector<double>> by_frames;
        by_frames[32] = table.rows[0].r05;
        for (std::size_t frames : {16, 64}) {
            BenchConfig c = cfg;
            c.synth = bench_synth_config(frames);
            by_frames[frames] = run_ablation(c, seeds, {FusionMode::Adaptive}, {}, progress).rows[0].r05;
        }
        bool ok = true;
        std::string detail;
        std::optional<std::size_t> prev;
        for (const auto& [frames, r] : by_frames) {
            detail += (detail.empty() ? "" : ", ") + ("F=" + std::to_string(frames) + " " + pct(r));
            if (prev) {
                const auto& p = by_frames[*prev];
                ok = ok && mean_of(r) >= mean_of(p) - std::max(stddev_of(p), stddev_of(r));
            }
            prev = frames;
        }
        out.frames = {ok, "adaptive R@0.5 " + detail};
    }
    return out;
}

// --- 9: pipeline ------------------------------------------------------------

std::uint64_t mix(std::uint64_t h) {
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

Outcome pipeline_gate() {
    std::vector<ModalityCaptions> clips;
    for (int i = 0; i < 10000; ++i) {
        ModalityCaptions c;
        c.clip_id = i == 0 ? "edge-2.9" : i == 1 ? "edge-3.0" : "clip" + std::to_string(i);
        c.visual = "someone walks to the window";
        if (i % 4 != 1) c.audio = "rain taps on glass " + std::to_string(i % 7);
        if (i % 3 != 2) c.speech = "it is raining again";
        c.span = {0.5, 3.0};
        c.duration = 12.0;
        clips.push_back(c);
    }
    // Judge score for a round in integer tenths.
    auto tenths = [](const std::string& clip, std::size_t round) -> int {
        if (clip == "edge-2.9") return 29;
        if (clip == "edge-3.0") return 30;
        std::uint64_t h = 1469598103934665603ull;
        for (char ch : clip) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
        return static_cast<int>(mix(h + round) % 51);
    };
    auto reply = [&](const std::string& clip, std::size_t round) {
        const int t = tenths(clip, round);
        return "Score: " + std::to_string(t / 10) + "." + std::to_string(t % 10) + " / 5";
    };
    PipelineConfig cfg;
    cfg.client.backoff_seconds = 0.0;
    cfg.client.max_retries = 8;
    cfg.client.concurrency = 4;

    auto run = [&](double failure_rate) {
        StubChatClient stub(reply, failure_rate, 99);
        const auto result = run_pipeline(clips, stub, cfg);
        std::ostringstream os;
        write_pipeline_result(result, os);
        return std::make_pair(result, os.str());
    };
    const auto [first, first_text] = run(0.0);
    const auto second_text = run(0.0).second;
    const auto faulty_text = run(0.05).second;

    // Combos supported by a clip differ per clip, but the judge round index
    // restarts per candidate, so the exact mean is sum of tenths / rounds.
    std::set<std::string> expect;
    std::size_t items = 0, errors = 0;
    for (const auto& c : clips) {
        for (Combo combo : cfg.combos) {
            if (!c.supports(combo)) continue;
            ++items;
            int sum = 0;
            for (std::size_t r = 0; r < cfg.judge_rounds; ++r) sum += tenths(c.clip_id, r);
            if (sum >= 30 * static_cast<int>(cfg.judge_rounds)) expect.insert(c.clip_id + "/" + std::string(combo_name(combo)));
        }
    }
    for (const auto& item : first.items) errors += !item.error.empty();
    const std::set<std::string> got(first.filter.retained.begin(), first.filter.retained.end());
    const bool edges = got.count("edge-3.0/VS") && !got.count("edge-2.9/VS");
    const bool ok = errors == 0 && first.items.size() == items && got == expect && edges && first_text == second_text &&
                    first_text == faulty_text;
    return {ok, std::to_string(clips.size()) + " records, " + std::to_string(items) + " items, " +
                    std::to_string(got.size()) + " retained (oracle " + std::to_string(expect.size()) + "), boundary " +
                    (edges ? "2.9 rejected / 3.0 kept" : "WRONG") + ", rerun " +
                    (first_text == second_text ? "identical" : "differs") + ", 5% faults " +
                    (first_text == faulty_text ? "identical" : "differs")};
}

// --- 10: overfit ------------------------------------------------------------

Outcome overfit_oracle() {
    SynthConfig sc;
    sc.frames = 8;
    sc.tokens_per_frame = 4;
    sc.dim = 16;
    sc.signatures = 4;
    sc.events_per_video = 2;
    sc.span_grid = 16;
    sc.noise = 0.3;
    sc.include_sc = false;
    const auto corpus = generate_corpus(sc, 10, 1);
    const auto vocab = corpus.vocabulary();
    const auto& q = corpus.queries.front();
    const auto input = make_input(corpus, q, vocab, ModalitySet::all());
    const auto response = gold_response(q, vocab);

    TriSenseModel model(bench_model_config(corpus, vocab), 10);
    StageConfig st;
    st.steps = 200;
    st.batch = 1;
    st.lr = 0.003;
    st.optimizer = OptimizerKind::Adam;
    st.seed = 10;
    std::optional<std::size_t> reached;
    double last = 0.0;
    train(model, {{input, response}}, st, [&](const StepLog& log) {
        last = log.nats_per_token;
        if (!reached && log.nats_per_token < 0.1) reached = log.step;
    });
    Graph g(Graph::Mode::Inference);
    const auto final_loss = model.response_nll(g, input, response);
    const double final_nats = final_loss.total.item() / static_cast<double>(final_loss.scored_tokens);

    DecodeLimits limits;
    limits.duration = corpus.videos.front().duration;
    const auto gen = model.generate(input, limits);
    const bool exact = gen.tokens == response && gen.events.size() == 1 && gen.events[0].span == q.gold;
    return {reached.has_value() && final_nats < 0.1 && exact,
            (reached ? "below 0.1 nats/token at step " + std::to_string(*reached + 1) : std::string("never below 0.1")) +
                fmt(", final %.4f nats/token, ", final_nats) + "greedy output " +
                (exact ? "matches " : "differs from ") + "the fixture (" + vocab.decode(gen.tokens) + ")"};
}

// --- 11: freezing -----------------------------------------------------------

Outcome stage_freezing() {
    auto run = [](int stage, std::uint64_t seed) {
        const auto f = gradcheck_fixture(seed);
        TriSenseModel model(f.config, f.params.clone());
        StageConfig st;
        st.stage = stage;
        st.steps = 25;
        st.batch = 2;
        st.lr = 0.02;
        st.seed = seed;
        train(model, {{f.input, f.response}}, st);
        return std::make_pair(f.params.clone(), model.params().clone());
    };
    auto identical = [](const Tensor& a, const Tensor& b) {
        const auto x = a.values();
        const auto y = b.values();
        return std::equal(x.begin(), x.end(), y.begin(), y.end(),
                          [](double p, double q) { return std::memcmp(&p, &q, sizeof p) == 0; });
    };
    std::size_t violations = 0, frozen3 = 0, frozen1 = 0, moved = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto [before3, after3] = run(3, seed);
        for (const auto& name : before3.names()) {
            const bool connector = ParameterStore::group_of(name) == "connector";
            if (connector) {
                ++frozen3;
                violations += !identical(before3.get(name), after3.get(name));
            } else {
                moved += !identical(before3.get(name), after3.get(name));
            }
        }
        const auto [before1, after1] = run(1, seed);
        for (const auto& name : before1.names()) {
            const auto group = ParameterStore::group_of(name);
            if (group != "connector" && group != "lm_head") {
                ++frozen1;
                violations += !identical(before1.get(name), after1.get(name));
            } else {
                moved += !identical(before1.get(name), after1.get(name));
            }
        }
    }
    return {violations == 0 && frozen3 > 0 && frozen1 > 0 && moved > 0,
            std::to_string(frozen3) + " stage-3 connector tensors and " + std::to_string(frozen1) +
                " stage-1 frozen tensors checked over 3 seeds, " + std::to_string(violations) + " changed; " +
                std::to_string(moved) + " trainable tensors moved"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
    auto want = [&](int k) { return only.empty() || only.count(k) != 0; };

    const std::map<int, std::string> names{{1, "gradient fidelity"},
                                           {2, "simplex invariant"},
                                           {3, "time-token round trip"},
                                           {4, "head-switching automaton"},
                                           {5, "metric oracles"},
                                           {6, "synthetic ablation ordering"},
                                           {7, "frame-count monotonicity"},
                                           {8, "modality-dropout robustness"},
                                           {9, "pipeline gate"},
                                           {10, "overfit oracle"},
                                           {11, "stage-freezing contract"}};
    std::map<int, Outcome> results;
    auto guarded = [](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("threw: ") + e.what()};
        }
    };
    const std::map<int, std::function<Outcome()>> fast{{1, gradient_fidelity}, {2, simplex_invariant},
                                                       {3, time_round_trip},   {4, decoder_automaton},
                                                       {5, metric_oracles},    {9, pipeline_gate},
                                                       {10, overfit_oracle},   {11, stage_freezing}};
    for (const auto& [k, fn] : fast) {
        if (!want(k)) continue;
        results[k] = guarded(fn);
        std::cout << (results[k].pass ? "PASS" : "FAIL") << " [" << k << "] " << names.at(k) << ": "
                  << results[k].detail << std::endl;
    }
    if (want(6) || want(7) || want(8)) {
        BenchOutcomes b;
        try {
            b = synthetic_benchmark(want(7));
        } catch (const std::exception& e) {
            const Outcome o{false, std::string("threw: ") + e.what()};
            b = {o, o, o};
        }
        results[6] = b.ordering;
        results[7] = b.frames;
        results[8] = b.dropout;
        for (int k : {6, 7, 8}) {
            if (!want(k)) results.erase(k);
        }
    }

    std::cout << "\nAcceptance summary\n";
    int failed = 0;
    for (const auto& [k, o] : results) {
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k << "] " << names.at(k) << ": " << o.detail << "\n";
        failed += !o.pass;
    }
    std::cout << results.size() - failed << "/" << results.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
