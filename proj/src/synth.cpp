// SPDX-License-Identifier: Apache-2.0
#include "trisense/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace trisense {

void SynthConfig::validate() const {
    if (!(duration > 0.0) || duration > kMaxTimestamp) throw ParameterError("duration must lie in (0, 9999.9]");
    if (frames == 0 || tokens_per_frame == 0) throw ParameterError("frames and tokens per frame must be positive");
    if (dim == 0 || dim % 4 != 0) throw ParameterError("feature dim must be a positive multiple of 4");
    if (signatures == 0 || signatures > dim) throw ParameterError("need 1..dim orthonormal signatures");
    if (events_per_video == 0 || events_per_video > signatures) {
        throw ParameterError("events per video must lie in [1, signatures]");
    }
    if (min_bins == 0 || max_bins < min_bins) throw ParameterError("bad span length range");
    if (events_per_video * max_bins > grid_bins()) {
        throw ParameterError(std::to_string(events_per_video) + " events of up to " + std::to_string(max_bins) +
                             " bins do not fit in " + std::to_string(grid_bins()) + " bins");
    }
    if (!(amplitude > 0.0) || noise < 0.0) throw ParameterError("amplitude must be positive and noise nonnegative");
    if (!(amplitude_spread >= 1.0)) throw ParameterError("amplitude spread must be at least 1");
    if (echo < 0.0 || echo > 1.0) throw ParameterError("echo must lie in [0, 1]");
    // An event of length L starting at bin L - 1 leaves room for an echo only
    // if 3L - 1 bins exist.
    if (echo > 0.0 && 3 * max_bins - 1 > grid_bins()) throw ParameterError("no room to place echoes away from events");
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
    return {{"duration", c.duration},   {"frames", c.frames},         {"tokens_per_frame", c.tokens_per_frame},
            {"dim", c.dim},             {"signatures", c.signatures}, {"events_per_video", c.events_per_video},
            {"span_grid", c.span_grid}, {"min_bins", c.min_bins},     {"max_bins", c.max_bins},
            {"amplitude", c.amplitude}, {"amplitude_spread", c.amplitude_spread},
            {"echo", c.echo},           {"home_modalities", c.home_modalities},
            {"noise", c.noise},         {"include_sc", c.include_sc}};
}

SynthConfig synth_config_from_json(const nlohmann::json& doc) {
    SynthConfig c;
    c.duration = doc.value("duration", c.duration);
    c.frames = doc.value("frames", c.frames);
    c.tokens_per_frame = doc.value("tokens_per_frame", c.tokens_per_frame);
    c.dim = doc.value("dim", c.dim);
    c.signatures = doc.value("signatures", c.signatures);
    c.events_per_video = doc.value("events_per_video", c.events_per_video);
    c.span_grid = doc.value("span_grid", c.span_grid);
    c.min_bins = doc.value("min_bins", c.min_bins);
    c.max_bins = doc.value("max_bins", c.max_bins);
    c.amplitude = doc.value("amplitude", c.amplitude);
    c.amplitude_spread = doc.value("amplitude_spread", c.amplitude_spread);
    c.echo = doc.value("echo", c.echo);
    c.home_modalities = doc.value("home_modalities", c.home_modalities);
    c.noise = doc.value("noise", c.noise);
    c.include_sc = doc.value("include_sc", c.include_sc);
    c.validate();
    return c;
}

namespace {

const std::vector<std::vector<std::string>>& caption_pool() {
    static const std::vector<std::vector<std::string>> pool{
        {"dog", "barks"},    {"door", "slams"},    {"light", "flashes"}, {"car", "honks"},
        {"man", "speaks"},   {"bell", "rings"},    {"glass", "breaks"},  {"crowd", "cheers"},
        {"baby", "cries"},   {"phone", "buzzes"},  {"bird", "sings"},    {"engine", "starts"},
        {"woman", "laughs"}, {"drum", "beats"},    {"water", "splashes"}, {"ball", "bounces"}};
    return pool;
}

// Gram-Schmidt on Gaussian draws.
Tensor orthonormal_rows(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    while (rows.size() < n) {
        std::vector<double> v(dim);
        for (auto& x : v) x = normal(rng);
        for (const auto& r : rows) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * r[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * r[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (auto& x : v) x /= norm;
        rows.push_back(std::move(v));
    }
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({n, dim}, std::move(flat));
}

double grid_time(double seconds) { return std::round(seconds * 10.0) / 10.0; }

void plant(std::vector<double>& data, const SynthConfig& c, const std::vector<double>& times, TimeSpan span,
           const double* signature, double amplitude) {
    const std::size_t per_frame = c.tokens_per_frame * c.dim;
    for (std::size_t f = 0; f < c.frames; ++f) {
        if (times[f] < span.start || times[f] > span.end) continue;
        for (std::size_t tok = 0; tok < c.tokens_per_frame; ++tok) {
            double* row = data.data() + f * per_frame + tok * c.dim;
            for (std::size_t d = 0; d < c.dim; ++d) row[d] += amplitude * signature[d];
        }
    }
}

struct Run {
    double score = -INFINITY;
    std::size_t first = 0, last = 0;
};

Run best_run(const SynthCorpus& corpus, const SyntheticVideo& video, std::size_t signature, Modality modality) {
    const auto& c = corpus.config;
    const auto track = video.tracks[static_cast<std::size_t>(modality)].values();
    const double* sig = corpus.signatures.values().data() + signature * c.dim;
    std::vector<double> score(c.frames, 0.0);
    for (std::size_t f = 0; f < c.frames; ++f) {
        double total = 0.0;
        for (std::size_t tok = 0; tok < c.tokens_per_frame; ++tok) {
            const double* row = track.data() + (f * c.tokens_per_frame + tok) * c.dim;
            for (std::size_t d = 0; d < c.dim; ++d) total += row[d] * sig[d];
        }
        score[f] = total / static_cast<double>(c.tokens_per_frame);
    }
    const double half = *std::max_element(score.begin(), score.end()) / 2.0;
    // Exhaustive search over all windows; ties keep the earliest, shortest.
    Run best;
    for (std::size_t i = 0; i < c.frames; ++i) {
        double run = 0.0;
        for (std::size_t j = i; j < c.frames; ++j) {
            run += score[j] - half;
            if (run > best.score) best = {run, i, j};
        }
    }
    return best;
}

TimeSpan run_span(const SynthConfig& c, const Run& r) {
    const double step = c.duration / static_cast<double>(c.frames);
    return {grid_time(static_cast<double>(r.first) * step), grid_time(static_cast<double>(r.last + 1) * step)};
}

}  // namespace

Modality home_modality(std::size_t signature) { return kAllModalities[signature % 3]; }

Vocabulary SynthCorpus::vocabulary() const {
    Vocabulary v;
    v.add("find");
    v.add("describe");
    for (const auto& words : signature_words) {
        for (const auto& w : words) v.add(w);
    }
    return v;
}

SynthCorpus generate_corpus(const SynthConfig& config, std::uint64_t seed, std::size_t n_videos) {
    config.validate();
    if (n_videos == 0) throw ParameterError("corpus needs at least one video");
    SynthCorpus corpus;
    corpus.config = config;
    corpus.seed = seed;
    std::mt19937_64 rng(seed);
    corpus.signatures = orthonormal_rows(config.signatures, config.dim, rng);
    for (std::size_t s = 0; s < config.signatures; ++s) {
        if (s < caption_pool().size()) {
            corpus.signature_words.push_back(caption_pool()[s]);
        } else {
            corpus.signature_words.push_back({"thing" + std::to_string(s), "happens"});
        }
    }

    const std::size_t bins = config.grid_bins();
    const double bin = config.duration / static_cast<double>(bins);
    const auto plan = sample_frames(config.duration, config.frames);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto sig = corpus.signatures.values();
    std::size_t subset_cursor = 0;

    for (std::size_t vi = 0; vi < n_videos; ++vi) {
        SyntheticVideo video;
        video.id = "synth-" + std::to_string(seed) + "-" + std::to_string(vi);
        video.duration = config.duration;
        video.frame_times = plan.timestamps;

        std::vector<std::size_t> sig_order(config.signatures);
        for (std::size_t i = 0; i < sig_order.size(); ++i) sig_order[i] = i;
        std::shuffle(sig_order.begin(), sig_order.end(), rng);

        std::vector<std::pair<std::size_t, std::size_t>> taken;  // [first, last] bins
        for (std::size_t k = 0; k < config.events_per_video; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
                const std::size_t len = config.min_bins + rng() % (config.max_bins - config.min_bins + 1);
                const std::size_t first = rng() % (bins - len + 1);
                const std::size_t last = first + len - 1;
                const bool clash = std::any_of(taken.begin(), taken.end(), [&](const auto& t) {
                    return !(last < t.first || first > t.second);
                });
                if (clash) continue;
                taken.emplace_back(first, last);
                PlantedEvent e;
                e.span = {grid_time(static_cast<double>(first) * bin), grid_time(static_cast<double>(last + 1) * bin)};
                e.modality = config.home_modalities ? home_modality(sig_order[k]) : kAllModalities[rng() % 3];
                e.amplitude = config.amplitude * std::exp(std::log(config.amplitude_spread) * (2.0 * unit(rng) - 1.0));
                e.signature = sig_order[k];
                video.events.push_back(e);
                placed = true;
            }
            if (!placed) throw ParameterError("could not place " + std::to_string(config.events_per_video) + " events");
        }
        std::sort(video.events.begin(), video.events.end(),
                  [](const PlantedEvent& a, const PlantedEvent& b) { return a.span.start < b.span.start; });
        if (config.echo > 0.0) {
            for (auto& e : video.events) {
                const auto first = static_cast<std::size_t>(std::llround(e.span.start / bin));
                const auto len = static_cast<std::size_t>(std::llround(e.span.end / bin)) - first;
                for (auto m : kAllModalities) {
                    if (m == e.modality) continue;
                    std::vector<std::size_t> free;
                    for (std::size_t at = 0; at + len <= bins; ++at) {
                        if (at + len <= first || at >= first + len) free.push_back(at);
                    }
                    const std::size_t at = free[rng() % free.size()];
                    e.echoes.emplace_back(m, TimeSpan{grid_time(static_cast<double>(at) * bin),
                                                      grid_time(static_cast<double>(at + len) * bin)});
                }
            }
        }

        const std::size_t per_frame = config.tokens_per_frame * config.dim;
        for (auto m : kAllModalities) {
            std::vector<double> data(config.frames * per_frame, 0.0);
            if (config.noise > 0.0) {
                for (auto& x : data) x = config.noise * normal(rng);
            }
            for (const auto& e : video.events) {
                const double* es = sig.data() + e.signature * config.dim;
                if (e.modality == m) plant(data, config, plan.timestamps, e.span, es, e.amplitude);
                for (const auto& [em, span] : e.echoes) {
                    if (em == m) plant(data, config, plan.timestamps, span, es, config.echo * e.amplitude);
                }
            }
            video.tracks[static_cast<std::size_t>(m)] =
                Tensor({config.frames, config.tokens_per_frame, config.dim}, std::move(data));
        }

        for (std::size_t k = 0; k < video.events.size(); ++k) {
            const auto& e = video.events[k];
            std::vector<ModalitySet> options;
            for (auto s : ModalitySet::nonempty_subsets()) {
                if (s.contains(e.modality)) options.push_back(s);
            }
            for (Task task : {Task::MR, Task::SC}) {
                if (task == Task::SC && !config.include_sc) continue;
                SyntheticQuery q;
                q.video = vi;
                q.event = k;
                q.task = task;
                q.id = video.id + "-" + std::to_string(k) + "-" + std::string(task_name(task));
                q.caption = corpus.signature_words[e.signature];
                q.words = task == Task::MR ? std::vector<std::string>{"find"} : std::vector<std::string>{"describe"};
                if (task == Task::MR) q.words.insert(q.words.end(), q.caption.begin(), q.caption.end());
                q.gold = e.span;
                q.informative = e.modality;
                q.present = options[(subset_cursor++ + rng() % options.size()) % options.size()];
                corpus.queries.push_back(std::move(q));
            }
        }
        corpus.videos.push_back(std::move(video));
    }
    return corpus;
}

ModalityBundle make_bundle(const SyntheticVideo& video, ModalitySet present) {
    ModalityBundle bundle;
    bundle.present = present;
    for (auto m : kAllModalities) {
        if (!present.contains(m)) continue;
        const Tensor& t = video.tracks[static_cast<std::size_t>(m)];
        Shape s{1};
        s.insert(s.end(), t.shape().begin(), t.shape().end());
        bundle.stream(m) = Tensor(s, std::vector<double>(t.values().begin(), t.values().end()));
    }
    return bundle;
}

ModelInput make_input(const SynthCorpus& corpus, const SyntheticQuery& query, const Vocabulary& vocab,
                      ModalitySet present) {
    const auto& video = corpus.videos.at(query.video);
    ModelInput in;
    in.bundle = make_bundle(video, present);
    in.frame_times = video.frame_times;
    in.duration = video.duration;
    for (const auto& w : query.words) in.query.push_back(vocab.id(w));
    if (query.task == Task::SC) {
        in.query.push_back(kTimeMarker);
        auto block = time_block_tokens(query.gold);
        in.query.insert(in.query.end(), block.begin(), block.end());
        in.query.push_back(kTimeMarker);
    }
    in.prompt = in.query;
    return in;
}

std::vector<TokenId> gold_response(const SyntheticQuery& query, const Vocabulary& vocab) {
    std::vector<TokenId> caption;
    for (const auto& w : query.caption) caption.push_back(vocab.id(w));
    if (query.task == Task::MR) return serialize_events({Event{query.gold, caption}});
    caption.push_back(kEos);
    return caption;
}

TimeSpan oracle_retrieve(const SynthCorpus& corpus, const SyntheticVideo& video, const SyntheticQuery& query) {
    return oracle_retrieve(corpus, video, query, query.informative);
}

TimeSpan oracle_retrieve(const SynthCorpus& corpus, const SyntheticVideo& video, const SyntheticQuery& query,
                         Modality modality) {
    return run_span(corpus.config, best_run(corpus, video, video.events.at(query.event).signature, modality));
}

SynthConfig bench_synth_config(std::size_t frames) {
    SynthConfig c;
    c.frames = frames;
    c.span_grid = 32;
    c.noise = 0.3;
    return c;
}

nlohmann::json corpus_descriptor(const SynthCorpus& corpus) {
    return {{"format", "trisense-synth"},
            {"version", 1},
            {"seed", corpus.seed},
            {"videos", corpus.videos.size()},
            {"config", synth_config_to_json(corpus.config)}};
}

SynthCorpus corpus_from_descriptor(const nlohmann::json& doc) {
    if (doc.value("format", "") != "trisense-synth") throw std::invalid_argument("not a synthetic corpus descriptor");
    return generate_corpus(synth_config_from_json(doc.at("config")), doc.at("seed").get<std::uint64_t>(),
                           doc.at("videos").get<std::size_t>());
}

}  // namespace trisense
