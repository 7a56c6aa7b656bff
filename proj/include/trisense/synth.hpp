// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/connector.hpp"
#include "trisense/events.hpp"
#include "trisense/model.hpp"

namespace trisense {

struct SynthConfig {
    double duration = 64.0;
    std::size_t frames = 32;
    std::size_t tokens_per_frame = 16;
    std::size_t dim = 64;
    std::size_t signatures = 8;
    std::size_t events_per_video = 3;
    // Spans live on a grid of this many bins over the video; 0 means one bin
    // per frame. Lengths are drawn in bins from [min_bins, max_bins].
    std::size_t span_grid = 0;
    std::size_t min_bins = 2;
    std::size_t max_bins = 4;
    // Event strength is log-uniform in [amplitude / spread, amplitude * spread].
    double amplitude = 6.0;
    double amplitude_spread = 1.0;
    // Every event also leaves a copy of its signature, at this fraction of its
    // strength, in each other modality at a different time. 0 disables.
    double echo = 1.0;
    // Signature s belongs to modality s % 3 (vision, audio, speech): its events
    // are planted there, so with echoes only the query tells which modality
    // to trust. Otherwise the event modality is drawn at random.
    bool home_modalities = true;
    double noise = 0.0;
    bool include_sc = true;

    std::size_t grid_bins() const { return span_grid == 0 ? frames : span_grid; }
    void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& doc);

struct PlantedEvent {
    TimeSpan span;
    Modality modality = Modality::Vision;
    std::size_t signature = 0;
    double amplitude = 0.0;
    std::vector<std::pair<Modality, TimeSpan>> echoes;
};

struct SyntheticVideo {
    std::string id;
    double duration = 0.0;
    std::array<Tensor, 3> tracks;  // [F, T, D] per modality
    std::vector<PlantedEvent> events;
    std::vector<double> frame_times;
};

struct SyntheticQuery {
    std::string id;
    std::size_t video = 0;
    std::size_t event = 0;
    Task task = Task::MR;
    std::vector<std::string> words;    // query text
    std::vector<std::string> caption;  // gold caption words
    TimeSpan gold;
    Modality informative = Modality::Vision;
    ModalitySet present;
};

struct SynthCorpus {
    SynthConfig config;
    std::uint64_t seed = 0;
    Tensor signatures;  // [S, D], orthonormal rows
    std::vector<std::vector<std::string>> signature_words;
    std::vector<SyntheticVideo> videos;
    std::vector<SyntheticQuery> queries;

    Vocabulary vocabulary() const;
};

// Pure function of (config, seed).
SynthCorpus generate_corpus(const SynthConfig& config, std::uint64_t seed, std::size_t n_videos);

// Builds a [1, F, T, D] bundle restricted to `present`.
ModalityBundle make_bundle(const SyntheticVideo& video, ModalitySet present);
ModelInput make_input(const SynthCorpus& corpus, const SyntheticQuery& query, const Vocabulary& vocab,
                      ModalitySet present);
// Gold response: one event (span + caption) for MR, the caption for SC.
std::vector<TokenId> gold_response(const SyntheticQuery& query, const Vocabulary& vocab);

Modality home_modality(std::size_t signature);

// Sliding-window correlation with the queried signature over one modality
// (defaults to the query's informative one): the contiguous frame run
// maximising sum(score - peak/2), mapped back to frame-bin boundaries.
TimeSpan oracle_retrieve(const SynthCorpus& corpus, const SyntheticVideo& video, const SyntheticQuery& query);
TimeSpan oracle_retrieve(const SynthCorpus& corpus, const SyntheticVideo& video, const SyntheticQuery& query,
                         Modality modality);

// Settings used by the connector ablation and frame-count benchmarks.
SynthConfig bench_synth_config(std::size_t frames = 32);

// Corpus on disk: config, seed and video count regenerate it exactly.
nlohmann::json corpus_descriptor(const SynthCorpus& corpus);
SynthCorpus corpus_from_descriptor(const nlohmann::json& doc);

}  // namespace trisense
