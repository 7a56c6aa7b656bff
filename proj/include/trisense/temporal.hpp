// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trisense/graph.hpp"
#include "trisense/params.hpp"

namespace trisense {

inline constexpr double kMaxTimestamp = 9999.9;
inline constexpr std::size_t kTimeTokenCount = 6;
inline constexpr std::size_t kTimeAlphabetSize = 11;
// Symbols 0..9 are digits; 10 is the decimal point.
inline constexpr std::uint8_t kTimeDot = 10;
inline constexpr std::size_t kSlotCount = 16;

class TimeParseError : public std::invalid_argument {
public:
    TimeParseError(const std::string& what, std::size_t position)
        : std::invalid_argument(what), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

// Six symbols: four integer digits, the point, one fractional digit.
struct TimeTokenSeq {
    std::array<std::uint8_t, kTimeTokenCount> symbols{};

    bool operator==(const TimeTokenSeq&) const = default;
};

struct AudioWindow {
    double start = 0.0;
    double end = 0.0;
};

struct FrameSamplePlan {
    double duration = 0.0;
    std::vector<double> timestamps;
    std::vector<AudioWindow> audio_windows;
};

// Bin-midpoint frame times t_i = (i + 0.5) * duration / n, each paired with a
// +-1 s audio window clamped to [0, duration].
FrameSamplePlan sample_frames(double duration, std::size_t n);
AudioWindow audio_window(double frame_time, double duration);

// Rounds half away from zero to 0.1 s and clamps to [0, 9999.9].
double round_to_grid(double seconds);
TimeTokenSeq tokenize_timestamp(double seconds);
double detokenize_timestamp(const TimeTokenSeq& seq);
// Checks the digit/point layout; throws TimeParseError naming the position.
void validate_time_tokens(const TimeTokenSeq& seq);

std::string time_symbol_text(std::uint8_t symbol);
// "<0><1><2><3><.><4>"
std::string to_string(const TimeTokenSeq& seq);
TimeTokenSeq parse_time_tokens(std::string_view text);

// 6 x D lookup into a kTimeAlphabetSize x D table; differentiable in table.
Tensor embed_time(Graph& g, const TimeTokenSeq& seq, const Tensor& table);

// [frames, tokens, dim]: the first dim/2 channels encode the frame index and
// the rest the within-frame token index, each as interleaved sin/cos pairs with
// geometric frequencies 10000^(-2i / (dim/2)).
Tensor sinusoidal_pe_2d(std::size_t frames, std::size_t tokens, std::size_t dim);

enum class TimeCombine { Concat, Add };
Tensor combine_time_features(Graph& g, const Tensor& fused, const Tensor& time_features, TimeCombine mode);

// Sixteen learned slot queries attend (single head) over a variable number of
// input tokens. Values are the raw inputs, so each slot is a convex
// combination of input rows.
class SlotProjector {
public:
    SlotProjector() = default;
    SlotProjector(ParameterStore& store, std::string prefix, std::size_t dim, std::mt19937_64& rng);

    const std::string& prefix() const { return prefix_; }
    std::size_t dim() const { return dim_; }
    Tensor& slot_queries(ParameterStore& store) const { return store.get(prefix_ + ".slots"); }
    Tensor& key_weight(ParameterStore& store) const { return store.get(prefix_ + ".key"); }

    Tensor compress(Graph& g, const ParameterStore& store, const Tensor& tokens) const;

private:
    std::string prefix_;
    std::size_t dim_ = 0;
};

Tensor slot_compress(Graph& g, const Tensor& tokens, const SlotProjector& proj, const ParameterStore& store);

// Per-frame time features: the six symbol embeddings of a timestamp are
// flattened and projected to one out_dim vector.
class TimeEncoder {
public:
    TimeEncoder() = default;
    TimeEncoder(ParameterStore& store, std::string prefix, std::size_t embed_dim, std::size_t out_dim,
                std::mt19937_64& rng);
    // Binds to parameters that already exist in a store.
    TimeEncoder(std::string prefix, std::size_t embed_dim, std::size_t out_dim)
        : prefix_(std::move(prefix)), embed_dim_(embed_dim), out_dim_(out_dim) {}

    Tensor encode(Graph& g, const ParameterStore& store, const std::vector<TimeTokenSeq>& stamps) const;
    const std::string& prefix() const { return prefix_; }

private:
    std::string prefix_;
    std::size_t embed_dim_ = 0;
    std::size_t out_dim_ = 0;
};

}  // namespace trisense
