// SPDX-License-Identifier: Apache-2.0
#include "trisense/temporal.hpp"

#include <algorithm>
#include <cmath>

namespace trisense {

FrameSamplePlan sample_frames(double duration, std::size_t n) {
    if (!(duration > 0.0) || !std::isfinite(duration)) {
        throw ParameterError("video duration must be positive, got " + std::to_string(duration));
    }
    if (n == 0) throw ParameterError("frame count must be at least 1");
    FrameSamplePlan plan;
    plan.duration = duration;
    plan.timestamps.reserve(n);
    plan.audio_windows.reserve(n);
    const double step = duration / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(i) + 0.5) * step;
        plan.timestamps.push_back(t);
        plan.audio_windows.push_back(audio_window(t, duration));
    }
    return plan;
}

AudioWindow audio_window(double frame_time, double duration) {
    return {std::clamp(frame_time - 1.0, 0.0, duration), std::clamp(frame_time + 1.0, 0.0, duration)};
}

namespace {

long long to_tenths(double seconds) {
    if (std::isnan(seconds) || seconds < 0.0) {
        throw ParameterError("timestamp must be nonnegative, got " + std::to_string(seconds));
    }
    if (seconds >= kMaxTimestamp) return 99999;
    return std::min<long long>(std::llround(seconds * 10.0), 99999);
}

}  // namespace

double round_to_grid(double seconds) { return static_cast<double>(to_tenths(seconds)) / 10.0; }

TimeTokenSeq tokenize_timestamp(double seconds) {
    long long tenths = to_tenths(seconds);
    TimeTokenSeq seq;
    seq.symbols[5] = static_cast<std::uint8_t>(tenths % 10);
    seq.symbols[4] = kTimeDot;
    long long whole = tenths / 10;
    for (int pos = 3; pos >= 0; --pos) {
        seq.symbols[static_cast<std::size_t>(pos)] = static_cast<std::uint8_t>(whole % 10);
        whole /= 10;
    }
    return seq;
}

void validate_time_tokens(const TimeTokenSeq& seq) {
    for (std::size_t pos = 0; pos < kTimeTokenCount; ++pos) {
        const auto s = seq.symbols[pos];
        if (pos == 4) {
            if (s != kTimeDot) throw TimeParseError("expected <.> at position 4", pos);
        } else if (s > 9) {
            throw TimeParseError("expected a digit at position " + std::to_string(pos), pos);
        }
    }
}

double detokenize_timestamp(const TimeTokenSeq& seq) {
    validate_time_tokens(seq);
    long long tenths = 0;
    for (std::size_t pos = 0; pos < 4; ++pos) tenths = tenths * 10 + seq.symbols[pos];
    tenths = tenths * 10 + seq.symbols[5];
    return static_cast<double>(tenths) / 10.0;
}

std::string time_symbol_text(std::uint8_t symbol) {
    if (symbol == kTimeDot) return "<.>";
    if (symbol > 9) throw std::out_of_range("time symbol out of range");
    return std::string("<") + static_cast<char>('0' + symbol) + ">";
}

std::string to_string(const TimeTokenSeq& seq) {
    std::string out;
    for (auto s : seq.symbols) out += time_symbol_text(s);
    return out;
}

TimeTokenSeq parse_time_tokens(std::string_view text) {
    TimeTokenSeq seq;
    std::size_t cursor = 0;
    for (std::size_t pos = 0; pos < kTimeTokenCount; ++pos) {
        if (cursor + 3 > text.size() || text[cursor] != '<' || text[cursor + 2] != '>') {
            throw TimeParseError("malformed time token at position " + std::to_string(pos), pos);
        }
        const char c = text[cursor + 1];
        if (c == '.') {
            seq.symbols[pos] = kTimeDot;
        } else if (c >= '0' && c <= '9') {
            seq.symbols[pos] = static_cast<std::uint8_t>(c - '0');
        } else {
            throw TimeParseError("symbol outside the time alphabet at position " + std::to_string(pos), pos);
        }
        cursor += 3;
    }
    if (cursor != text.size()) throw TimeParseError("trailing characters after time tokens", kTimeTokenCount);
    validate_time_tokens(seq);
    return seq;
}

Tensor embed_time(Graph& g, const TimeTokenSeq& seq, const Tensor& table) {
    if (table.rank() != 2 || table.dim(0) != kTimeAlphabetSize) {
        throw DimensionError("time embedding table must have 11 rows, got " + shape_to_string(table.shape()));
    }
    std::array<std::size_t, kTimeTokenCount> ids{};
    for (std::size_t i = 0; i < kTimeTokenCount; ++i) {
        if (seq.symbols[i] >= kTimeAlphabetSize) {
            throw TimeParseError("symbol outside the time alphabet at position " + std::to_string(i), i);
        }
        ids[i] = seq.symbols[i];
    }
    return g.gather_rows(table, ids);
}

Tensor sinusoidal_pe_2d(std::size_t frames, std::size_t tokens, std::size_t dim) {
    if (dim == 0 || dim % 4 != 0) throw ParameterError("2-D positional encoding needs dim divisible by 4");
    if (frames == 0 || tokens == 0) throw ParameterError("2-D positional encoding needs positive extents");
    const std::size_t half = dim / 2;
    std::vector<double> freq(half / 2);
    for (std::size_t i = 0; i < freq.size(); ++i) {
        freq[i] = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
    }
    Tensor pe = Tensor::zeros({frames, tokens, dim});
    auto v = pe.values();
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t t = 0; t < tokens; ++t) {
            double* row = v.data() + (f * tokens + t) * dim;
            for (std::size_t i = 0; i < freq.size(); ++i) {
                row[2 * i] = std::sin(static_cast<double>(f) * freq[i]);
                row[2 * i + 1] = std::cos(static_cast<double>(f) * freq[i]);
                row[half + 2 * i] = std::sin(static_cast<double>(t) * freq[i]);
                row[half + 2 * i + 1] = std::cos(static_cast<double>(t) * freq[i]);
            }
        }
    }
    return pe;
}

Tensor combine_time_features(Graph& g, const Tensor& fused, const Tensor& time_features, TimeCombine mode) {
    if (mode == TimeCombine::Add) return g.add(fused, time_features);
    return g.concat({fused, time_features}, 0);
}

SlotProjector::SlotProjector(ParameterStore& store, std::string prefix, std::size_t dim, std::mt19937_64& rng)
    : prefix_(std::move(prefix)), dim_(dim) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    store.add(prefix_ + ".slots", Tensor::randn({kSlotCount, dim}, rng, 1.0));
    store.add(prefix_ + ".key", Tensor::randn({dim, dim}, rng, scale));
}

Tensor SlotProjector::compress(Graph& g, const ParameterStore& store, const Tensor& tokens) const {
    if (tokens.rank() != 2 || tokens.dim(1) != dim_) {
        throw DimensionError("slot compression expects [T, " + std::to_string(dim_) + "] tokens, got " +
                             shape_to_string(tokens.shape()));
    }
    const Tensor& slots = store.get(prefix_ + ".slots");
    const Tensor& key = store.get(prefix_ + ".key");
    // slots . (X Wk)^T == (slots Wk^T) X^T
    Tensor q = g.matmul(slots, g.transpose(key));
    Tensor logits = g.scale(g.matmul(q, g.transpose(tokens)), 1.0 / std::sqrt(static_cast<double>(dim_)));
    Tensor attn = g.softmax(logits, 1);
    return g.matmul(attn, tokens);
}

Tensor slot_compress(Graph& g, const Tensor& tokens, const SlotProjector& proj, const ParameterStore& store) {
    if (tokens.rank() >= 1 && tokens.numel() == 0) throw DimensionError("slot compression needs at least one token");
    return proj.compress(g, store, tokens);
}

TimeEncoder::TimeEncoder(ParameterStore& store, std::string prefix, std::size_t embed_dim, std::size_t out_dim,
                         std::mt19937_64& rng)
    : prefix_(std::move(prefix)), embed_dim_(embed_dim), out_dim_(out_dim) {
    store.add(prefix_ + ".table", Tensor::randn({kTimeAlphabetSize, embed_dim}, rng, 1.0));
    store.add(prefix_ + ".proj",
              Tensor::randn({kTimeTokenCount * embed_dim, out_dim}, rng,
                            1.0 / std::sqrt(static_cast<double>(kTimeTokenCount * embed_dim))));
    store.add(prefix_ + ".bias", Tensor::zeros({out_dim}));
}

Tensor TimeEncoder::encode(Graph& g, const ParameterStore& store, const std::vector<TimeTokenSeq>& stamps) const {
    if (stamps.empty()) throw DimensionError("time encoder needs at least one timestamp");
    std::vector<std::size_t> ids;
    ids.reserve(stamps.size() * kTimeTokenCount);
    for (const auto& s : stamps) {
        validate_time_tokens(s);
        ids.insert(ids.end(), s.symbols.begin(), s.symbols.end());
    }
    Tensor emb = g.gather_rows(store.get(prefix_ + ".table"), ids);
    Tensor flat = g.reshape(emb, {stamps.size(), kTimeTokenCount * embed_dim_});
    return g.linear(flat, store.get(prefix_ + ".proj"), store.get(prefix_ + ".bias"));
}

}  // namespace trisense
