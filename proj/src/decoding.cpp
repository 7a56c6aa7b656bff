// SPDX-License-Identifier: Apache-2.0
#include "trisense/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trisense {

TimeSpan repair_span(TimeSpan span, double duration) {
    const double cap = std::floor(std::min(duration, kMaxTimestamp) * 10.0 + 1e-9) / 10.0;
    span.start = std::clamp(span.start, 0.0, cap);
    span.end = std::clamp(span.end, 0.0, cap);
    if (span.end < span.start) std::swap(span.start, span.end);
    return span;
}

HeadSwitchDecoder::HeadSwitchDecoder(std::size_t vocab_size, DecodeLimits limits)
    : vocab_size_(vocab_size), limits_(limits) {
    if (vocab_size <= kFirstWord) throw std::invalid_argument("vocabulary has no words");
    if (limits_.max_tokens == 0) throw std::invalid_argument("max_tokens must be positive");
    time_support_[0].assign(kTimeAlphabetSize, 1);
    time_support_[0][kTimeDot] = 0;
    time_support_[1].assign(kTimeAlphabetSize, 0);
    time_support_[1][kTimeDot] = 1;
    update_lm_support();
}

void HeadSwitchDecoder::update_lm_support() {
    lm_support_.assign(vocab_size_, 1);
    lm_support_[kTimeMarker] = 0;
    lm_support_[kUnk] = 0;
    for (TokenId id = kTimeBase; id < kFirstWord; ++id) lm_support_[id] = 0;
    if (limits_.captions_only) lm_support_[kSync] = 0;
    if (caption_pending_) {
        lm_support_[kSync] = 0;
        lm_support_[kEos] = 0;
    }
}

const std::vector<std::uint8_t>& HeadSwitchDecoder::support() const {
    if (head_ == Head::Lm) return lm_support_;
    return time_support_[time_pos_ % kTimeTokenCount == 4 ? 1 : 0];
}

void HeadSwitchDecoder::emit(TokenId id) { result_.tokens.push_back(id); }

void HeadSwitchDecoder::check_token_limit() {
    if (!done_ && head_ == Head::Lm && result_.tokens.size() >= limits_.max_tokens) {
        done_ = true;
        result_.hit_token_limit = true;
    }
}

TokenId HeadSwitchDecoder::step(std::span<const double> logits) {
    if (done_) throw std::logic_error("decoder already finished");
    const auto& mask = support();
    if (logits.size() != mask.size()) {
        throw DimensionError("expected " + std::to_string(mask.size()) + " logits for the active head, got " +
                             std::to_string(logits.size()));
    }
    std::size_t best = mask.size();
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        // NaN logits never win; ties go to the lowest id.
        if (best == mask.size() || logits[i] > best_value) {
            best = i;
            best_value = std::isnan(logits[i]) ? -std::numeric_limits<double>::infinity() : logits[i];
        }
    }

    if (head_ == Head::Time) {
        const TokenId id = time_token(static_cast<std::uint8_t>(best));
        block_[time_pos_++] = id;
        emit(id);
        if (time_pos_ == kTimeBlockLength) finish_block();
        check_token_limit();
        return id;
    }

    const TokenId id = best;
    if (id == kEos) {
        emit(id);
        result_.finished = true;
        done_ = true;
        return id;
    }
    if (id == kSync) {
        if (result_.events.size() >= limits_.max_events) {
            result_.truncated = true;
            done_ = true;
            return id;
        }
        emit(id);
        head_ = Head::Time;
        time_pos_ = 0;
        return id;
    }
    emit(id);
    result_.text.push_back(id);
    if (!result_.events.empty()) result_.events.back().caption.push_back(id);
    if (caption_pending_) {
        caption_pending_ = false;
        update_lm_support();
    }
    check_token_limit();
    return id;
}

void HeadSwitchDecoder::finish_block() {
    Event e;
    e.span = repair_span(parse_time_block(block_.data()), limits_.duration);
    result_.events.push_back(std::move(e));
    head_ = Head::Lm;
    time_pos_ = 0;
    emit(kSync);
    caption_pending_ = true;
    update_lm_support();
}

}  // namespace trisense
