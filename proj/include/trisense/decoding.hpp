// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "trisense/events.hpp"

namespace trisense {

enum class Head { Lm, Time };

struct DecodeLimits {
    std::size_t max_events = 8;
    // Checked only while the LM head is active, so a time block is never cut.
    std::size_t max_tokens = 128;
    // Caption mode never opens a time block: <sync> is removed from the LM
    // head's support.
    bool captions_only = false;
    double duration = kMaxTimestamp;
};

struct GenerateResult {
    std::vector<Event> events;
    std::vector<TokenId> text;    // word tokens emitted by the LM head
    std::vector<TokenId> tokens;  // full emitted sequence, forced tokens included
    bool truncated = false;       // stopped at max_events
    bool hit_token_limit = false;
    bool finished = false;        // emitted <eos>
};

// Greedy <sync>-switched decoding over an external logit source. The LM head
// never sees time symbols in its support; the time head emits exactly twelve
// symbols laid out as two timestamps, after which <sync> is forced. Spans are
// clamped to [0, duration] and swapped when end < start.
class HeadSwitchDecoder {
public:
    HeadSwitchDecoder(std::size_t vocab_size, DecodeLimits limits);

    Head active_head() const { return head_; }
    bool done() const { return done_; }
    // Position within the current time block, 0..11.
    std::size_t time_position() const { return time_pos_; }

    // Support mask for the active head (vocab_size entries for LM, 11 for time).
    const std::vector<std::uint8_t>& support() const;
    // Greedy pick among the supported entries of `logits` for the active head;
    // returns the token appended (time symbols as vocabulary ids).
    TokenId step(std::span<const double> logits);

    const GenerateResult& result() const { return result_; }
    GenerateResult take_result() { return std::move(result_); }

private:
    void emit(TokenId id);
    void check_token_limit();
    void finish_block();
    void update_lm_support();

    std::size_t vocab_size_;
    DecodeLimits limits_;
    Head head_ = Head::Lm;
    bool done_ = false;
    std::size_t time_pos_ = 0;
    std::array<TokenId, kTimeBlockLength> block_{};
    bool caption_pending_ = false;
    std::vector<std::uint8_t> lm_support_;
    std::array<std::vector<std::uint8_t>, 2> time_support_;
    GenerateResult result_;
};

TimeSpan repair_span(TimeSpan span, double duration);

}  // namespace trisense
