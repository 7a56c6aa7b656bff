// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trisense/temporal.hpp"

namespace trisense {

using TokenId = std::size_t;

// Fixed id layout: control tokens, then the eleven time symbols, then words.
inline constexpr TokenId kEos = 0;
inline constexpr TokenId kSync = 1;
inline constexpr TokenId kTimeMarker = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kTimeBase = 4;
inline constexpr TokenId kFirstWord = kTimeBase + kTimeAlphabetSize;
// Two timestamps per block.
inline constexpr std::size_t kTimeBlockLength = 2 * kTimeTokenCount;

inline bool is_time_token(TokenId id) { return id >= kTimeBase && id < kFirstWord; }
inline bool is_control_token(TokenId id) { return id < kTimeBase; }
inline TokenId time_token(std::uint8_t symbol) { return kTimeBase + symbol; }
inline std::uint8_t time_symbol(TokenId id) { return static_cast<std::uint8_t>(id - kTimeBase); }

// Moment retrieval or segment captioning.
enum class Task { MR, SC };
std::string_view task_name(Task task);
Task parse_task(std::string_view text);

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(const std::vector<std::string>& words);

    // Returns the existing id when the word is already known.
    TokenId add(std::string_view word);
    TokenId id(std::string_view word) const;  // kUnk when unknown
    std::optional<TokenId> find(std::string_view word) const;
    std::string text(TokenId id) const;
    std::size_t size() const { return kFirstWord + words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    std::vector<TokenId> encode(std::string_view sentence) const;
    // Words only; control and time tokens are rendered in angle brackets.
    std::string decode(const std::vector<TokenId>& ids) const;

private:
    std::vector<std::string> words_;
    std::map<std::string, TokenId, std::less<>> index_;
};

struct TimeSpan {
    double start = 0.0;
    double end = 0.0;

    bool operator==(const TimeSpan&) const = default;
};

void validate_span(const TimeSpan& span, std::optional<double> duration = std::nullopt);

struct Event {
    TimeSpan span;
    std::vector<TokenId> caption;

    bool operator==(const Event&) const = default;
};

class EventFormatError : public std::invalid_argument {
public:
    EventFormatError(const std::string& what, std::size_t position)
        : std::invalid_argument(what), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

// Per event: <sync> start(6) end(6) <sync> caption..., then <eos>.
std::vector<TokenId> serialize_events(const std::vector<Event>& events);
std::vector<Event> deserialize_events(const std::vector<TokenId>& tokens);

std::vector<TokenId> time_block_tokens(const TimeSpan& span);
// Reads kTimeBlockLength tokens; EventFormatError positions are block-relative.
TimeSpan parse_time_block(const TokenId* block);

}  // namespace trisense
