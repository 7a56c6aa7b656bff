// SPDX-License-Identifier: Apache-2.0
#include "trisense/events.hpp"

#include <cmath>
#include <sstream>

namespace trisense {

std::string_view task_name(Task task) { return task == Task::MR ? "MR" : "SC"; }

Task parse_task(std::string_view text) {
    if (text == "MR" || text == "mr") return Task::MR;
    if (text == "SC" || text == "sc") return Task::SC;
    throw std::invalid_argument("unknown task: " + std::string(text));
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
    for (const auto& w : words) add(w);
}

TokenId Vocabulary::add(std::string_view word) {
    if (word.empty()) throw std::invalid_argument("vocabulary words must be nonempty");
    if (word.front() == '<' && word.back() == '>') {
        throw std::invalid_argument("angle-bracketed words are reserved: " + std::string(word));
    }
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    const TokenId id = kFirstWord + words_.size();
    words_.emplace_back(word);
    index_.emplace(std::string(word), id);
    return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    return std::nullopt;
}

TokenId Vocabulary::id(std::string_view word) const { return find(word).value_or(kUnk); }

std::string Vocabulary::text(TokenId id) const {
    switch (id) {
        case kEos: return "<eos>";
        case kSync: return "<sync>";
        case kTimeMarker: return "<time>";
        case kUnk: return "<unk>";
        default: break;
    }
    if (is_time_token(id)) return time_symbol_text(time_symbol(id));
    if (id - kFirstWord >= words_.size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
    return words_[id - kFirstWord];
}

std::vector<TokenId> Vocabulary::encode(std::string_view sentence) const {
    std::vector<TokenId> out;
    std::istringstream in{std::string(sentence)};
    std::string word;
    while (in >> word) out.push_back(id(word));
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (auto id : ids) {
        if (!out.empty()) out += ' ';
        out += text(id);
    }
    return out;
}

void validate_span(const TimeSpan& span, std::optional<double> duration) {
    if (!std::isfinite(span.start) || !std::isfinite(span.end) || span.start < 0.0) {
        throw std::invalid_argument("span start must be finite and nonnegative");
    }
    if (span.end < span.start) {
        throw std::invalid_argument("span end " + std::to_string(span.end) + " precedes start " +
                                    std::to_string(span.start));
    }
    if (duration && span.end > *duration + 1e-9) {
        throw std::invalid_argument("span end " + std::to_string(span.end) + " exceeds duration " +
                                    std::to_string(*duration));
    }
}

std::vector<TokenId> time_block_tokens(const TimeSpan& span) {
    std::vector<TokenId> out;
    out.reserve(kTimeBlockLength);
    for (double t : {span.start, span.end}) {
        for (auto s : tokenize_timestamp(t).symbols) out.push_back(time_token(s));
    }
    return out;
}

TimeSpan parse_time_block(const TokenId* block) {
    std::array<TimeTokenSeq, 2> seqs;
    for (std::size_t i = 0; i < kTimeBlockLength; ++i) {
        if (!is_time_token(block[i])) throw EventFormatError("non-time token inside a time block", i);
        seqs[i / kTimeTokenCount].symbols[i % kTimeTokenCount] = time_symbol(block[i]);
    }
    std::array<double, 2> t{};
    for (std::size_t k = 0; k < 2; ++k) {
        try {
            t[k] = detokenize_timestamp(seqs[k]);
        } catch (const TimeParseError& err) {
            throw EventFormatError(err.what(), k * kTimeTokenCount + err.position());
        }
    }
    return {t[0], t[1]};
}

std::vector<TokenId> serialize_events(const std::vector<Event>& events) {
    std::vector<TokenId> out;
    for (std::size_t k = 0; k < events.size(); ++k) {
        const Event& e = events[k];
        validate_span(e.span);
        if (e.caption.empty()) throw std::invalid_argument("event " + std::to_string(k) + " has an empty caption");
        for (auto id : e.caption) {
            if (id < kFirstWord) {
                throw std::invalid_argument("event " + std::to_string(k) + " caption contains a reserved token");
            }
        }
        if (k > 0 && e.span.start < events[k - 1].span.start) {
            throw std::invalid_argument("events out of order: event " + std::to_string(k) + " starts at " +
                                        std::to_string(e.span.start) + " before event " + std::to_string(k - 1) +
                                        " at " + std::to_string(events[k - 1].span.start));
        }
        out.push_back(kSync);
        auto block = time_block_tokens(e.span);
        out.insert(out.end(), block.begin(), block.end());
        out.push_back(kSync);
        out.insert(out.end(), e.caption.begin(), e.caption.end());
    }
    out.push_back(kEos);
    return out;
}

std::vector<Event> deserialize_events(const std::vector<TokenId>& tokens) {
    std::vector<Event> events;
    std::size_t i = 0;
    while (true) {
        if (i >= tokens.size()) throw EventFormatError("missing <eos>", i);
        if (tokens[i] == kEos) {
            if (i + 1 != tokens.size()) throw EventFormatError("tokens after <eos>", i + 1);
            return events;
        }
        if (tokens[i] != kSync) throw EventFormatError("expected <sync> or <eos>", i);
        if (i + kTimeBlockLength + 2 > tokens.size()) throw EventFormatError("truncated time block", i);
        Event e;
        try {
            e.span = parse_time_block(tokens.data() + i + 1);
        } catch (const EventFormatError& err) {
            throw EventFormatError(err.what(), i + 1 + err.position());
        }
        i += kTimeBlockLength + 1;
        if (tokens[i] != kSync) throw EventFormatError("time block not closed by <sync>", i);
        ++i;
        while (i < tokens.size() && tokens[i] >= kFirstWord) e.caption.push_back(tokens[i++]);
        if (e.caption.empty()) throw EventFormatError("event without caption", i);
        events.push_back(std::move(e));
    }
}

}  // namespace trisense
