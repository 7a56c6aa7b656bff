// SPDX-License-Identifier: Apache-2.0
#include "trisense/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <iterator>
#include <random>
#include <sstream>

namespace trisense {

std::string TaskTag::text() const { return modalities.label() + "-" + std::string(task_name(task)); }

TaskTag parse_task_tag(std::string_view text) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) throw std::invalid_argument("task tag needs MOD-TASK form: " + std::string(text));
    const std::string mods(text.substr(0, dash));
    if (std::find_if(kRoundModalities.begin(), kRoundModalities.end(), [&](const char* m) { return mods == m; }) ==
        kRoundModalities.end()) {
        throw std::invalid_argument("task tag modality must be AVS, AV, VS or V: " + std::string(text));
    }
    const auto task = text.substr(dash + 1);
    if (task != "MR" && task != "SC") throw std::invalid_argument("task tag task must be MR or SC: " + std::string(text));
    return {ModalitySet::parse(mods), parse_task(task)};
}

std::string span_text(const TimeSpan& span, std::string_view delimiter) {
    std::string out(delimiter);
    out += to_string(tokenize_timestamp(span.start));
    out += to_string(tokenize_timestamp(span.end));
    out += delimiter;
    return out;
}

std::vector<SpanBlock> find_span_blocks(std::string_view text, std::string_view delimiter) {
    std::vector<SpanBlock> out;
    std::size_t pos = 0;
    while ((pos = text.find(delimiter, pos)) != std::string_view::npos) {
        const std::size_t body = pos + delimiter.size();
        const std::size_t close = text.find(delimiter, body);
        if (close == std::string_view::npos) throw TimeParseError("unclosed " + std::string(delimiter) + " block", pos);
        const auto inner = text.substr(body, close - body);
        const std::size_t half = inner.size() / 2;
        if (inner.size() % 2 != 0 || half == 0) {
            throw TimeParseError("span block must hold two timestamps", pos);
        }
        SpanBlock block;
        block.offset = pos;
        try {
            block.span.start = detokenize_timestamp(parse_time_tokens(inner.substr(0, half)));
            block.span.end = detokenize_timestamp(parse_time_tokens(inner.substr(half)));
        } catch (const TimeParseError& e) {
            throw TimeParseError(std::string("bad timestamp in span block: ") + e.what(), pos);
        }
        out.push_back(block);
        pos = close + delimiter.size();
    }
    return out;
}

namespace {

std::string format_time(double t) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << t;
    return os.str();
}

void check_blocks(std::string_view text, std::string_view delimiter, double duration, const std::string& where,
                  std::size_t& found, std::vector<std::string>& errors) {
    std::vector<SpanBlock> blocks;
    try {
        blocks = find_span_blocks(text, delimiter);
    } catch (const TimeParseError& e) {
        errors.push_back(where + ": " + e.what() + " at offset " + std::to_string(e.position()));
        return;
    }
    found += blocks.size();
    for (const auto& b : blocks) {
        if (b.span.end < b.span.start) {
            errors.push_back(where + ": span end " + format_time(b.span.end) + " precedes start " +
                             format_time(b.span.start));
        } else if (b.span.end > duration) {
            errors.push_back(where + ": span end " + format_time(b.span.end) + " exceeds duration " +
                             format_time(duration));
        }
    }
}

}  // namespace

std::vector<std::string> validate_record(const AnnotationRecord& record) {
    std::vector<std::string> errors;
    if (record.video_id.empty()) errors.push_back("empty video id");
    if (!(record.duration > 0.0) || record.duration > kMaxTimestamp) {
        errors.push_back("duration " + format_time(record.duration) + " outside (0, 9999.9]");
    }
    if (record.rounds.size() != kRoundsPerRecord) {
        errors.push_back("expected " + std::to_string(kRoundsPerRecord) + " rounds, found " +
                         std::to_string(record.rounds.size()));
    }
    for (std::size_t i = 0; i < record.rounds.size(); ++i) {
        const auto& r = record.rounds[i];
        const std::string where = "round " + std::to_string(i + 1) + " (" + r.tag.text() + ")";
        std::size_t asked = 0, answered = 0;
        check_blocks(r.human, "<time>", record.duration, where + " human turn", asked, errors);
        check_blocks(r.model, "<sync>", record.duration, where + " model turn", answered, errors);
        if (r.tag.task == Task::MR && answered == 0) errors.push_back(where + ": moment retrieval answer has no span");
        if (r.tag.task == Task::SC && asked == 0) errors.push_back(where + ": captioning question has no span");
    }
    return errors;
}

nlohmann::json record_to_json(const AnnotationRecord& record) {
    nlohmann::json conv = nlohmann::json::array();
    for (const auto& r : record.rounds) {
        conv.push_back({{"from", "human"}, {"task", r.tag.text()}, {"value", r.human}});
        conv.push_back({{"from", "gpt"}, {"value", r.model}});
    }
    return {{"id", record.video_id}, {"duration", record.duration}, {"conversations", conv}};
}

AnnotationRecord record_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw std::invalid_argument("record must be a JSON object");
    AnnotationRecord r;
    r.video_id = doc.at("id").get<std::string>();
    r.duration = doc.at("duration").get<double>();
    const auto& conv = doc.at("conversations");
    if (!conv.is_array() || conv.size() % 2 != 0) {
        throw std::invalid_argument("conversations must alternate human and gpt turns");
    }
    for (std::size_t i = 0; i < conv.size(); i += 2) {
        const auto& h = conv[i];
        const auto& m = conv[i + 1];
        const std::string round = "round " + std::to_string(i / 2 + 1);
        if (h.value("from", "") != "human" || m.value("from", "") != "gpt") {
            throw std::invalid_argument(round + ": expected a human turn followed by a gpt turn");
        }
        Round out;
        try {
            out.tag = parse_task_tag(h.at("task").get<std::string>());
        } catch (const std::exception& e) {
            throw std::invalid_argument(round + ": " + e.what());
        }
        out.human = h.at("value").get<std::string>();
        out.model = m.at("value").get<std::string>();
        r.rounds.push_back(std::move(out));
    }
    return r;
}

namespace {

struct Chunk {
    std::string text;
    std::size_t line = 1;
};

// Splits a top-level JSON array into element texts without parsing them, so
// one bad element does not hide the rest.
std::vector<Chunk> split_array(const std::string& s, std::size_t open) {
    std::vector<Chunk> out;
    std::size_t line = 1 + static_cast<std::size_t>(std::count(s.begin(), s.begin() + open, '\n'));
    std::size_t i = open + 1;
    auto skip_ws = [&] {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
            if (s[i] == '\n') ++line;
            ++i;
        }
    };
    skip_ws();
    if (i < s.size() && s[i] == ']') return out;
    while (true) {
        skip_ws();
        if (i >= s.size()) throw std::runtime_error("unterminated JSON array");
        Chunk c;
        c.line = line;
        const std::size_t start = i;
        int depth = 0;
        bool in_string = false;
        for (; i < s.size(); ++i) {
            const char ch = s[i];
            if (ch == '\n') ++line;
            if (in_string) {
                if (ch == '\\') {
                    ++i;
                } else if (ch == '"') {
                    in_string = false;
                }
                continue;
            }
            if (ch == '"') in_string = true;
            else if (ch == '{' || ch == '[') ++depth;
            else if (ch == '}' || ch == ']') {
                if (depth == 0) break;
                --depth;
            } else if (ch == ',' && depth == 0) break;
        }
        if (i >= s.size()) throw std::runtime_error("unterminated JSON array");
        c.text = s.substr(start, i - start);
        out.push_back(std::move(c));
        if (s[i] == ']') return out;
        ++i;  // comma
    }
}

}  // namespace

ParseReport parse_annotations(std::istream& in) {
    if (!in) throw std::runtime_error("annotation stream is not readable");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("failed reading annotation stream");

    std::vector<Chunk> chunks;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        chunks = split_array(text, first);
    } else {
        std::istringstream lines(text);
        std::string line;
        for (std::size_t n = 1; std::getline(lines, line); ++n) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            chunks.push_back({line, n});
        }
    }

    ParseReport report;
    for (std::size_t k = 0; k < chunks.size(); ++k) {
        auto fail = [&](const std::string& msg) { report.diagnostics.push_back({chunks[k].line, k, msg}); };
        AnnotationRecord r;
        try {
            r = record_from_json(nlohmann::json::parse(chunks[k].text));
        } catch (const std::exception& e) {
            fail(e.what());
            continue;
        }
        const auto errors = validate_record(r);
        for (const auto& e : errors) fail(r.video_id + ": " + e);
        if (errors.empty()) report.records.push_back(std::move(r));
    }
    return report;
}

void serialize_annotations(const std::vector<AnnotationRecord>& records, std::ostream& out) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<AnnotationRecord> annotations_from_synth(const SynthCorpus& corpus) {
    std::vector<AnnotationRecord> out;
    for (std::size_t v = 0; v < corpus.videos.size(); ++v) {
        const auto& video = corpus.videos[v];
        if (video.events.empty()) continue;
        AnnotationRecord r;
        r.video_id = video.id;
        r.duration = video.duration;
        std::size_t k = 0;
        for (const char* mods : kRoundModalities) {
            for (Task task : {Task::MR, Task::SC}) {
                const auto& e = video.events[k++ % video.events.size()];
                std::string caption;
                for (const auto& w : corpus.signature_words.at(e.signature)) caption += (caption.empty() ? "" : " ") + w;
                Round round;
                round.tag = {ModalitySet::parse(mods), task};
                if (task == Task::MR) {
                    round.human = "find " + caption;
                    round.model = span_text(e.span) + caption;
                } else {
                    round.human = "describe " + span_text(e.span, "<time>");
                    round.model = caption;
                }
                r.rounds.push_back(std::move(round));
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

DatasetStats dataset_stats(const std::vector<AnnotationRecord>& records) {
    if (records.empty()) throw std::invalid_argument("dataset_stats needs at least one record");
    DatasetStats s;
    s.count = records.size();
    std::vector<double> durations;
    for (const auto& r : records) {
        durations.push_back(r.duration);
        const auto it = std::upper_bound(kDurationBucketEdges.begin(), kDurationBucketEdges.end(), r.duration);
        ++s.duration_histogram[static_cast<std::size_t>(std::distance(kDurationBucketEdges.begin(), it)) - 1];
        for (const auto& round : r.rounds) ++s.task_counts[round.tag.text()];
    }
    double total = 0.0;
    for (double d : durations) total += d;
    s.mean_duration = total / static_cast<double>(durations.size());
    std::sort(durations.begin(), durations.end());
    const std::size_t n = durations.size();
    s.median_duration = n % 2 ? durations[n / 2] : 0.5 * (durations[n / 2 - 1] + durations[n / 2]);
    return s;
}

std::string bucket_label(std::size_t bucket) {
    static const std::array<const char*, 6> labels{"<5 min", "5-10 min", "10-15 min", "15-20 min", "20-30 min", ">=30 min"};
    return labels.at(bucket);
}

nlohmann::json stats_to_json(const DatasetStats& s) {
    nlohmann::json hist = nlohmann::json::object();
    for (std::size_t b = 0; b < s.duration_histogram.size(); ++b) hist[bucket_label(b)] = s.duration_histogram[b];
    return {{"count", s.count},
            {"mean_duration", s.mean_duration},
            {"median_duration", s.median_duration},
            {"duration_histogram", hist},
            {"task_counts", s.task_counts}};
}

TrainTestSplit export_training(const std::vector<AnnotationRecord>& records, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
    const std::size_t n = records.size();
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) {
        throw std::invalid_argument(std::to_string(n) + " records are too few for a " + format_time(ratio) +
                                    " split with both sides nonempty");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    TrainTestSplit out;
    for (std::size_t k = 0; k < n; ++k) (k < n_train ? out.train : out.test).push_back(records[order[k]]);
    return out;
}

}  // namespace trisense
