// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/connector.hpp"
#include "trisense/events.hpp"
#include "trisense/synth.hpp"

namespace trisense {

// Modality subsets used as task tags in annotation rounds.
inline constexpr std::array<const char*, 4> kRoundModalities{"AVS", "AV", "VS", "V"};
inline constexpr std::size_t kRoundsPerRecord = 8;

struct TaskTag {
    ModalitySet modalities;
    Task task = Task::MR;

    std::string text() const;  // e.g. "AVS-MR"
    bool operator==(const TaskTag&) const = default;
};

// Accepts the four round modality sets only.
TaskTag parse_task_tag(std::string_view text);

// One human/model exchange. Spans are written inline as
// <sync><d><d><d><d><.><d><d><d><d><d><.><d><sync> in model turns and with
// <time> delimiters in human turns.
struct Round {
    TaskTag tag;
    std::string human;
    std::string model;

    bool operator==(const Round&) const = default;
};

struct AnnotationRecord {
    std::string video_id;
    double duration = 0.0;
    std::vector<Round> rounds;

    bool operator==(const AnnotationRecord&) const = default;
};

std::string span_text(const TimeSpan& span, std::string_view delimiter = "<sync>");

struct SpanBlock {
    TimeSpan span;
    std::size_t offset = 0;  // byte offset of the opening delimiter
};

// Every delimiter-enclosed block in `text`. Throws TimeParseError on a block
// that does not hold two timestamps, or on an unclosed delimiter.
std::vector<SpanBlock> find_span_blocks(std::string_view text, std::string_view delimiter);

struct Diagnostic {
    std::size_t line = 0;    // 1-based line where the record starts
    std::size_t record = 0;  // 0-based record index in the input
    std::string message;
};

struct ParseReport {
    std::vector<AnnotationRecord> records;
    std::vector<Diagnostic> diagnostics;
};

// Checks round count, task tags and every span block against the duration.
// Returns one message per violation, each naming its round.
std::vector<std::string> validate_record(const AnnotationRecord& record);

// JSON lines or a single JSON array of ShareGPT-style records. Invalid
// records become diagnostics; an unreadable stream throws.
ParseReport parse_annotations(std::istream& in);
nlohmann::json record_to_json(const AnnotationRecord& record);
AnnotationRecord record_from_json(const nlohmann::json& doc);
// One record per line.
void serialize_annotations(const std::vector<AnnotationRecord>& records, std::ostream& out);

// One record per synthetic video: an MR and an SC round for each of the four
// round modality sets, cycling through the video's planted events.
std::vector<AnnotationRecord> annotations_from_synth(const SynthCorpus& corpus);

inline constexpr std::array<double, 6> kDurationBucketEdges{0.0, 300.0, 600.0, 900.0, 1200.0, 1800.0};

struct DatasetStats {
    std::size_t count = 0;
    double mean_duration = 0.0;
    double median_duration = 0.0;
    // Counts for [0,5), [5,10), [10,15), [15,20), [20,30) and >= 30 minutes.
    std::array<std::size_t, 6> duration_histogram{};
    std::map<std::string, std::size_t> task_counts;  // by tag text
};

DatasetStats dataset_stats(const std::vector<AnnotationRecord>& records);
std::string bucket_label(std::size_t bucket);
nlohmann::json stats_to_json(const DatasetStats& stats);

struct TrainTestSplit {
    std::vector<AnnotationRecord> train;
    std::vector<AnnotationRecord> test;
};

// Seeded Fisher-Yates shuffle, then round(ratio * n) records to train.
// Throws when either side would be empty.
TrainTestSplit export_training(const std::vector<AnnotationRecord>& records, double ratio, std::uint64_t seed);

}  // namespace trisense
