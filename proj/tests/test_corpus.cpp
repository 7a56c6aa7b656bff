// SPDX-License-Identifier: Apache-2.0
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "trisense/corpus.hpp"
#include "trisense/synth.hpp"

using namespace trisense;

namespace {

std::vector<AnnotationRecord> synth_records(std::size_t videos, std::uint64_t seed = 1) {
    SynthConfig sc;
    sc.frames = 8;
    sc.tokens_per_frame = 2;
    sc.dim = 8;
    sc.signatures = 4;
    sc.events_per_video = 2;
    sc.max_bins = 2;
    return annotations_from_synth(generate_corpus(sc, seed, videos));
}

AnnotationRecord with_duration(AnnotationRecord r, double d) {
    r.duration = d;
    return r;
}

}  // namespace

TEST(TaskTags, ParseAndPrint) {
    const TaskTag t = parse_task_tag("VS-SC");
    EXPECT_EQ(t.modalities, ModalitySet::parse("VS"));
    EXPECT_EQ(t.task, Task::SC);
    EXPECT_EQ(t.text(), "VS-SC");
    EXPECT_EQ(parse_task_tag("AVS-MR").text(), "AVS-MR");
    EXPECT_THROW(parse_task_tag("AS-MR"), std::invalid_argument);
    EXPECT_THROW(parse_task_tag("AVS-QA"), std::invalid_argument);
    EXPECT_THROW(parse_task_tag("AVS"), std::invalid_argument);
}

TEST(SpanText, WrittenAndFound) {
    EXPECT_EQ(span_text({12.5, 30.0}), "<sync><0><0><1><2><.><5><0><0><3><0><.><0><sync>");
    const std::string text = "from " + span_text({1.0, 2.0}, "<time>") + " and " + span_text({3.0, 4.5}, "<time>");
    const auto blocks = find_span_blocks(text, "<time>");
    ASSERT_EQ(blocks.size(), 2u);
    EXPECT_EQ(blocks[0].span, (TimeSpan{1.0, 2.0}));
    EXPECT_EQ(blocks[0].offset, 5u);
    EXPECT_EQ(blocks[1].span, (TimeSpan{3.0, 4.5}));
    EXPECT_THROW(find_span_blocks("<sync><0><0><0><1><.><0><sync>", "<sync>"), TimeParseError);
    EXPECT_THROW(find_span_blocks("x <sync><0><0>", "<sync>"), TimeParseError);
}

TEST(Annotations, SynthRecordsAreValidAndRoundTrip) {
    const auto records = synth_records(5);
    ASSERT_EQ(records.size(), 5u);
    for (const auto& r : records) {
        EXPECT_TRUE(validate_record(r).empty());
        ASSERT_EQ(r.rounds.size(), kRoundsPerRecord);
        std::set<std::string> tags;
        for (const auto& round : r.rounds) tags.insert(round.tag.text());
        EXPECT_EQ(tags.size(), 8u);
        EXPECT_EQ(record_from_json(record_to_json(r)), r);
    }
    std::stringstream buf;
    serialize_annotations(records, buf);
    const auto parsed = parse_annotations(buf);
    EXPECT_TRUE(parsed.diagnostics.empty());
    EXPECT_EQ(parsed.records, records);

    // A single JSON array is accepted too.
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) arr.push_back(record_to_json(r));
    std::istringstream as_array(arr.dump(2));
    EXPECT_EQ(parse_annotations(as_array).records, records);
}

TEST(Annotations, DiagnosticsNameRecordAndRound) {
    auto records = synth_records(3);
    records[1].rounds.pop_back();
    records[2].rounds[0].model = "no span here";
    std::stringstream buf;
    serialize_annotations(records, buf);
    buf << "{not json}\n";
    const auto parsed = parse_annotations(buf);
    ASSERT_EQ(parsed.records.size(), 1u);
    ASSERT_EQ(parsed.diagnostics.size(), 3u);
    EXPECT_EQ(parsed.diagnostics[0].record, 1u);
    EXPECT_EQ(parsed.diagnostics[0].line, 2u);
    EXPECT_NE(parsed.diagnostics[0].message.find("expected 8 rounds, found 7"), std::string::npos);
    EXPECT_EQ(parsed.diagnostics[1].record, 2u);
    EXPECT_NE(parsed.diagnostics[1].message.find("round 1 (AVS-MR)"), std::string::npos);
    EXPECT_EQ(parsed.diagnostics[2].line, 4u);
}

TEST(Annotations, SpansBeyondDurationAreRejected) {
    auto r = synth_records(1)[0];
    EXPECT_FALSE(validate_record(with_duration(r, 1.0)).empty());
    EXPECT_FALSE(validate_record(with_duration(r, 0.0)).empty());
    r.video_id.clear();
    EXPECT_FALSE(validate_record(r).empty());
}

TEST(Stats, HistogramAndCounts) {
    auto base = synth_records(1)[0];
    std::vector<AnnotationRecord> records;
    for (double d : {100.0, 299.9, 300.0, 650.0, 1199.0, 1500.0, 1800.0, 4000.0}) {
        // Spans stay inside the shortest duration used here.
        records.push_back(with_duration(base, d));
    }
    const auto stats = dataset_stats(records);
    EXPECT_EQ(stats.count, 8u);
    EXPECT_EQ(stats.duration_histogram, (std::array<std::size_t, 6>{2, 1, 1, 1, 1, 2}));
    EXPECT_NEAR(stats.mean_duration, (100 + 299.9 + 300 + 650 + 1199 + 1500 + 1800 + 4000) / 8.0, 1e-9);
    EXPECT_NEAR(stats.median_duration, (650.0 + 1199.0) / 2.0, 1e-12);
    EXPECT_EQ(stats.task_counts.at("AVS-MR"), 8u);
    EXPECT_EQ(stats.task_counts.at("V-SC"), 8u);
    EXPECT_EQ(bucket_label(5), ">=30 min");
    const auto json = stats_to_json(stats);
    EXPECT_EQ(json.at("count"), 8);
}

TEST(Split, DeterministicDisjointAndComplete) {
    const auto records = synth_records(10);
    const auto a = export_training(records, 0.8, 7);
    const auto b = export_training(records, 0.8, 7);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.train.size(), 8u);
    EXPECT_EQ(a.test.size(), 2u);
    std::set<std::string> ids;
    for (const auto& r : a.train) ids.insert(r.video_id);
    for (const auto& r : a.test) EXPECT_FALSE(ids.count(r.video_id));
    for (const auto& r : a.test) ids.insert(r.video_id);
    EXPECT_EQ(ids.size(), 10u);
    EXPECT_NE(export_training(records, 0.8, 8).train, a.train);
    EXPECT_THROW(export_training(records, 0.01, 1), std::invalid_argument);
    EXPECT_THROW(export_training(records, 1.0, 1), std::invalid_argument);
    EXPECT_THROW(export_training({records[0]}, 0.5, 1), std::invalid_argument);
}
