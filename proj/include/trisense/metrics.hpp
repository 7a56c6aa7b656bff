// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/events.hpp"

namespace trisense {

using Tokens = std::vector<std::string>;

// |a ∩ b| / |a ∪ b|; identical point spans score 1, any other zero-length
// union scores 0.
double iou(const TimeSpan& a, const TimeSpan& b);

struct SpanPrediction {
    std::string sample_id;
    std::optional<TimeSpan> pred;  // missing counts as IoU 0
    TimeSpan gold;
};

// Grid spans give exact ratios such as 0.5 that floating point can land just
// below; a hit needs IoU >= threshold - kIouTolerance.
inline constexpr double kIouTolerance = 1e-9;
double recall_at_iou(const std::vector<SpanPrediction>& preds, double threshold);
double mean_iou(const std::vector<SpanPrediction>& preds);

// Lowercase, ASCII punctuation removed, split on whitespace.
Tokens tokenize_caption(std::string_view text);

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBetaSq = 1.2;

// Modified n-gram precisions for n = 1..4, zero counts replaced by epsilon,
// closest-reference brevity penalty.
double bleu4(const Tokens& pred, const std::vector<Tokens>& refs);
double rouge_l(const Tokens& pred, const std::vector<Tokens>& refs);
std::size_t lcs_length(const Tokens& a, const Tokens& b);
// Exact, then suffix-stem unigram matching; no synonym stage.
double meteor_lite(const Tokens& pred, const std::vector<Tokens>& refs);
std::string stem(const std::string& word);

struct CiderResult {
    std::vector<double> scores;
    double mean = 0.0;
    bool degenerate_idf = false;  // corpus of fewer than two documents
};

// CIDEr-D style: TF-IDF n-gram vectors (n = 1..4) with IDF from the reference
// corpus, clipped numerator, Gaussian length penalty (sigma 6), times 10.
CiderResult cider(const std::vector<Tokens>& preds, const std::vector<std::vector<Tokens>>& refs);

class PredictionParseError : public std::runtime_error {
public:
    PredictionParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct PredictionRow {
    std::string sample_id;
    std::string task;  // "MR" or "SC"
    std::string modality_set;
    std::optional<TimeSpan> pred_span;
    TimeSpan gold_span;
    Tokens pred_caption;
    std::vector<Tokens> refs;
};

std::vector<PredictionRow> parse_predictions(std::istream& in);

struct MetricGroup {
    std::string task;
    std::string modality_set;
    std::size_t count = 0;
    std::map<std::string, double> scores;  // fractions, CIDEr unscaled
};

struct MetricReport {
    std::vector<MetricGroup> groups;
};

MetricReport build_report(const std::vector<PredictionRow>& rows);
// Human-readable tables: percentages for recall/IoU and caption metrics.
std::string render_report(const MetricReport& report);
nlohmann::json report_to_json(const MetricReport& report);

}  // namespace trisense
