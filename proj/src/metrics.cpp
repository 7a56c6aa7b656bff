// SPDX-License-Identifier: Apache-2.0
#include "trisense/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

namespace trisense {

double iou(const TimeSpan& a, const TimeSpan& b) {
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    if (uni <= 0.0) return a == b ? 1.0 : 0.0;
    return inter / uni;
}

namespace {

double sample_iou(const SpanPrediction& p) { return p.pred ? iou(*p.pred, p.gold) : 0.0; }

}  // namespace

double recall_at_iou(const std::vector<SpanPrediction>& preds, double threshold) {
    if (preds.empty()) throw std::invalid_argument("recall_at_iou needs at least one prediction");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("IoU threshold must lie in (0, 1]");
    std::size_t hits = 0;
    for (const auto& p : preds) hits += sample_iou(p) >= threshold - kIouTolerance ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mean_iou(const std::vector<SpanPrediction>& preds) {
    if (preds.empty()) throw std::invalid_argument("mean_iou needs at least one prediction");
    double total = 0.0;
    for (const auto& p : preds) total += sample_iou(p);
    return total / static_cast<double>(preds.size());
}

Tokens tokenize_caption(std::string_view text) {
    Tokens out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::ispunct(c) && c < 128) continue;
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
            continue;
        }
        cur += static_cast<char>(c < 128 ? std::tolower(c) : c);
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
    NgramCounts out;
    if (t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
    return out;
}

void require_refs(const std::vector<Tokens>& refs) {
    if (refs.empty()) throw std::invalid_argument("at least one reference is required");
}

}  // namespace

double bleu4(const Tokens& pred, const std::vector<Tokens>& refs) {
    require_refs(refs);
    if (pred.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto counts = ngrams(pred, n);
        NgramCounts max_ref;
        for (const auto& r : refs) {
            for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
        }
        std::size_t clipped = 0, total = 0;
        for (const auto& [g, c] : counts) {
            total += c;
            auto it = max_ref.find(g);
            clipped += it == max_ref.end() ? 0 : std::min(c, it->second);
        }
        const double p = clipped == 0 ? kBleuEpsilon / static_cast<double>(std::max<std::size_t>(total, 1))
                                       : static_cast<double>(clipped) / static_cast<double>(total);
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(pred.size());
    double r = static_cast<double>(refs.front().size());
    for (const auto& ref : refs) {
        const double len = static_cast<double>(ref.size());
        if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) r = len;
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum / 4.0);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Tokens& pred, const std::vector<Tokens>& refs) {
    require_refs(refs);
    if (pred.empty()) return 0.0;
    double best = 0.0;
    for (const auto& ref : refs) {
        if (ref.empty()) continue;
        const double l = static_cast<double>(lcs_length(pred, ref));
        if (l == 0.0) continue;
        const double p = l / static_cast<double>(pred.size());
        const double r = l / static_cast<double>(ref.size());
        best = std::max(best, (1.0 + kRougeBetaSq) * p * r / (r + kRougeBetaSq * p));
    }
    return best;
}

std::string stem(const std::string& word) {
    for (const char* suffix : {"ing", "ed", "es", "ly", "s"}) {
        const std::string s(suffix);
        if (word.size() >= s.size() + 3 && word.compare(word.size() - s.size(), s.size(), s) == 0) {
            return word.substr(0, word.size() - s.size());
        }
    }
    return word;
}

namespace {

double meteor_single(const Tokens& pred, const Tokens& ref) {
    if (pred.empty() || ref.empty()) return 0.0;
    std::vector<long> align(pred.size(), -1);
    std::vector<bool> used(ref.size(), false);
    for (int stage = 0; stage < 2; ++stage) {
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (align[i] >= 0) continue;
            const std::string pi = stage == 0 ? pred[i] : stem(pred[i]);
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (used[j]) continue;
                const std::string rj = stage == 0 ? ref[j] : stem(ref[j]);
                if (pi == rj) {
                    align[i] = static_cast<long>(j);
                    used[j] = true;
                    break;
                }
            }
        }
    }
    std::size_t matches = 0, chunks = 0;
    long prev = -2;
    bool in_chunk = false;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (align[i] < 0) {
            in_chunk = false;
            continue;
        }
        ++matches;
        if (!in_chunk || align[i] != prev + 1) ++chunks;
        in_chunk = true;
        prev = align[i];
    }
    if (matches == 0) return 0.0;
    const double m = static_cast<double>(matches);
    const double p = m / static_cast<double>(pred.size());
    const double r = m / static_cast<double>(ref.size());
    const double fmean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / m;
    return fmean * (1.0 - 0.5 * frag * frag * frag);
}

}  // namespace

double meteor_lite(const Tokens& pred, const std::vector<Tokens>& refs) {
    require_refs(refs);
    double best = 0.0;
    for (const auto& ref : refs) best = std::max(best, meteor_single(pred, ref));
    return best;
}

CiderResult cider(const std::vector<Tokens>& preds, const std::vector<std::vector<Tokens>>& refs) {
    if (preds.size() != refs.size()) throw std::invalid_argument("cider: prediction and reference counts differ");
    CiderResult result;
    if (preds.empty()) return result;
    const std::size_t n_docs = refs.size();
    result.degenerate_idf = n_docs < 2;
    if (result.degenerate_idf) std::cerr << "warning: CIDEr over fewer than two documents; IDF is degenerate\n";
    constexpr double sigma = 6.0;

    std::array<std::map<Tokens, double>, 4> df;
    for (const auto& doc_refs : refs) {
        require_refs(doc_refs);
        for (std::size_t n = 1; n <= 4; ++n) {
            std::set<Tokens> seen;
            for (const auto& r : doc_refs) {
                for (const auto& [g, c] : ngrams(r, n)) seen.insert(g);
            }
            for (const auto& g : seen) df[n - 1][g] += 1.0;
        }
    }
    // N-grams no reference contains take their document frequency from the
    // predictions instead of a constant floor of 1, so IDF stays a function of
    // df / N. A gram found in a single prediction still gets df = 1.
    std::array<std::map<Tokens, double>, 4> unseen_df;
    for (const auto& p : preds) {
        for (std::size_t n = 1; n <= 4; ++n) {
            for (const auto& [g, c] : ngrams(p, n)) {
                if (!df[n - 1].count(g)) unseen_df[n - 1][g] += 1.0;
            }
        }
    }
    const double log_n = std::log(static_cast<double>(n_docs));

    auto vectorize = [&](const Tokens& t, std::size_t n) {
        std::map<Tokens, double> vec;
        double norm = 0.0;
        for (const auto& [g, c] : ngrams(t, n)) {
            auto it = df[n - 1].find(g);
            const double d = it == df[n - 1].end() ? unseen_df[n - 1][g] : it->second;
            const double w = static_cast<double>(c) * (log_n - std::log(std::max(1.0, d)));
            vec[g] = w;
            norm += w * w;
        }
        return std::make_pair(vec, std::sqrt(norm));
    };

    result.scores.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double total = 0.0;
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto [pv, pn] = vectorize(preds[i], n);
            double per_n = 0.0;
            for (const auto& ref : refs[i]) {
                const auto [rv, rn] = vectorize(ref, n);
                if (pn == 0.0 || rn == 0.0) continue;
                double dot = 0.0;
                for (const auto& [g, w] : pv) {
                    auto it = rv.find(g);
                    if (it != rv.end()) dot += std::min(w, it->second) * it->second;
                }
                const double delta = static_cast<double>(preds[i].size()) - static_cast<double>(ref.size());
                per_n += dot / (pn * rn) * std::exp(-delta * delta / (2.0 * sigma * sigma));
            }
            total += per_n / static_cast<double>(refs[i].size());
        }
        result.scores.push_back(10.0 * total / 4.0);
    }
    double sum = 0.0;
    for (double s : result.scores) sum += s;
    result.mean = sum / static_cast<double>(result.scores.size());
    return result;
}

namespace {

Tokens caption_field(const nlohmann::json& v, std::size_t line, const char* name) {
    if (v.is_string()) return tokenize_caption(v.get<std::string>());
    if (v.is_array()) {
        std::string joined;
        for (const auto& w : v) {
            if (!w.is_string()) throw PredictionParseError(std::string(name) + " must hold strings", line);
            joined += w.get<std::string>() + " ";
        }
        return tokenize_caption(joined);
    }
    throw PredictionParseError(std::string(name) + " must be a string or an array of words", line);
}

TimeSpan span_field(const nlohmann::json& v, std::size_t line, const char* name) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw PredictionParseError(std::string(name) + " must be [start, end]", line);
    }
    TimeSpan s{v[0].get<double>(), v[1].get<double>()};
    try {
        validate_span(s);
    } catch (const std::invalid_argument& e) {
        throw PredictionParseError(std::string(name) + ": " + e.what(), line);
    }
    return s;
}

int set_rank(const std::string& label) {
    static const std::vector<std::string> order{"AVS", "AV", "VS", "AS", "V", "A", "S"};
    auto it = std::find(order.begin(), order.end(), label);
    return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

}  // namespace

std::vector<PredictionRow> parse_predictions(std::istream& in) {
    std::vector<PredictionRow> rows;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw PredictionParseError(std::string("invalid JSON: ") + e.what(), line);
        }
        if (!j.is_object()) throw PredictionParseError("expected a JSON object", line);
        if (!j.contains("task") || !j["task"].is_string()) throw PredictionParseError("missing task tag", line);
        PredictionRow row;
        row.task = j["task"].get<std::string>();
        if (row.task != "MR" && row.task != "SC") throw PredictionParseError("task must be MR or SC", line);
        row.sample_id = j.value("sample_id", std::string());
        if (row.sample_id.empty()) throw PredictionParseError("missing sample_id", line);
        row.modality_set = j.value("modality_set", std::string());
        if (row.modality_set.empty()) throw PredictionParseError("missing modality_set", line);
        if (row.task == "MR") {
            if (!j.contains("gold_span")) throw PredictionParseError("MR row without gold_span", line);
            row.gold_span = span_field(j["gold_span"], line, "gold_span");
            if (j.contains("pred_span") && !j["pred_span"].is_null()) {
                row.pred_span = span_field(j["pred_span"], line, "pred_span");
            }
        } else {
            row.pred_caption = j.contains("pred_caption") ? caption_field(j["pred_caption"], line, "pred_caption")
                                                          : Tokens{};
            if (j.contains("refs")) {
                if (!j["refs"].is_array() || j["refs"].empty()) throw PredictionParseError("refs must be a nonempty array", line);
                for (const auto& r : j["refs"]) row.refs.push_back(caption_field(r, line, "refs"));
            } else if (j.contains("gold_caption")) {
                row.refs.push_back(caption_field(j["gold_caption"], line, "gold_caption"));
            } else {
                throw PredictionParseError("SC row without gold_caption", line);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw PredictionParseError("no predictions", line);
    return rows;
}

MetricReport build_report(const std::vector<PredictionRow>& rows) {
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) groups[{rows[i].task, rows[i].modality_set}].push_back(i);

    std::vector<Tokens> sc_preds;
    std::vector<std::vector<Tokens>> sc_refs;
    std::map<std::size_t, std::size_t> sc_index;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].task != "SC") continue;
        sc_index[i] = sc_preds.size();
        sc_preds.push_back(rows[i].pred_caption);
        sc_refs.push_back(rows[i].refs);
    }
    const CiderResult cid = cider(sc_preds, sc_refs);

    MetricReport report;
    for (const auto& [key, idx] : groups) {
        MetricGroup g;
        g.task = key.first;
        g.modality_set = key.second;
        g.count = idx.size();
        const double n = static_cast<double>(idx.size());
        if (g.task == "MR") {
            std::vector<SpanPrediction> preds;
            for (auto i : idx) preds.push_back({rows[i].sample_id, rows[i].pred_span, rows[i].gold_span});
            g.scores["R@0.5"] = recall_at_iou(preds, 0.5);
            g.scores["R@0.7"] = recall_at_iou(preds, 0.7);
            g.scores["mIoU"] = mean_iou(preds);
        } else {
            double b = 0.0, m = 0.0, r = 0.0, c = 0.0;
            for (auto i : idx) {
                b += bleu4(rows[i].pred_caption, rows[i].refs);
                m += meteor_lite(rows[i].pred_caption, rows[i].refs);
                r += rouge_l(rows[i].pred_caption, rows[i].refs);
                c += cid.scores[sc_index.at(i)];
            }
            g.scores["BLEU-4"] = b / n;
            g.scores["METEOR"] = m / n;
            g.scores["ROUGE-L"] = r / n;
            g.scores["CIDEr"] = c / n;
        }
        report.groups.push_back(std::move(g));
    }
    std::stable_sort(report.groups.begin(), report.groups.end(), [](const MetricGroup& a, const MetricGroup& b) {
        if (a.task != b.task) return a.task < b.task;
        const int ra = set_rank(a.modality_set), rb = set_rank(b.modality_set);
        if (ra != rb) return ra < rb;
        return a.modality_set < b.modality_set;
    });
    return report;
}

std::string render_report(const MetricReport& report) {
    std::ostringstream out;
    auto cell = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%10.2f", v);
        return std::string(buf);
    };
    auto label = [](const std::string& s, std::size_t count) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%-10s%8zu", s.c_str(), count);
        return std::string(buf);
    };
    bool mr_header = false, sc_header = false;
    for (const auto& g : report.groups) {
        if (g.task == "MR" && !mr_header) {
            out << "Moment Retrieval (percent)\n";
            out << "modality         n   IoU=0.5   IoU=0.7      mIoU\n";
            mr_header = true;
        }
        if (g.task == "SC" && !sc_header) {
            if (mr_header) out << "\n";
            out << "Segment Captioning (percent; CIDEr x100)\n";
            out << "# BLEU-4 uses epsilon smoothing (1e-9); METEOR is exact+stem matching without synonyms.\n";
            out << "modality         n    BLEU-4    METEOR   ROUGE-L     CIDEr\n";
            sc_header = true;
        }
        out << label(g.modality_set, g.count);
        if (g.task == "MR") {
            out << cell(100 * g.scores.at("R@0.5")) << cell(100 * g.scores.at("R@0.7")) << cell(100 * g.scores.at("mIoU"));
        } else {
            out << cell(100 * g.scores.at("BLEU-4")) << cell(100 * g.scores.at("METEOR"))
                << cell(100 * g.scores.at("ROUGE-L")) << cell(100 * g.scores.at("CIDEr"));
        }
        out << "\n";
    }
    return out.str();
}

nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : report.groups) {
        groups.push_back({{"task", g.task}, {"modality_set", g.modality_set}, {"count", g.count}, {"scores", g.scores}});
    }
    return {{"groups", groups},
            {"notes",
             {{"bleu_smoothing", "epsilon 1e-9"},
              {"meteor", "exact and suffix-stem matching, no synonym stage"},
              {"rouge_beta_sq", kRougeBetaSq}}}};
}

}  // namespace trisense
