// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/events.hpp"

namespace trisense {

enum class Combo { AVS, AV, VS };
std::string_view combo_name(Combo combo);
Combo parse_combo(std::string_view text);

struct ModalityCaptions {
    std::string clip_id;
    std::optional<std::string> visual;
    std::optional<std::string> audio;
    std::optional<std::string> speech;
    TimeSpan span;
    double duration = 0.0;

    void validate() const;
    bool supports(Combo combo) const;
};

ModalityCaptions captions_from_json(const nlohmann::json& doc);
nlohmann::json captions_to_json(const ModalityCaptions& c);
// JSON lines; throws naming the line on the first bad record.
std::vector<ModalityCaptions> read_captions(std::istream& in);

struct FusedCaption {
    Combo combo = Combo::AVS;
    std::string text;
    std::string clip_id;
};

inline constexpr double kRetentionThreshold = 3.0;

struct JudgeVerdict {
    double score = 0.0;
    bool retained = false;
    std::vector<std::string> diagnostics;  // one per unparseable round
};

// --- chat transport -------------------------------------------------------

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
};

nlohmann::json request_body(const ChatRequest& request);

// Retryable failure: timeouts, 429, 5xx, injected stub faults.
class TransientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Retries exhausted or a permanent transport failure.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    // Returns the assistant message content. Must be safe to call from
    // several threads at once.
    virtual std::string complete(const ChatRequest& request) = 0;
};

struct ClientConfig {
    std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
    std::string model = "generator";
    std::string judge_model = "judger";
    double timeout_seconds = 60.0;
    std::size_t max_retries = 3;
    double backoff_seconds = 0.5;  // first retry delay; doubles each retry
    std::size_t concurrency = 8;
    std::string token_env = "TRISENSE_API_TOKEN";
    double temperature = 0.0;
    double judge_temperature = 0.7;
};

ClientConfig client_config_from_json(const nlohmann::json& doc);
nlohmann::json client_config_to_json(const ClientConfig& c);

// OpenAI-compatible POST over plain HTTP; the bearer token comes from the
// environment variable named in the config.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(ClientConfig config);
    std::string complete(const ChatRequest& request) override;

private:
    ClientConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
    std::string token_;
};

// Deterministic in-process client. Generator requests echo every source
// caption line; judge requests answer with `judge_reply(clip_id, round)`.
// A seeded fraction of attempts fails with TransientError.
class StubChatClient : public ChatClient {
public:
    using JudgeReply = std::function<std::string(const std::string& clip_id, std::size_t round)>;

    explicit StubChatClient(JudgeReply judge_reply, double failure_rate = 0.0, std::uint64_t seed = 0);
    std::string complete(const ChatRequest& request) override;

    std::size_t calls() const { return calls_.load(); }
    std::size_t injected_failures() const { return failures_.load(); }

private:
    JudgeReply judge_reply_;
    double failure_rate_;
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> failures_{0};
    std::mutex mutex_;
    std::map<std::string, std::size_t> attempts_;  // per request body
    std::map<std::string, std::size_t> judge_rounds_;
};

struct RetryPolicy {
    std::size_t max_retries = 3;
    std::chrono::duration<double> backoff{0.5};
};

struct CallStats {
    std::size_t retries = 0;
};

// Calls `client`, retrying TransientError with exponential backoff. Throws
// TransportError once retries are exhausted.
std::string complete_with_retry(ChatClient& client, const ChatRequest& request, const RetryPolicy& policy,
                                CallStats* stats = nullptr);

// --- prompts ----------------------------------------------------------------

// {{name}} placeholders; rendering fails on unknown or unfilled names.
struct PromptTemplate {
    std::string name;
    int version = 1;
    std::string text;

    std::string render(const std::map<std::string, std::string>& values) const;
};

const PromptTemplate& generator_template();
const PromptTemplate& judger_template();
PromptTemplate load_template(const std::string& path, std::string name, int version);

// --- generator / judger -----------------------------------------------------

struct PipelineConfig {
    ClientConfig client;
    std::size_t judge_rounds = 3;
    std::vector<Combo> combos{Combo::AVS, Combo::AV, Combo::VS};
};

FusedCaption generate_fused(const ModalityCaptions& captions, Combo combo, ChatClient& client,
                            const PipelineConfig& config, CallStats* stats = nullptr);

// First decimal literal in the reply, required to lie in [0, 5].
std::optional<double> parse_score(std::string_view reply);

JudgeVerdict judge_fused(const FusedCaption& fused, const ModalityCaptions& sources, ChatClient& client,
                         const PipelineConfig& config, CallStats* stats = nullptr);

struct ScoredItem {
    std::string id;
    double score = 0.0;
};

struct FilterResult {
    std::vector<std::string> retained;                       // input order
    std::vector<std::pair<std::string, double>> rejected;    // input order
};

// Keeps exactly the items with score >= 3. Duplicate ids throw.
FilterResult filter_batch(const std::vector<ScoredItem>& items);

struct PipelineItem {
    std::string id;  // clip_id + "/" + combo
    FusedCaption fused;
    JudgeVerdict verdict;
    std::size_t retries = 0;
    std::string error;  // set when the item could not be processed
};

struct PipelineResult {
    std::vector<PipelineItem> items;  // input order, combos in config order
    FilterResult filter;
};

// Runs generate + judge for every (clip, combo) the clip supports, with at
// most config.client.concurrency requests in flight.
PipelineResult run_pipeline(const std::vector<ModalityCaptions>& clips, ChatClient& client,
                            const PipelineConfig& config);
void write_pipeline_result(const PipelineResult& result, std::ostream& out);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace trisense
