// SPDX-License-Identifier: Apache-2.0
#include "trisense/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>

#include "trisense/prompt_data.hpp"

namespace trisense {

std::string_view combo_name(Combo combo) {
    switch (combo) {
        case Combo::AVS: return "AVS";
        case Combo::AV: return "AV";
        case Combo::VS: return "VS";
    }
    return "?";
}

Combo parse_combo(std::string_view text) {
    if (text == "AVS") return Combo::AVS;
    if (text == "AV") return Combo::AV;
    if (text == "VS") return Combo::VS;
    throw std::invalid_argument("combo must be AVS, AV or VS, got " + std::string(text));
}

namespace {

bool has(const std::optional<std::string>& s) { return s && !s->empty(); }

struct Source {
    const char* label;
    const std::optional<std::string>* text;
};

std::vector<Source> sources_for(const ModalityCaptions& c, Combo combo) {
    switch (combo) {
        case Combo::AVS: return {{"visual", &c.visual}, {"audio", &c.audio}, {"speech", &c.speech}};
        case Combo::AV: return {{"visual", &c.visual}, {"audio", &c.audio}};
        case Combo::VS: return {{"visual", &c.visual}, {"speech", &c.speech}};
    }
    return {};
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void ModalityCaptions::validate() const {
    if (clip_id.empty()) throw std::invalid_argument("clip id is empty");
    if (!has(visual) && !has(audio) && !has(speech)) throw std::invalid_argument(clip_id + ": no caption present");
    if (!(duration > 0.0)) throw std::invalid_argument(clip_id + ": duration must be positive");
    validate_span(span, duration);
}

bool ModalityCaptions::supports(Combo combo) const {
    for (const auto& s : sources_for(*this, combo)) {
        if (!has(*s.text)) return false;
    }
    return true;
}

ModalityCaptions captions_from_json(const nlohmann::json& doc) {
    ModalityCaptions c;
    c.clip_id = doc.at("clip_id").get<std::string>();
    for (auto [key, field] : {std::pair{"visual", &c.visual}, {"audio", &c.audio}, {"speech", &c.speech}}) {
        if (doc.contains(key) && !doc[key].is_null()) *field = doc[key].get<std::string>();
    }
    c.span = {doc.at("start").get<double>(), doc.at("end").get<double>()};
    c.duration = doc.at("duration").get<double>();
    c.validate();
    return c;
}

nlohmann::json captions_to_json(const ModalityCaptions& c) {
    nlohmann::json j{{"clip_id", c.clip_id}, {"start", c.span.start}, {"end", c.span.end}, {"duration", c.duration}};
    if (c.visual) j["visual"] = *c.visual;
    if (c.audio) j["audio"] = *c.audio;
    if (c.speech) j["speech"] = *c.speech;
    return j;
}

std::vector<ModalityCaptions> read_captions(std::istream& in) {
    std::vector<ModalityCaptions> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(captions_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

nlohmann::json request_body(const ChatRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", request.model}, {"messages", messages}, {"temperature", request.temperature}};
}

ClientConfig client_config_from_json(const nlohmann::json& doc) {
    ClientConfig c;
    c.endpoint = doc.value("endpoint", c.endpoint);
    c.model = doc.value("model", c.model);
    c.judge_model = doc.value("judge_model", c.judge_model);
    c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.backoff_seconds = doc.value("backoff_seconds", c.backoff_seconds);
    c.concurrency = doc.value("concurrency", c.concurrency);
    c.token_env = doc.value("token_env", c.token_env);
    c.temperature = doc.value("temperature", c.temperature);
    c.judge_temperature = doc.value("judge_temperature", c.judge_temperature);
    if (c.concurrency == 0) throw std::invalid_argument("concurrency must be at least 1");
    if (!(c.timeout_seconds > 0.0) || c.backoff_seconds < 0.0) throw std::invalid_argument("bad timeout or backoff");
    return c;
}

nlohmann::json client_config_to_json(const ClientConfig& c) {
    return {{"endpoint", c.endpoint},
            {"model", c.model},
            {"judge_model", c.judge_model},
            {"timeout_seconds", c.timeout_seconds},
            {"max_retries", c.max_retries},
            {"backoff_seconds", c.backoff_seconds},
            {"concurrency", c.concurrency},
            {"token_env", c.token_env},
            {"temperature", c.temperature},
            {"judge_temperature", c.judge_temperature}};
}

HttpChatClient::HttpChatClient(ClientConfig config) : config_(std::move(config)) {
    static const std::regex url(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (config_.endpoint.rfind("https://", 0) == 0) {
        throw std::invalid_argument("https endpoints are not supported by this build; use http or a local proxy");
    }
    if (!std::regex_match(config_.endpoint, m, url)) throw std::invalid_argument("bad endpoint URL: " + config_.endpoint);
    host_ = m[1];
    if (m[2].matched) port_ = std::stoi(m[2]);
    path_ = m[3].matched ? std::string(m[3]) : "/";
    if (const char* t = std::getenv(config_.token_env.c_str())) token_ = t;
}

std::string HttpChatClient::complete(const ChatRequest& request) {
    httplib::Client cli(host_, port_);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = cli.Post(path_, headers, request_body(request).dump(), "application/json");
    if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) throw TransientError("server returned " + std::to_string(res->status));
    if (res->status != 200) throw TransportError("server returned " + std::to_string(res->status) + ": " + res->body);
    try {
        const auto doc = nlohmann::json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what());
    }
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// "key: value" lines of the user message.
std::map<std::string, std::string> user_fields(const ChatRequest& request) {
    std::map<std::string, std::string> out;
    for (const auto& m : request.messages) {
        if (m.role != "user") continue;
        std::istringstream lines(m.content);
        std::string line;
        while (std::getline(lines, line)) {
            const auto colon = line.find(": ");
            if (colon != std::string::npos) out[line.substr(0, colon)] = line.substr(colon + 2);
        }
    }
    return out;
}

}  // namespace

StubChatClient::StubChatClient(JudgeReply judge_reply, double failure_rate, std::uint64_t seed)
    : judge_reply_(std::move(judge_reply)), failure_rate_(failure_rate), seed_(seed) {
    if (failure_rate < 0.0 || failure_rate >= 1.0) throw std::invalid_argument("failure rate must lie in [0, 1)");
}

std::string StubChatClient::complete(const ChatRequest& request) {
    ++calls_;
    const std::string body = request_body(request).dump();
    const auto fields = user_fields(request);
    const auto clip = fields.count("clip") ? fields.at("clip") : std::string();
    const bool judge = fields.count("candidate") != 0;
    std::size_t round = 0;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        const std::size_t attempt = attempts_[body]++;
        const std::uint64_t h = splitmix(fnv1a(body) ^ splitmix(seed_ + attempt));
        if (static_cast<double>(h >> 11) * 0x1.0p-53 < failure_rate_) {
            ++failures_;
            throw TransientError("injected failure");
        }
        if (judge) round = judge_rounds_[clip + "\n" + fields.at("candidate")]++;
    }
    if (judge) return judge_reply_ ? judge_reply_(clip, round) : "4";
    std::string reply;
    for (const char* key : {"visual", "audio", "speech"}) {
        if (!fields.count(key)) continue;
        if (!reply.empty()) reply += ' ';
        reply += fields.at(key);
    }
    return reply;
}

std::string complete_with_retry(ChatClient& client, const ChatRequest& request, const RetryPolicy& policy,
                                CallStats* stats) {
    auto delay = policy.backoff;
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return client.complete(request);
        } catch (const TransientError& e) {
            if (attempt >= policy.max_retries) {
                throw TransportError("gave up after " + std::to_string(attempt) + " retries: " + e.what());
            }
        }
        if (stats) ++stats->retries;
        if (delay.count() > 0.0) std::this_thread::sleep_for(delay);
        delay *= 2.0;
    }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = text.find("}}", open);
        if (close == std::string::npos) throw std::invalid_argument(name + ": unclosed placeholder");
        const auto key = text.substr(open + 2, close - open - 2);
        const auto it = values.find(key);
        if (it == values.end()) throw std::invalid_argument(name + ": no value for {{" + key + "}}");
        out += text.substr(pos, open - pos);
        out += it->second;
        pos = close + 2;
    }
    out += text.substr(pos);
    return out;
}

const PromptTemplate& generator_template() {
    static const PromptTemplate t{"generator", 1, std::string(prompt_data::kGeneratorV1)};
    return t;
}

const PromptTemplate& judger_template() {
    static const PromptTemplate t{"judger", 1, std::string(prompt_data::kJudgerV1)};
    return t;
}

PromptTemplate load_template(const std::string& path, std::string name, int version) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read prompt template " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return {std::move(name), version, os.str()};
}

namespace {

std::string modality_list(const std::vector<Source>& sources) {
    std::string out;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (i) out += i + 1 == sources.size() ? " and " : ", ";
        out += sources[i].label;
    }
    return out;
}

std::string source_lines(const ModalityCaptions& c, const std::vector<Source>& sources) {
    std::string out = "clip: " + c.clip_id + "\n";
    for (const auto& s : sources) out += std::string(s.label) + ": " + **s.text + "\n";
    return out;
}

void require_sources(const ModalityCaptions& c, Combo combo) {
    for (const auto& s : sources_for(c, combo)) {
        if (!has(*s.text)) {
            throw std::invalid_argument(std::string(combo_name(combo)) + " needs a " + s.label + " caption; clip " +
                                        c.clip_id + " has none");
        }
    }
}

}  // namespace

FusedCaption generate_fused(const ModalityCaptions& captions, Combo combo, ChatClient& client,
                            const PipelineConfig& config, CallStats* stats) {
    require_sources(captions, combo);
    const auto sources = sources_for(captions, combo);
    ChatRequest req;
    req.model = config.client.model;
    req.temperature = config.client.temperature;
    req.messages.push_back(
        {"system", generator_template().render({{"combo", std::string(combo_name(combo))},
                                                {"modalities", modality_list(sources)}})});
    req.messages.push_back({"user", source_lines(captions, sources)});
    RetryPolicy policy{config.client.max_retries, std::chrono::duration<double>(config.client.backoff_seconds)};
    return {combo, trim(complete_with_retry(client, req, policy, stats)), captions.clip_id};
}

std::optional<double> parse_score(std::string_view reply) {
    static const std::regex number(R"(-?(?:\d+(?:\.\d+)?|\.\d+))");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(reply.begin(), reply.end(), m, number)) return std::nullopt;
    const double v = std::stod(m.str());
    if (!(v >= 0.0 && v <= 5.0)) return std::nullopt;
    return v;
}

JudgeVerdict judge_fused(const FusedCaption& fused, const ModalityCaptions& sources, ChatClient& client,
                         const PipelineConfig& config, CallStats* stats) {
    if (config.judge_rounds == 0) throw std::invalid_argument("judge needs at least one round");
    require_sources(sources, fused.combo);
    ChatRequest req;
    req.model = config.client.judge_model;
    req.temperature = config.client.judge_temperature;
    req.messages.push_back({"system", judger_template().render({{"combo", std::string(combo_name(fused.combo))}})});
    req.messages.push_back({"user", source_lines(sources, sources_for(sources, fused.combo)) + "candidate: " +
                                        fused.text + "\n"});
    RetryPolicy policy{config.client.max_retries, std::chrono::duration<double>(config.client.backoff_seconds)};
    JudgeVerdict v;
    double total = 0.0;
    std::size_t parsed = 0;
    for (std::size_t r = 0; r < config.judge_rounds; ++r) {
        const auto reply = complete_with_retry(client, req, policy, stats);
        if (auto s = parse_score(reply)) {
            total += *s;
            ++parsed;
        } else {
            v.diagnostics.push_back("round " + std::to_string(r + 1) + ": no score in [0, 5] in reply \"" +
                                    reply.substr(0, 80) + "\"");
        }
    }
    if (parsed == 0) throw std::runtime_error(fused.clip_id + ": no judge round produced a score");
    // Rounded so averaging round-off cannot move a mean of exactly 3 below the gate.
    v.score = std::round(total / static_cast<double>(parsed) * 1e6) / 1e6;
    v.retained = v.score >= kRetentionThreshold;
    return v;
}

FilterResult filter_batch(const std::vector<ScoredItem>& items) {
    std::unordered_set<std::string> seen;
    FilterResult out;
    for (const auto& item : items) {
        if (!seen.insert(item.id).second) throw std::invalid_argument("duplicate id in batch: " + item.id);
        if (item.score >= kRetentionThreshold) {
            out.retained.push_back(item.id);
        } else {
            out.rejected.emplace_back(item.id, item.score);
        }
    }
    return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

PipelineResult run_pipeline(const std::vector<ModalityCaptions>& clips, ChatClient& client,
                            const PipelineConfig& config) {
    struct Job {
        std::size_t clip;
        Combo combo;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        clips[i].validate();
        for (auto combo : config.combos) {
            if (clips[i].supports(combo)) jobs.push_back({i, combo});
        }
    }
    PipelineResult result;
    result.items.resize(jobs.size());
    parallel_for(jobs.size(), config.client.concurrency, [&](std::size_t k) {
        const auto& clip = clips[jobs[k].clip];
        auto& item = result.items[k];
        item.id = clip.clip_id + "/" + std::string(combo_name(jobs[k].combo));
        item.fused.clip_id = clip.clip_id;
        item.fused.combo = jobs[k].combo;
        CallStats stats;
        try {
            item.fused = generate_fused(clip, jobs[k].combo, client, config, &stats);
            item.verdict = judge_fused(item.fused, clip, client, config, &stats);
        } catch (const std::exception& e) {
            item.error = e.what();
        }
        item.retries = stats.retries;
    });
    std::vector<ScoredItem> scored;
    for (const auto& item : result.items) {
        if (item.error.empty()) scored.push_back({item.id, item.verdict.score});
    }
    result.filter = filter_batch(scored);
    return result;
}

void write_pipeline_result(const PipelineResult& result, std::ostream& out) {
    for (const auto& item : result.items) {
        nlohmann::json j{{"id", item.id}, {"clip_id", item.fused.clip_id},
                         {"combo", std::string(combo_name(item.fused.combo))}};
        if (!item.error.empty()) {
            j["error"] = item.error;
        } else {
            j["text"] = item.fused.text;
            j["score"] = item.verdict.score;
            j["retained"] = item.verdict.retained;
            if (!item.verdict.diagnostics.empty()) j["diagnostics"] = item.verdict.diagnostics;
        }
        out << j.dump() << '\n';
    }
}

}  // namespace trisense
