// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "trisense/pipeline.hpp"

using namespace trisense;

namespace {

ModalityCaptions clip(const std::string& id, bool audio = true, bool speech = true) {
    ModalityCaptions c;
    c.clip_id = id;
    c.visual = "a man opens a door";
    if (audio) c.audio = "a door creaks";
    if (speech) c.speech = "come in";
    c.span = {1.0, 4.5};
    c.duration = 10.0;
    return c;
}

PipelineConfig fast_config() {
    PipelineConfig cfg;
    cfg.client.backoff_seconds = 0.0;
    cfg.client.concurrency = 4;
    return cfg;
}

// A double in [0, 5] on the 0.1 grid, derived from the clip id.
std::string grid_score(const std::string& clip_id) {
    std::uint64_t h = 1469598103934665603ull;
    for (char ch : clip_id) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
    return std::to_string(h % 51 / 10) + "." + std::to_string(h % 51 % 10);
}

class Flaky : public ChatClient {
public:
    explicit Flaky(std::size_t failures) : failures_(failures) {}
    std::string complete(const ChatRequest&) override {
        if (calls_++ < failures_) throw TransientError("busy");
        return "ok";
    }
    std::size_t calls() const { return calls_; }

private:
    std::size_t failures_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace

TEST(ParseScore, FirstDecimalInRange) {
    EXPECT_EQ(parse_score("4"), 4.0);
    EXPECT_EQ(parse_score("Score: 4.5 because"), 4.5);
    EXPECT_EQ(parse_score("2.9/5"), 2.9);
    EXPECT_EQ(parse_score("0"), 0.0);
    EXPECT_EQ(parse_score("5.0"), 5.0);
    EXPECT_EQ(parse_score(".5"), 0.5);
    EXPECT_FALSE(parse_score("-1").has_value());
    EXPECT_FALSE(parse_score("7 out of 10").has_value());
    EXPECT_FALSE(parse_score("5.01").has_value());
    EXPECT_FALSE(parse_score("no idea").has_value());
    EXPECT_FALSE(parse_score("").has_value());
}

TEST(Filter, ThresholdBoundaryAndOrder) {
    const auto r = filter_batch({{"a", 2.9}, {"b", 3.0}, {"c", 5.0}, {"d", 0.0}, {"e", std::nextafter(3.0, 0.0)}});
    EXPECT_EQ(r.retained, (std::vector<std::string>{"b", "c"}));
    ASSERT_EQ(r.rejected.size(), 3u);
    EXPECT_EQ(r.rejected[0].first, "a");
    EXPECT_EQ(r.rejected[2].first, "e");
    EXPECT_TRUE(filter_batch({}).retained.empty());
    EXPECT_THROW(filter_batch({{"a", 4.0}, {"a", 1.0}}), std::invalid_argument);
}

TEST(Judge, AveragesParsedRounds) {
    const auto cfg = fast_config();
    const auto src = clip("c1");
    FusedCaption fused{Combo::AVS, "a man opens a creaking door and says come in", "c1"};

    StubChatClient split([](const std::string&, std::size_t round) { return round == 0 ? "5" : "1"; });
    PipelineConfig two = cfg;
    two.judge_rounds = 2;
    auto v = judge_fused(fused, src, split, two);
    EXPECT_EQ(v.score, 3.0);
    EXPECT_TRUE(v.retained);

    StubChatClient partial([](const std::string&, std::size_t round) { return round == 1 ? "hmm" : "2.9"; });
    v = judge_fused(fused, src, partial, cfg);
    EXPECT_EQ(v.score, 2.9);
    EXPECT_FALSE(v.retained);
    ASSERT_EQ(v.diagnostics.size(), 1u);
    EXPECT_NE(v.diagnostics[0].find("round 2"), std::string::npos);

    // In binary 3.8 + 4.6 + 0.6 averages to just under 3.
    StubChatClient tenths([](const std::string&, std::size_t round) {
        return round == 0 ? "3.8" : round == 1 ? "4.6" : "0.6";
    });
    v = judge_fused(fused, src, tenths, cfg);
    EXPECT_EQ(v.score, 3.0);
    EXPECT_TRUE(v.retained);

    StubChatClient silent([](const std::string&, std::size_t) { return "unsure"; });
    EXPECT_THROW(judge_fused(fused, src, silent, cfg), std::runtime_error);
}

TEST(Generate, StubEchoesSourcesOfTheCombo) {
    const auto cfg = fast_config();
    StubChatClient stub(nullptr);
    EXPECT_EQ(generate_fused(clip("c"), Combo::AVS, stub, cfg).text, "a man opens a door a door creaks come in");
    EXPECT_EQ(generate_fused(clip("c"), Combo::VS, stub, cfg).text, "a man opens a door come in");
    EXPECT_THROW(generate_fused(clip("c", false), Combo::AV, stub, cfg), std::exception);
}

TEST(Retry, BackoffThenTransportError) {
    RetryPolicy policy{3, std::chrono::duration<double>(0.0)};
    Flaky recovers(3);
    CallStats stats;
    EXPECT_EQ(complete_with_retry(recovers, {}, policy, &stats), "ok");
    EXPECT_EQ(stats.retries, 3u);
    Flaky gives_up(4);
    EXPECT_THROW(complete_with_retry(gives_up, {}, policy), TransportError);
    EXPECT_EQ(gives_up.calls(), 4u);
}

TEST(Prompts, RenderRejectsUnknownAndMissingNames) {
    PromptTemplate t{"t", 1, "judge {{combo}} now"};
    EXPECT_EQ(t.render({{"combo", "AVS"}}), "judge AVS now");
    EXPECT_THROW(t.render({}), std::invalid_argument);
    EXPECT_THROW((PromptTemplate{"u", 1, "open {{combo"}.render({{"combo", "AVS"}})), std::invalid_argument);
    EXPECT_NE(generator_template().text.find("{{"), std::string::npos);
    EXPECT_FALSE(judger_template().render({{"combo", "AV"}}).empty());
}

TEST(Captions, JsonAndCombos) {
    const auto c = clip("x", true, false);
    EXPECT_TRUE(c.supports(Combo::AV));
    EXPECT_FALSE(c.supports(Combo::VS));
    EXPECT_FALSE(c.supports(Combo::AVS));
    EXPECT_EQ(captions_to_json(captions_from_json(captions_to_json(c))), captions_to_json(c));
    std::istringstream in(captions_to_json(c).dump() + "\n{\"clip_id\": 3}\n");
    try {
        read_captions(in);
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(Pipeline, RetentionMatchesScoresUnderFaults) {
    std::vector<ModalityCaptions> clips;
    for (int i = 0; i < 400; ++i) clips.push_back(clip("clip" + std::to_string(i), i % 3 != 0, i % 5 != 0));
    auto cfg = fast_config();
    cfg.client.max_retries = 6;
    cfg.judge_rounds = 1;

    auto run = [&](double failure_rate) {
        StubChatClient stub([](const std::string& id, std::size_t) { return grid_score(id); }, failure_rate, 11);
        auto result = run_pipeline(clips, stub, cfg);
        if (failure_rate > 0) {
            EXPECT_GT(stub.injected_failures(), 0u);
        }
        std::ostringstream out;
        write_pipeline_result(result, out);
        return std::make_pair(result, out.str());
    };
    const auto [clean, clean_text] = run(0.0);
    const auto [faulty, faulty_text] = run(0.05);
    EXPECT_EQ(clean_text, faulty_text);

    std::set<std::string> expect;
    std::size_t items = 0;
    for (const auto& c : clips) {
        for (Combo combo : cfg.combos) {
            if (!c.supports(combo)) continue;
            ++items;
            if (std::stod(grid_score(c.clip_id)) >= kRetentionThreshold)
                expect.insert(c.clip_id + "/" + std::string(combo_name(combo)));
        }
    }
    ASSERT_EQ(clean.items.size(), items);
    for (const auto& item : faulty.items) EXPECT_TRUE(item.error.empty()) << item.error;
    EXPECT_EQ(std::set<std::string>(faulty.filter.retained.begin(), faulty.filter.retained.end()), expect);
    EXPECT_EQ(faulty.filter.retained.size() + faulty.filter.rejected.size(), items);
    EXPECT_EQ(run(0.05).second, faulty_text);
}

TEST(Pipeline, ExhaustedRetriesAreRecordedPerItem) {
    auto cfg = fast_config();
    cfg.client.max_retries = 0;
    Flaky always_down(1000000);
    const auto result = run_pipeline({clip("a"), clip("b")}, always_down, cfg);
    ASSERT_EQ(result.items.size(), 6u);
    for (const auto& item : result.items) EXPECT_FALSE(item.error.empty());
    EXPECT_TRUE(result.filter.retained.empty());
    EXPECT_TRUE(result.filter.rejected.empty());
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    std::vector<int> seen(1000, 0);
    parallel_for(seen.size(), 7, [&](std::size_t i) { ++seen[i]; });
    for (int s : seen) EXPECT_EQ(s, 1);
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(HttpClient, PostsChatCompletionWithBearerToken) {
    httplib::Server server;
    std::string auth, body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        body = req.body;
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"4.5"}}]})", "application/json");
    });
    server.Post("/busy", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("TRISENSE_TEST_TOKEN", "secret", 1);
    ClientConfig cfg;
    cfg.token_env = "TRISENSE_TEST_TOKEN";
    cfg.timeout_seconds = 5.0;
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    cfg.endpoint = base + "/v1/chat/completions";
    HttpChatClient client(cfg);
    ChatRequest req{"judger", {{"user", "hello"}}, 0.7};
    EXPECT_EQ(client.complete(req), "4.5");
    EXPECT_EQ(auth, "Bearer secret");
    EXPECT_EQ(nlohmann::json::parse(body), request_body(req));

    cfg.endpoint = base + "/busy";
    EXPECT_THROW(HttpChatClient(cfg).complete(req), TransientError);
    cfg.endpoint = base + "/bad";
    EXPECT_THROW(HttpChatClient(cfg).complete(req), TransportError);
    server.stop();
    thread.join();

    cfg.endpoint = "https://example.com/v1";
    EXPECT_THROW(HttpChatClient{cfg}, std::invalid_argument);
}
