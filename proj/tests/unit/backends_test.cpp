#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "spdiv/io.hpp"
#include "spdiv/prompts.hpp"
#include "support.hpp"

using namespace spdiv;
using nlohmann::json;

namespace {

/// Transport that fails a fixed number of times, then answers.
class FlakyTransport : public Transport {
public:
    explicit FlakyTransport(int failures, json reply = json::object())
        : failures_(failures), reply_(std::move(reply)) {}
    int requests = 0;
    json post(const std::string&, const json&) override {
        ++requests;
        if (requests <= failures_) throw TransportError("boom " + std::to_string(requests));
        return reply_;
    }

private:
    int failures_;
    json reply_;
};

json chat_reply(const std::vector<std::string>& texts) {
    json choices = json::array();
    // Deliberately out of order: clients must restore request order.
    for (std::size_t i = texts.size(); i-- > 0;)
        choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", texts[i]}}}});
    return {{"choices", choices}};
}

/// Local OpenAI-style server: echoes the model name and records requests.
class FakeServer {
public:
    FakeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            const auto body = json::parse(req.body);
            requests.push_back(body);
            auth.push_back(req.get_header_value("Authorization"));
            if (fail_next > 0) {
                --fail_next;
                res.status = 503;
                res.set_content("busy", "text/plain");
                return;
            }
            std::vector<std::string> texts;
            for (int i = 0; i < body.at("n").get<int>(); ++i)
                texts.push_back(body.at("model").get<std::string>() + " says \\boxed{" + std::to_string(i) + "}");
            json reply = chat_reply(texts);
            if (body.contains("logprobs")) {
                for (auto& c : reply["choices"])
                    c["logprobs"] = {{"content", json::array({{{"token", "a"},
                                                               {"logprob", 0.0},
                                                               {"top_logprobs", json::array({{{"token", "a"}, {"logprob", std::log(0.75)}},
                                                                                             {{"token", "b"}, {"logprob", std::log(0.25)}}})}}})}};
            }
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            const auto body = json::parse(req.body);
            requests.push_back(body);
            json data = json::array();
            std::size_t i = 0;
            for (const auto& in : body.at("input"))
                data.push_back({{"index", i++}, {"embedding", {static_cast<double>(in.get<std::string>().size()), 1.0, 0.0}}});
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::mutex mu_;
    std::vector<json> requests;
    std::vector<std::string> auth;
    int fail_next = 0;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendSpec http_spec(Role role, const std::string& url, const std::string& model) {
    auto s = default_spec(role, BackendKind::http);
    s.endpoint = url;
    s.model_name = model;
    s.retry.backoff = {std::chrono::milliseconds(0)};
    return s;
}

}  // namespace

TEST(ChallengerOutput, Parsing) {
    auto g = parse_challenger_output("<question>\nHow many?\n</question>\n\n\\boxed{42}");
    EXPECT_TRUE(g.well_formed);
    EXPECT_EQ(g.text, "How many?");
    EXPECT_EQ(g.claimed_answer, "42");

    g = parse_challenger_output("<question>\nHow many?\n\n\\boxed{42}");
    EXPECT_FALSE(g.well_formed);

    g = parse_challenger_output("<question>How many?</question> no answer");
    EXPECT_FALSE(g.well_formed);
    EXPECT_EQ(g.text, "How many?");
    EXPECT_FALSE(parse_challenger_output("").well_formed);
}

TEST(Verdict, LastTokenRule) {
    EXPECT_EQ(parse_verdict("DUPLICATE"), Verdict::duplicate);
    EXPECT_EQ(parse_verdict("I think it is novel. NOVEL"), Verdict::novel);
    EXPECT_EQ(parse_verdict("maybe"), Verdict::duplicate);
    EXPECT_EQ(parse_verdict("novel"), Verdict::novel);
    EXPECT_EQ(parse_verdict("NOVEL\n"), Verdict::novel);
    EXPECT_EQ(parse_verdict(""), Verdict::duplicate);
}

TEST(Specs, RoleDefaults) {
    EXPECT_EQ(default_spec(Role::challenger).temperature, 1.0);
    EXPECT_EQ(default_spec(Role::solver).temperature, 1.0);
    EXPECT_EQ(default_spec(Role::solver).top_p, 0.99);
    EXPECT_EQ(default_spec(Role::coder).temperature, 0.0);
    EXPECT_EQ(default_spec(Role::judge).temperature, 0.0);
    EXPECT_NE(default_spec(Role::embedder).model_name.find("jina"), std::string::npos);
}

TEST(Specs, Validation) {
    auto s = default_spec(Role::solver, BackendKind::http);
    EXPECT_THROW(validate_spec(s), ConfigError);  // no endpoint
    s.endpoint = "http://localhost:1";
    s.model_name = "m";
    EXPECT_NO_THROW(validate_spec(s));
    auto t = s;
    t.top_p = 0.0;
    EXPECT_THROW(validate_spec(t), ConfigError);
    t = s;
    t.temperature = -1.0;
    EXPECT_THROW(validate_spec(t), ConfigError);
    t = s;
    t.max_in_flight = 0;
    EXPECT_THROW(validate_spec(t), ConfigError);

    const auto parsed = spec_from_json(
        json{{"kind", "http"}, {"endpoint", "http://x"}, {"model", "m"}, {"temperature", 0.5},
             {"retry", {{"attempts", 5}, {"backoff_ms", {1, 2}}}}},
        Role::judge);
    EXPECT_EQ(parsed.role, Role::judge);
    EXPECT_EQ(parsed.temperature, 0.5);
    EXPECT_EQ(parsed.retry.attempts, 5);
    ASSERT_EQ(parsed.retry.backoff.size(), 2u);
    EXPECT_EQ(parsed.retry.backoff[1], std::chrono::milliseconds(2));
}

TEST(Retry, FailingEndpointUsesExactBudgetAndSchedule) {
    auto inner = std::make_shared<FlakyTransport>(1000);
    std::vector<std::chrono::milliseconds> slept;
    RetryPolicy policy{4, {std::chrono::milliseconds(100), std::chrono::milliseconds(300)}};
    RetryingTransport t(inner, policy, [&](std::chrono::milliseconds d) { slept.push_back(d); });
    try {
        t.post("/x", json::object());
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts().size(), 4u);
        EXPECT_EQ(e.attempts().front(), "boom 1");
    }
    EXPECT_EQ(inner->requests, 4);
    EXPECT_EQ(slept, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(100),
                                                             std::chrono::milliseconds(300),
                                                             std::chrono::milliseconds(300)}));
}

TEST(Retry, RecoversWithinBudget) {
    auto inner = std::make_shared<FlakyTransport>(2, json{{"ok", true}});
    RetryingTransport t(inner, RetryPolicy{3, {std::chrono::milliseconds(0)}}, [](auto) {});
    EXPECT_EQ(t.post("/x", json::object())["ok"], true);
    EXPECT_EQ(inner->requests, 3);
}

TEST(RoleIsolation, FactoriesRejectForeignSpecs) {
    auto t = std::make_shared<FlakyTransport>(0);
    auto coder_spec = http_spec(Role::coder, "http://127.0.0.1:1", "c");
    EXPECT_THROW(make_http_solver(coder_spec, t), ConfigError);
    EXPECT_THROW(make_http_challenger(coder_spec, t), ConfigError);
    EXPECT_THROW(make_http_embedder(coder_spec, t), ConfigError);
    EXPECT_THROW(make_http_judge(coder_spec, t), ConfigError);
    EXPECT_NO_THROW(make_http_coder(coder_spec, t));
    EXPECT_THROW(EmbeddingClient(coder_spec, t), ConfigError);
    EXPECT_THROW(ChatClient(http_spec(Role::embedder, "http://127.0.0.1:1", "e"), t), ConfigError);
}

TEST(Payloads, ChatAndEmbedding) {
    auto spec = http_spec(Role::challenger, "http://h", "qwen");
    spec.logprob_top_k = 5;
    const auto body = chat_payload(spec, {{"system", "S"}, {"user", "U"}}, 4, 7);
    EXPECT_EQ(body["model"], "qwen");
    EXPECT_EQ(body["n"], 4);
    EXPECT_EQ(body["temperature"], 1.0);
    EXPECT_EQ(body["top_p"], 0.99);
    EXPECT_EQ(body["seed"], 7);
    EXPECT_EQ(body["logprobs"], true);
    EXPECT_EQ(body["top_logprobs"], 5);
    EXPECT_EQ(body["messages"][1]["content"], "U");

    const auto parsed = parse_chat_response(chat_reply({"a", "b", "c"}));
    ASSERT_EQ(parsed.size(), 3u);
    EXPECT_EQ(parsed[0].text, "a");
    EXPECT_EQ(parsed[2].text, "c");
    EXPECT_THROW(parse_chat_response(json{{"nope", 1}}), TransportError);

    const auto eb = embedding_payload(http_spec(Role::embedder, "http://h", "jina"), {"x", "y"});
    EXPECT_EQ(eb["input"], json({"x", "y"}));
    const auto vecs = parse_embedding_response(
        json{{"data", {{{"index", 1}, {"embedding", {0.0, 1.0}}}, {{"index", 0}, {"embedding", {1.0, 0.0}}}}}});
    EXPECT_EQ(vecs[0], (std::vector<double>{1.0, 0.0}));
}

TEST(Http, ChatRoundTripAgainstLocalServer) {
    FakeServer server;
    ::setenv("SPDIV_TEST_KEY", "sekrit", 1);
    auto transport = std::make_shared<HttpTransport>(server.url(), "sekrit");
    auto solver = make_http_solver(http_spec(Role::solver, server.url(), "solver-model"), transport);
    const auto prompts = PromptSet::builtin();
    const auto rollout = solve(*solver, prompts, Question("q1", "What is 2+2?", 1), 3, 11);
    ASSERT_EQ(rollout.responses.size(), 3u);
    EXPECT_EQ(rollout.extracted[2], "2");
    ASSERT_EQ(server.requests.size(), 1u);
    const auto& req = server.requests[0];
    EXPECT_EQ(req["model"], "solver-model");
    EXPECT_EQ(req["messages"][0]["role"], "system");
    EXPECT_EQ(req["messages"][0]["content"], prompts.solver_system);
    EXPECT_EQ(req["messages"][1]["content"],
              render_template(prompts.solver_user, {{"problem", "What is 2+2?"}}));
    EXPECT_EQ(server.auth[0], "Bearer sekrit");

    auto embedder = make_http_embedder(http_spec(Role::embedder, server.url(), "emb"), transport);
    EXPECT_EQ(embedder->embed("abcd"), (std::vector<double>{4.0, 1.0, 0.0}));
}

TEST(Http, LogprobsAreExponentiated) {
    FakeServer server;
    auto spec = http_spec(Role::challenger, server.url(), "ch");
    spec.logprob_top_k = 2;
    auto ch = make_http_challenger(spec, std::make_shared<HttpTransport>(server.url(), ""));
    EXPECT_TRUE(ch->logprobs_capable());
    const auto out = ch->propose({{"user", "go"}}, 2, 1, GenerationContext{});
    ASSERT_TRUE(out[0].logprobs);
    EXPECT_NEAR(out[0].logprobs->positions[0][0].probability, 0.75, 1e-12);
}

TEST(Http, ServerErrorsAreRetried) {
    FakeServer server;
    server.fail_next = 2;
    auto transport = std::make_shared<RetryingTransport>(
        std::make_shared<HttpTransport>(server.url(), ""), RetryPolicy{3, {std::chrono::milliseconds(0)}});
    auto judge = make_http_judge(http_spec(Role::judge, server.url(), "judge"), transport);
    EXPECT_NO_THROW(judge->complete({{"user", "hi"}}));
    EXPECT_EQ(server.requests.size(), 3u);
}

TEST(Http, UnreachableEndpointFailsAfterRetries) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    const std::string url = "http://127.0.0.1:" + std::to_string(port);
    int sleeps = 0;
    auto transport = std::make_shared<RetryingTransport>(
        std::make_shared<HttpTransport>(url, "", std::chrono::seconds(2)),
        RetryPolicy{3, {std::chrono::milliseconds(1)}}, [&](auto) { ++sleeps; });
    auto solver = make_http_solver(http_spec(Role::solver, url, "m"), transport);
    try {
        solve(*solver, PromptSet::builtin(), Question("q", "x", 1), 1, 0);
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts().size(), 3u);
    }
    EXPECT_EQ(sleeps, 2);
}

TEST(Http, RecordThenReplayOffline) {
    test::TempDir dir("replay");
    const auto log = dir / "log.jsonl";
    std::vector<std::string> live;
    {
        FakeServer server;
        auto rec = std::make_shared<RecordingTransport>(std::make_shared<HttpTransport>(server.url(), ""), log);
        auto solver = make_http_solver(http_spec(Role::solver, server.url(), "m"), rec);
        live = solve(*solver, PromptSet::builtin(), Question("q", "x", 1), 2, 5).responses;
    }
    auto replay = std::make_shared<ReplayTransport>(log);
    auto solver = make_http_solver(http_spec(Role::solver, "http://127.0.0.1:1", "m"), replay);
    EXPECT_EQ(solve(*solver, PromptSet::builtin(), Question("q", "x", 1), 2, 5).responses, live);
    EXPECT_THROW(solve(*solver, PromptSet::builtin(), Question("q", "x", 1), 2, 5), TransportError);
}

TEST(Http, SuiteFromProfileUsesEnvOverrides) {
    FakeServer server;
    ::setenv("SPDIV_SOLVER_ENDPOINT", server.url().c_str(), 1);
    ::setenv("SPDIV_SOLVER_MODEL", "env-model", 1);
    json profile;
    for (const char* role : {"challenger", "solver", "coder", "embedder", "judge"})
        profile[role] = {{"kind", "http"}, {"endpoint", server.url()}, {"model", std::string(role) + "-m"}};
    profile["solver"]["endpoint"] = "http://127.0.0.1:1";
    auto suite = make_http_suite(profile);
    ::unsetenv("SPDIV_SOLVER_ENDPOINT");
    ::unsetenv("SPDIV_SOLVER_MODEL");
    suite.solver->sample({{"user", "hi"}}, 1, 0);
    suite.coder->complete({{"user", "code"}});
    ASSERT_EQ(server.requests.size(), 2u);
    EXPECT_EQ(server.requests[0]["model"], "env-model");
    EXPECT_EQ(server.requests[1]["model"], "coder-m");
    EXPECT_EQ(server.requests[1]["temperature"], 0.0);
}

TEST(Prompts, BuiltinMatchesTemplateFiles) {
    const auto builtin = PromptSet::builtin();
    const auto loaded = PromptSet::load(std::filesystem::path(SPDIV_SCENARIOS).parent_path() / "templates");
    EXPECT_EQ(builtin, loaded);
    EXPECT_NE(builtin.code_generation.find("Strictly NO Comments"), std::string::npos);
    EXPECT_NE(builtin.code_generation.find("def solver(n1=35, n2=94)"), std::string::npos);
    EXPECT_NE(builtin.repetition_judge.find("Answer with ONLY one word"), std::string::npos);
    EXPECT_NE(builtin.solver_system.find("\\boxed{}"), std::string::npos);
}

TEST(Prompts, RenderTemplateIsSinglePass) {
    EXPECT_EQ(render_template("a {x} b {y} {z}", {{"x", "{y}"}, {"y", "Y"}}), "a {y} b Y {z}");
    EXPECT_EQ(render_template("def f(): return {1}", {}), "def f(): return {1}");
    const std::vector<std::string> refs = {"one", "two"};
    EXPECT_EQ(format_reference_problems(refs), "Reference 1:\none\n\nReference 2:\ntwo");
}

TEST(Judge, PromptsCarrySubstitutions) {
    struct Capture : JudgeBackend {
        std::vector<ChatMessage> last;
        std::string reply = "NOVEL";
        std::string complete(const std::vector<ChatMessage>& m) override {
            last = m;
            return reply;
        }
    } judge;
    const auto prompts = PromptSet::builtin();
    std::vector<Question> refs = {Question("r1", "old one", 1), Question("r2", "old two", 1)};
    EXPECT_EQ(judge_duplicate(judge, prompts, Question("n", "new one", 2), refs), Verdict::novel);
    const auto& content = judge.last.back().content;
    EXPECT_NE(content.find("Reference 2:\nold two"), std::string::npos);
    EXPECT_NE(content.find("new one"), std::string::npos);
    EXPECT_EQ(content.find("{new_problem}"), std::string::npos);

    judge.reply = "Yes";
    EXPECT_TRUE(judge_answer(judge, prompts, "12", "12"));
    judge.reply = "No.";
    EXPECT_FALSE(judge_answer(judge, prompts, "12", "13"));
}
