#include "spdiv/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdlib>
#include <thread>

#include "spdiv/io.hpp"

namespace spdiv {

std::string_view to_string(Role r) {
    switch (r) {
        case Role::challenger: return "challenger";
        case Role::solver: return "solver";
        case Role::coder: return "coder";
        case Role::embedder: return "embedder";
        case Role::judge: return "judge";
    }
    return "?";
}

Role role_from_string(std::string_view s) {
    for (Role r : {Role::challenger, Role::solver, Role::coder, Role::embedder, Role::judge})
        if (to_string(r) == s) return r;
    throw ConfigError("role", "unknown backend role '" + std::string(s) + "'");
}

BackendSpec default_spec(Role role, BackendKind kind) {
    BackendSpec s;
    s.role = role;
    s.kind = kind;
    s.api_key_env = "SPDIV_API_KEY";
    switch (role) {
        case Role::challenger:
        case Role::solver:
            s.temperature = 1.0;
            s.top_p = 0.99;
            break;
        case Role::coder:
            s.temperature = 0.0;
            s.top_p = 1.0;
            s.model_name = "Qwen2.5-Coder-7B";
            break;
        case Role::embedder:
            s.temperature = 0.0;
            s.top_p = 1.0;
            s.model_name = "jina-code-embeddings-1.5b";
            break;
        case Role::judge:
            s.temperature = 0.0;
            s.top_p = 1.0;
            s.model_name = "gpt-4o";
            break;
    }
    return s;
}

void validate_spec(const BackendSpec& spec) {
    const std::string who(to_string(spec.role));
    if (spec.kind == BackendKind::http) {
        if (spec.endpoint.empty()) throw ConfigError(who + ".endpoint", who + ": http backend needs an endpoint");
        if (spec.model_name.empty()) throw ConfigError(who + ".model", who + ": http backend needs a model name");
    }
    if (!(spec.temperature >= 0.0)) throw ConfigError(who + ".temperature", who + ": temperature must be >= 0");
    if (!(spec.top_p > 0.0 && spec.top_p <= 1.0)) throw ConfigError(who + ".top_p", who + ": top_p out of (0,1]");
    if (spec.max_in_flight < 1) throw ConfigError(who + ".max_in_flight", who + ": max_in_flight must be positive");
    if (spec.retry.attempts < 1) throw ConfigError(who + ".retry", who + ": retry attempts must be positive");
    if (spec.logprob_top_k < 0) throw ConfigError(who + ".logprob_top_k", who + ": logprob_top_k must be >= 0");
}

BackendSpec spec_from_json(const nlohmann::json& j, Role role) {
    const std::string kind = j.value("kind", std::string("http"));
    if (kind != "http" && kind != "mock")
        throw ConfigError(std::string(to_string(role)) + ".kind", "backend kind must be http or mock");
    BackendSpec s = default_spec(role, kind == "http" ? BackendKind::http : BackendKind::mock);
    try {
        s.endpoint = j.value("endpoint", s.endpoint);
        s.model_name = j.value("model", s.model_name);
        s.api_key_env = j.value("api_key_env", s.api_key_env);
        s.temperature = j.value("temperature", s.temperature);
        s.top_p = j.value("top_p", s.top_p);
        s.max_in_flight = j.value("max_in_flight", s.max_in_flight);
        s.logprob_top_k = j.value("logprob_top_k", s.logprob_top_k);
        s.seed = j.value("seed", s.seed);
        if (j.contains("timeout_ms")) s.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<long>());
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            s.retry.attempts = r.value("attempts", s.retry.attempts);
            if (r.contains("backoff_ms")) {
                s.retry.backoff.clear();
                for (const auto& ms : r.at("backoff_ms")) s.retry.backoff.emplace_back(ms.get<long>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(to_string(role)), std::string(to_string(role)) + ": " + e.what());
    }
    return s;
}

// Transports ------------------------------------------------------------------

RetryingTransport::RetryingTransport(std::shared_ptr<Transport> inner, RetryPolicy policy,
                                     Sleeper sleep)
    : inner_(std::move(inner)), policy_(std::move(policy)), sleep_(std::move(sleep)) {
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

nlohmann::json RetryingTransport::post(const std::string& path, const nlohmann::json& body) {
    std::vector<std::string> trace;
    for (int attempt = 0; attempt < policy_.attempts; ++attempt) {
        try {
            return inner_->post(path, body);
        } catch (const TransportError& e) {
            trace.push_back(e.what());
        }
        if (attempt + 1 < policy_.attempts && !policy_.backoff.empty()) {
            const auto i = std::min<std::size_t>(static_cast<std::size_t>(attempt),
                                                 policy_.backoff.size() - 1);
            sleep_(policy_.backoff[i]);
        }
    }
    throw TransportError(path + ": giving up after " + std::to_string(policy_.attempts) +
                             " attempts (last: " + (trace.empty() ? "" : trace.back()) + ")",
                         std::move(trace));
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path log)
    : inner_(std::move(inner)), log_(std::move(log)) {}

nlohmann::json RecordingTransport::post(const std::string& path, const nlohmann::json& body) {
    auto response = inner_->post(path, body);
    nlohmann::json line = {{"path", path}, {"request", body}, {"response", response}};
    std::lock_guard lock(mu_);
    append_file(log_, line.dump() + "\n");
    return response;
}

ReplayTransport::ReplayTransport(const std::filesystem::path& log) {
    const std::string text = read_file(log);
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const auto line = std::string_view(text).substr(start, end - start);
        start = end + 1;
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        entries_.push_back({j.at("path").get<std::string>() + "\n" + j.at("request").dump(),
                            j.at("response"), false});
    }
}

nlohmann::json ReplayTransport::post(const std::string& path, const nlohmann::json& body) {
    const std::string key = path + "\n" + body.dump();
    std::lock_guard lock(mu_);
    for (auto& e : entries_) {
        if (!e.used && e.key == key) {
            e.used = true;
            return e.response;
        }
    }
    throw TransportError("replay log has no unused response for " + path);
}

// Payloads ----------------------------------------------------------------------

nlohmann::json chat_payload(const BackendSpec& spec, const std::vector<ChatMessage>& messages,
                            int n, std::optional<std::uint64_t> seed) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body = {{"model", spec.model_name}, {"messages", std::move(msgs)},
                           {"temperature", spec.temperature}, {"top_p", spec.top_p}, {"n", n}};
    if (seed) body["seed"] = *seed;
    if (spec.logprob_top_k > 0) {
        body["logprobs"] = true;
        body["top_logprobs"] = spec.logprob_top_k;
    }
    return body;
}

std::vector<Completion> parse_chat_response(const nlohmann::json& response) {
    try {
        std::vector<std::pair<long, Completion>> indexed;
        long fallback = 0;
        for (const auto& choice : response.at("choices")) {
            Completion c;
            const auto& content = choice.at("message").at("content");
            c.text = content.is_null() ? std::string() : content.get<std::string>();
            if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
                choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
                TokenDistribution dist;
                for (const auto& pos : choice["logprobs"]["content"]) {
                    std::vector<TokenProb> probs;
                    for (const auto& tp : pos.value("top_logprobs", nlohmann::json::array()))
                        probs.push_back({tp.at("token").get<std::string>(),
                                         std::exp(tp.at("logprob").get<double>())});
                    dist.positions.push_back(std::move(probs));
                }
                c.logprobs = std::move(dist);
            }
            indexed.emplace_back(choice.value("index", fallback), std::move(c));
            ++fallback;
        }
        std::stable_sort(indexed.begin(), indexed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Completion> out;
        for (auto& [_, c] : indexed) out.push_back(std::move(c));
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed chat response: ") + e.what());
    }
}

nlohmann::json embedding_payload(const BackendSpec& spec, const std::vector<std::string>& inputs) {
    return {{"model", spec.model_name}, {"input", inputs}};
}

std::vector<std::vector<double>> parse_embedding_response(const nlohmann::json& response) {
    try {
        std::vector<std::pair<long, std::vector<double>>> indexed;
        long fallback = 0;
        for (const auto& item : response.at("data")) {
            indexed.emplace_back(item.value("index", fallback),
                                 item.at("embedding").get<std::vector<double>>());
            ++fallback;
        }
        std::stable_sort(indexed.begin(), indexed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::vector<double>> out;
        for (auto& [_, v] : indexed) out.push_back(std::move(v));
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed embedding response: ") + e.what());
    }
}

namespace {

class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<>& s_;
};

}  // namespace

ChatClient::ChatClient(BackendSpec spec, std::shared_ptr<Transport> transport)
    : spec_(std::move(spec)), transport_(std::move(transport)) {
    validate_spec(spec_);
    if (spec_.role == Role::embedder)
        throw ConfigError("embedder", "chat client cannot serve the embedder role");
    slots_ = std::make_unique<std::counting_semaphore<>>(spec_.max_in_flight);
}

std::vector<Completion> ChatClient::complete(const std::vector<ChatMessage>& messages, int n,
                                             std::optional<std::uint64_t> seed) {
    SlotGuard guard(*slots_);
    auto out = parse_chat_response(
        transport_->post(std::string(kChatPath), chat_payload(spec_, messages, n, seed)));
    if (out.size() != static_cast<std::size_t>(n))
        throw TransportError(std::string(to_string(spec_.role)) + ": expected " + std::to_string(n) +
                             " choices, got " + std::to_string(out.size()));
    return out;
}

EmbeddingClient::EmbeddingClient(BackendSpec spec, std::shared_ptr<Transport> transport)
    : spec_(std::move(spec)), transport_(std::move(transport)) {
    validate_spec(spec_);
    if (spec_.role != Role::embedder)
        throw ConfigError(std::string(to_string(spec_.role)),
                          "embedding client needs an embedder spec");
    slots_ = std::make_unique<std::counting_semaphore<>>(spec_.max_in_flight);
}

std::vector<std::vector<double>> EmbeddingClient::embed(const std::vector<std::string>& inputs) {
    SlotGuard guard(*slots_);
    auto out = parse_embedding_response(
        transport_->post(std::string(kEmbeddingsPath), embedding_payload(spec_, inputs)));
    if (out.size() != inputs.size())
        throw TransportError("embedder: expected " + std::to_string(inputs.size()) +
                             " vectors, got " + std::to_string(out.size()));
    return out;
}

// HTTP role backends ------------------------------------------------------------

namespace {

void require_role(const BackendSpec& spec, Role want) {
    if (spec.role != want)
        throw ConfigError(std::string(to_string(want)),
                          "spec for role '" + std::string(to_string(spec.role)) +
                              "' cannot back the " + std::string(to_string(want)) + " role");
}

class HttpChallenger final : public ChallengerBackend {
public:
    HttpChallenger(BackendSpec s, std::shared_ptr<Transport> t) : client_(std::move(s), std::move(t)) {}
    std::vector<Completion> propose(const std::vector<ChatMessage>& messages, std::size_t n,
                                    std::uint64_t seed, const GenerationContext&) override {
        return client_.complete(messages, static_cast<int>(n), seed);
    }
    bool logprobs_capable() const override { return client_.spec().logprob_top_k > 0; }

private:
    ChatClient client_;
};

class HttpSolver final : public SolverBackend {
public:
    HttpSolver(BackendSpec s, std::shared_ptr<Transport> t) : client_(std::move(s), std::move(t)) {}
    std::vector<std::string> sample(const std::vector<ChatMessage>& messages, int k,
                                    std::uint64_t seed) override {
        std::vector<std::string> out;
        for (auto& c : client_.complete(messages, k, seed)) out.push_back(std::move(c.text));
        return out;
    }

private:
    ChatClient client_;
};

class HttpCoder final : public CoderBackend {
public:
    HttpCoder(BackendSpec s, std::shared_ptr<Transport> t) : client_(std::move(s), std::move(t)) {}
    std::string complete(const std::vector<ChatMessage>& messages) override {
        return client_.complete(messages, 1, std::nullopt).front().text;
    }

private:
    ChatClient client_;
};

class HttpEmbedder final : public EmbedderBackend {
public:
    HttpEmbedder(BackendSpec s, std::shared_ptr<Transport> t) : client_(std::move(s), std::move(t)) {}
    std::vector<double> embed(const std::string& text) override {
        return client_.embed({text}).front();
    }

private:
    EmbeddingClient client_;
};

class HttpJudge final : public JudgeBackend {
public:
    HttpJudge(BackendSpec s, std::shared_ptr<Transport> t) : client_(std::move(s), std::move(t)) {}
    std::string complete(const std::vector<ChatMessage>& messages) override {
        return client_.complete(messages, 1, std::nullopt).front().text;
    }

private:
    ChatClient client_;
};

}  // namespace

std::unique_ptr<ChallengerBackend> make_http_challenger(BackendSpec spec, std::shared_ptr<Transport> t) {
    require_role(spec, Role::challenger);
    return std::make_unique<HttpChallenger>(std::move(spec), std::move(t));
}
std::unique_ptr<SolverBackend> make_http_solver(BackendSpec spec, std::shared_ptr<Transport> t) {
    require_role(spec, Role::solver);
    return std::make_unique<HttpSolver>(std::move(spec), std::move(t));
}
std::unique_ptr<CoderBackend> make_http_coder(BackendSpec spec, std::shared_ptr<Transport> t) {
    require_role(spec, Role::coder);
    return std::make_unique<HttpCoder>(std::move(spec), std::move(t));
}
std::unique_ptr<EmbedderBackend> make_http_embedder(BackendSpec spec, std::shared_ptr<Transport> t) {
    require_role(spec, Role::embedder);
    return std::make_unique<HttpEmbedder>(std::move(spec), std::move(t));
}
std::unique_ptr<JudgeBackend> make_http_judge(BackendSpec spec, std::shared_ptr<Transport> t) {
    require_role(spec, Role::judge);
    return std::make_unique<HttpJudge>(std::move(spec), std::move(t));
}

namespace {

std::string env_or(const std::string& name, const std::string& fallback) {
    const char* v = std::getenv(name.c_str());
    return v && *v ? std::string(v) : fallback;
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

BackendSuite make_http_suite(const nlohmann::json& profile) {
    std::shared_ptr<Transport> replay;
    if (profile.contains("replay_log"))
        replay = std::make_shared<ReplayTransport>(profile.at("replay_log").get<std::string>());
    const std::string record_log = profile.value("record_log", std::string());

    auto build = [&](Role role) {
        const std::string name(to_string(role));
        BackendSpec spec = spec_from_json(profile.value(name, nlohmann::json::object()), role);
        if (spec.kind != BackendKind::http)
            throw ConfigError(name + ".kind", name + ": backend profiles describe http backends");
        spec.endpoint = env_or("SPDIV_" + upper(name) + "_ENDPOINT", spec.endpoint);
        spec.model_name = env_or("SPDIV_" + upper(name) + "_MODEL", spec.model_name);
        validate_spec(spec);
        std::shared_ptr<Transport> t = replay;
        if (!t) {
            t = std::make_shared<HttpTransport>(spec.endpoint, env_or(spec.api_key_env, ""),
                                                spec.timeout);
            t = std::make_shared<RetryingTransport>(t, spec.retry);
            if (!record_log.empty()) t = std::make_shared<RecordingTransport>(t, record_log);
        }
        return std::pair{spec, t};
    };

    BackendSuite suite;
    int in_flight = 1;
    {
        auto [s, t] = build(Role::challenger);
        in_flight = s.max_in_flight;
        suite.challenger = make_http_challenger(s, t);
    }
    {
        auto [s, t] = build(Role::solver);
        in_flight = std::min(in_flight, s.max_in_flight);
        suite.solver = make_http_solver(s, t);
    }
    {
        auto [s, t] = build(Role::coder);
        suite.coder = make_http_coder(s, t);
    }
    {
        auto [s, t] = build(Role::embedder);
        suite.embedder = make_http_embedder(s, t);
    }
    {
        auto [s, t] = build(Role::judge);
        suite.judge = make_http_judge(s, t);
    }
    suite.max_in_flight = in_flight;
    if (profile.contains("prompts_dir"))
        suite.prompts = PromptSet::load(profile.at("prompts_dir").get<std::string>());
    return suite;
}

// Operations --------------------------------------------------------------------

GeneratedQuestion parse_challenger_output(std::string raw) {
    GeneratedQuestion g;
    static constexpr std::string_view kOpen = "<question>";
    static constexpr std::string_view kClose = "</question>";
    const auto open = raw.find(kOpen);
    const auto close = open == std::string::npos ? std::string::npos : raw.find(kClose, open);
    if (open != std::string::npos && close != std::string::npos) {
        std::string text = trim(std::string_view(raw).substr(open + kOpen.size(),
                                                             close - open - kOpen.size()));
        if (!text.empty()) g.text = std::move(text);
        g.claimed_answer = extract_answer(std::string_view(raw).substr(close + kClose.size()));
    }
    g.well_formed = g.text.has_value() && g.claimed_answer.has_value();
    g.raw = std::move(raw);
    return g;
}

std::vector<GeneratedQuestion> generate_questions(ChallengerBackend& challenger,
                                                  const PromptSet& prompts, std::size_t n,
                                                  std::uint64_t seed,
                                                  const GenerationContext& ctx) {
    const std::vector<ChatMessage> messages = {{"system", prompts.challenger_system},
                                               {"user", prompts.challenger_user}};
    auto completions = challenger.propose(messages, n, seed, ctx);
    if (completions.size() != n)
        throw TransportError("challenger returned " + std::to_string(completions.size()) +
                             " completions, expected " + std::to_string(n));
    std::vector<GeneratedQuestion> out;
    out.reserve(n);
    for (auto& c : completions) {
        auto g = parse_challenger_output(std::move(c.text));
        g.logprobs = std::move(c.logprobs);
        out.push_back(std::move(g));
    }
    return out;
}

SolverRollout solve(SolverBackend& solver, const PromptSet& prompts, const Question& q, int k,
                    std::uint64_t seed) {
    if (k < 1) throw Error("solve needs K >= 1");
    const std::vector<ChatMessage> messages = {
        {"system", prompts.solver_system},
        {"user", render_template(prompts.solver_user, {{"problem", q.text}})}};
    auto responses = solver.sample(messages, k, seed);
    if (responses.size() != static_cast<std::size_t>(k))
        throw TransportError("solver returned " + std::to_string(responses.size()) +
                             " responses, expected " + std::to_string(k));
    return make_rollout(q.id, std::move(responses));
}

Verdict parse_verdict(std::string_view reply) {
    std::string last;
    std::size_t i = reply.size();
    while (i > 0) {
        // scan tokens from the end, skipping ones with no letters
        while (i > 0 && std::isspace(static_cast<unsigned char>(reply[i - 1]))) --i;
        const std::size_t end = i;
        while (i > 0 && !std::isspace(static_cast<unsigned char>(reply[i - 1]))) --i;
        std::string tok;
        for (char c : reply.substr(i, end - i))
            if (std::isalpha(static_cast<unsigned char>(c)))
                tok.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (!tok.empty()) {
            last = std::move(tok);
            break;
        }
    }
    return last == "NOVEL" ? Verdict::novel : Verdict::duplicate;
}

std::string repetition_judge_prompt(const PromptSet& prompts, const std::string& new_problem,
                                    std::span<const std::string> refs) {
    return render_template(prompts.repetition_judge,
                           {{"reference_problems", format_reference_problems(refs)},
                            {"new_problem", new_problem}});
}

Verdict judge_duplicate(JudgeBackend& judge, const PromptSet& prompts, const Question& new_q,
                        std::span<const Question> refs) {
    std::vector<std::string> texts;
    for (const auto& r : refs) texts.push_back(r.text);
    const std::vector<ChatMessage> messages = {
        {"user", repetition_judge_prompt(prompts, new_q.text, texts)}};
    return parse_verdict(judge.complete(messages));
}

bool judge_answer(JudgeBackend& judge, const PromptSet& prompts, const std::string& answer,
                  const std::string& ground_truth) {
    const std::vector<ChatMessage> messages = {
        {"system", prompts.answer_check_system},
        {"user", render_template(prompts.answer_check_user,
                                 {{"answer", answer}, {"response", ground_truth}})}};
    std::string reply = trim(judge.complete(messages));
    for (auto& c : reply) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return reply.rfind("yes", 0) == 0;
}

}  // namespace spdiv
