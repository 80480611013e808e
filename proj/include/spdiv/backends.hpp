#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spdiv/core.hpp"
#include "spdiv/prompts.hpp"
#include "spdiv/reward.hpp"

namespace spdiv {

class MemoryBank;

enum class Role { challenger, solver, coder, embedder, judge };
enum class BackendKind { http, mock };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct RetryPolicy {
    int attempts = 3;
    /// Wait before retry i (0-based); the last entry repeats if the list is short.
    std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500),
                                                   std::chrono::milliseconds(2000)};
};

struct BackendSpec {
    Role role = Role::solver;
    BackendKind kind = BackendKind::mock;
    std::string endpoint;  // base URL, http only
    std::string model_name;
    std::string api_key_env;  // name of the env var holding a bearer token
    double temperature = 1.0;
    double top_p = 0.99;
    int max_in_flight = 4;
    RetryPolicy retry;
    int logprob_top_k = 0;  // 0 = no logprob capability
    std::uint64_t seed = 0;
    std::chrono::milliseconds timeout{std::chrono::seconds(120)};
};

/// Defaults per role: rollout temperature 1.0 / top-p 0.99 for challenger and
/// solver, temperature 0 for the coder and judge.
BackendSpec default_spec(Role role, BackendKind kind = BackendKind::mock);

/// Throws ConfigError on an inconsistent spec.
void validate_spec(const BackendSpec& spec);

BackendSpec spec_from_json(const nlohmann::json& j, Role role);

/// A backend call that failed after all retries. `attempts()` lists one
/// message per request issued.
class TransportError : public Error {
public:
    TransportError(const std::string& what, std::vector<std::string> attempts = {})
        : Error(what), attempts_(std::move(attempts)) {}
    const std::vector<std::string>& attempts() const noexcept { return attempts_; }

private:
    std::vector<std::string> attempts_;
};

// Wire level -----------------------------------------------------------------

/// JSON POST channel. Implementations throw TransportError on failure.
class Transport {
public:
    virtual ~Transport() = default;
    virtual nlohmann::json post(const std::string& path, const nlohmann::json& body) = 0;
};

class HttpTransport : public Transport {
public:
    HttpTransport(std::string base_url, std::string api_key,
                  std::chrono::milliseconds timeout = std::chrono::seconds(120));
    nlohmann::json post(const std::string& path, const nlohmann::json& body) override;

private:
    std::string base_url_;
    std::string api_key_;
    std::chrono::milliseconds timeout_;
};

/// Retries the inner transport according to a RetryPolicy. `sleep` is
/// injectable so tests can observe the backoff schedule.
class RetryingTransport : public Transport {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    RetryingTransport(std::shared_ptr<Transport> inner, RetryPolicy policy, Sleeper sleep = {});
    nlohmann::json post(const std::string& path, const nlohmann::json& body) override;

private:
    std::shared_ptr<Transport> inner_;
    RetryPolicy policy_;
    Sleeper sleep_;
};

/// Forwards to `inner` and appends {"path","request","response"} lines to a
/// JSONL log.
class RecordingTransport : public Transport {
public:
    RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path log);
    nlohmann::json post(const std::string& path, const nlohmann::json& body) override;

private:
    std::shared_ptr<Transport> inner_;
    std::filesystem::path log_;
    std::mutex mu_;
};

/// Serves responses from a RecordingTransport log. Identical requests are
/// answered in the order they were recorded.
class ReplayTransport : public Transport {
public:
    explicit ReplayTransport(const std::filesystem::path& log);
    nlohmann::json post(const std::string& path, const nlohmann::json& body) override;

private:
    struct Entry {
        std::string key;
        nlohmann::json response;
        bool used = false;
    };
    std::vector<Entry> entries_;
    std::mutex mu_;
};

// Chat / embedding payloads -------------------------------------------------

struct ChatMessage {
    std::string role;
    std::string content;
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct TokenProb {
    std::string token;
    double probability = 0.0;
};

/// Top-k next-token distributions, one per generated position.
struct TokenDistribution {
    std::vector<std::vector<TokenProb>> positions;
    bool renormalized = false;
};

struct Completion {
    std::string text;
    std::optional<TokenDistribution> logprobs;
};

inline constexpr std::string_view kChatPath = "/v1/chat/completions";
inline constexpr std::string_view kEmbeddingsPath = "/v1/embeddings";

nlohmann::json chat_payload(const BackendSpec& spec, const std::vector<ChatMessage>& messages,
                            int n, std::optional<std::uint64_t> seed);
std::vector<Completion> parse_chat_response(const nlohmann::json& response);
nlohmann::json embedding_payload(const BackendSpec& spec, const std::vector<std::string>& inputs);
std::vector<std::vector<double>> parse_embedding_response(const nlohmann::json& response);

/// Chat-completion client bound to one role. Enforces max_in_flight.
class ChatClient {
public:
    ChatClient(BackendSpec spec, std::shared_ptr<Transport> transport);
    const BackendSpec& spec() const noexcept { return spec_; }
    std::vector<Completion> complete(const std::vector<ChatMessage>& messages, int n,
                                     std::optional<std::uint64_t> seed);

private:
    BackendSpec spec_;
    std::shared_ptr<Transport> transport_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
};

class EmbeddingClient {
public:
    EmbeddingClient(BackendSpec spec, std::shared_ptr<Transport> transport);
    const BackendSpec& spec() const noexcept { return spec_; }
    std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs);

private:
    BackendSpec spec_;
    std::shared_ptr<Transport> transport_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
};

// Role contracts --------------------------------------------------------------

/// What the challenger can see of the current training signal. The mock
/// penalty-aware challenger uses it; HTTP challengers ignore it.
struct GenerationContext {
    std::uint32_t iteration = 0;
    double alpha = 1.0;
    double beta = 1.0;
    /// P_MAP a candidate question would receive against the current bank.
    std::function<double(const std::string& question_text)> map_penalty_probe;
};

class ChallengerBackend {
public:
    virtual ~ChallengerBackend() = default;
    virtual std::vector<Completion> propose(const std::vector<ChatMessage>& messages,
                                            std::size_t n, std::uint64_t seed,
                                            const GenerationContext& ctx) = 0;
    virtual bool logprobs_capable() const = 0;
};

class SolverBackend {
public:
    virtual ~SolverBackend() = default;
    virtual std::vector<std::string> sample(const std::vector<ChatMessage>& messages, int k,
                                            std::uint64_t seed) = 0;
};

class CoderBackend {
public:
    virtual ~CoderBackend() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

/// The five model roles. Each slot only accepts its own role's interface, so
/// a solver request cannot reach a coder.
struct BackendSuite {
    std::unique_ptr<ChallengerBackend> challenger;
    std::unique_ptr<SolverBackend> solver;
    std::unique_ptr<CoderBackend> coder;
    std::unique_ptr<EmbedderBackend> embedder;
    std::unique_ptr<JudgeBackend> judge;
    PromptSet prompts = PromptSet::builtin();
    /// Concurrency used by the harness for per-question work.
    int max_in_flight = 1;
};

std::unique_ptr<ChallengerBackend> make_http_challenger(BackendSpec spec, std::shared_ptr<Transport> t);
std::unique_ptr<SolverBackend> make_http_solver(BackendSpec spec, std::shared_ptr<Transport> t);
std::unique_ptr<CoderBackend> make_http_coder(BackendSpec spec, std::shared_ptr<Transport> t);
std::unique_ptr<EmbedderBackend> make_http_embedder(BackendSpec spec, std::shared_ptr<Transport> t);
std::unique_ptr<JudgeBackend> make_http_judge(BackendSpec spec, std::shared_ptr<Transport> t);

/// Builds an HTTP suite from a backend profile document:
/// {"challenger": {...}, "solver": {...}, "coder": {...}, "embedder": {...},
///  "judge": {...}, "record_log": "optional path", "replay_log": "optional path"}.
/// Endpoints and models may come from SPDIV_<ROLE>_ENDPOINT / SPDIV_<ROLE>_MODEL.
BackendSuite make_http_suite(const nlohmann::json& profile);

// Operations --------------------------------------------------------------------

struct GeneratedQuestion {
    std::string raw;
    std::optional<std::string> text;
    std::optional<std::string> claimed_answer;
    bool well_formed = false;
    std::optional<TokenDistribution> logprobs;
};

/// Parses `<question>...</question>` followed by a trailing \boxed{...}.
GeneratedQuestion parse_challenger_output(std::string raw);

std::vector<GeneratedQuestion> generate_questions(ChallengerBackend& challenger,
                                                  const PromptSet& prompts, std::size_t n,
                                                  std::uint64_t seed,
                                                  const GenerationContext& ctx);

SolverRollout solve(SolverBackend& solver, const PromptSet& prompts, const Question& q, int k,
                    std::uint64_t seed);

enum class Verdict { novel, duplicate };

/// Last NOVEL/DUPLICATE token wins; anything else counts as duplicate.
Verdict parse_verdict(std::string_view reply);

std::string repetition_judge_prompt(const PromptSet& prompts, const std::string& new_problem,
                                    std::span<const std::string> refs);

Verdict judge_duplicate(JudgeBackend& judge, const PromptSet& prompts, const Question& new_q,
                        std::span<const Question> refs);

/// Answer re-check with the answer-checker prompt; true iff the reply is Yes.
bool judge_answer(JudgeBackend& judge, const PromptSet& prompts, const std::string& answer,
                  const std::string& ground_truth);

}  // namespace spdiv
