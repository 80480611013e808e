#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spdiv/backends.hpp"
#include "spdiv/core.hpp"
#include "spdiv/memory.hpp"
#include "spdiv/metrics.hpp"
#include "spdiv/sam.hpp"

namespace spdiv {

// Scoring -------------------------------------------------------------------------

/// One question as seen by the reward: its text, its run embedding and code
/// (when available), and the uncertainty reward already derived from the
/// solver rollout.
struct ScoreItem {
    std::string id;
    std::optional<std::string> text;
    std::optional<Embedding> embedding;
    std::optional<std::string> code;
    double uncertainty = 0.0;
};

/// Code string of a bank record for the string-similarity ablation. May
/// return nullopt, in which case the record's question text is used.
using BankCodeLookup = std::function<std::optional<std::string>(const MemoryRecord&)>;

/// Max/mean similarity of one item to the bank along the configured path:
/// cosine of embeddings, BLEU over raw text (similarity_mode = bleu), or BLEU
/// over code strings (use_embedding_similarity = false). Items without text
/// get {-1, -1}.
SimilarityStats bank_similarity(const ScoreItem& item, const MemoryBank& bank, const Config& cfg,
                                const BankCodeLookup& bank_code = {});

/// Rewards for one batch. Every item counts towards the batch size; items
/// without text form singleton clusters. With use_map off, p_max and p_mean
/// are still reported and p_map is 0.
std::vector<RewardBreakdown> score_batch(std::span<const ScoreItem> items, const MemoryBank& bank,
                                         const Config& cfg, const BankCodeLookup& bank_code = {});

// Phases ------------------------------------------------------------------------

enum class ItemStatus { valid, invalid, malformed };
std::string_view to_string(ItemStatus s);
ItemStatus item_status_from_string(std::string_view s);

struct ChallengerItem {
    std::string id;
    std::uint32_t iteration = 0;
    std::string raw;
    std::optional<std::string> text;
    std::optional<std::string> claimed_answer;
    ItemStatus status = ItemStatus::malformed;
    std::optional<double> consistency;
    std::optional<std::string> pseudo_label;
    std::vector<std::optional<std::string>> solver_answers;
    std::optional<SamResult> sam;
    RewardBreakdown reward;
    std::optional<TokenDistribution> logprobs;
};

nlohmann::ordered_json to_json(const ChallengerItem& item);
ChallengerItem challenger_item_from_json(const nlohmann::json& j);

struct SolverEntry {
    std::string id;
    std::string text;
    std::string pseudo_label;
    QuestionSource source = QuestionSource::generated;
    std::uint32_t iteration = 0;
};

nlohmann::ordered_json to_json(const SolverEntry& e);
SolverEntry solver_entry_from_json(const nlohmann::json& j);

/// "t001-q0007"
std::string question_id(std::uint32_t iteration, std::size_t index);

/// A phase failed part-way. `partial` holds the items that completed.
class PhaseAborted : public Error {
public:
    PhaseAborted(const std::string& what, std::vector<ChallengerItem> partial)
        : Error(what), partial_(std::move(partial)) {}
    const std::vector<ChallengerItem>& partial() const noexcept { return partial_; }

private:
    std::vector<ChallengerItem> partial_;
};

/// Generates cfg.batch_size questions, solves each K times, embeds them and
/// scores the batch against `bank` (the bank as of the start of the iteration).
std::vector<ChallengerItem> run_challenger_phase(const Config& cfg, BackendSuite& suite,
                                                 SamPipeline& sam, const MemoryBank& bank,
                                                 std::uint32_t iteration, std::uint64_t seed);

struct SolverPhase {
    std::vector<SolverEntry> entries;  // current items first, then replayed ones
    std::vector<std::string> warnings;
};

SolverPhase run_solver_phase(const Config& cfg, const MemoryBank& bank,
                             std::span<const ChallengerItem> batch, std::uint32_t iteration,
                             std::uint64_t seed);

struct IterationMetrics {
    IterationReport report;
    std::vector<nlohmann::ordered_json> details;  // one per question with text
};

/// The five diagnostics over the questions of one batch. `bank` must be the
/// bank as of the start of the iteration. `judge` may be null, which leaves
/// the judge ratio undefined.
IterationMetrics compute_metrics(std::span<const ChallengerItem> batch, const MemoryBank& bank,
                                 JudgeBackend* judge, const PromptSet& prompts,
                                 bool entropy_capable, std::uint32_t iteration,
                                 int max_in_flight = 1);

/// Records ingested before `iteration`.
MemoryBank bank_before(const MemoryBank& bank, std::uint32_t iteration);

// Runs ----------------------------------------------------------------------------

/// A run directory: bank, SAM cache, state and one folder per iteration.
struct Run {
    std::filesystem::path dir;
    std::filesystem::path bank_path;
    Config cfg;
    std::uint64_t seed = 0;
    MemoryBank bank;
    std::unique_ptr<SamCache> cache;
    /// Next iteration to run; derived from the bank watermark, which is the
    /// last file written by an iteration.
    std::uint32_t next_iteration = 1;
};

/// Creates or resumes a run. Resuming with a different config or seed
/// throws ConfigError.
Run open_run(const std::filesystem::path& dir, const Config& cfg, std::uint64_t seed,
             std::optional<std::filesystem::path> bank_path = std::nullopt);

/// Test hook: raise InjectedCrash at a point of iteration `iteration`.
enum class CrashPoint { none, after_challenger, after_solver, after_artifacts, after_bank };

class InjectedCrash : public Error {
public:
    using Error::Error;
};

struct IterationOptions {
    CrashPoint crash = CrashPoint::none;
    std::uint32_t crash_iteration = 0;
};

struct IterationArtifacts {
    std::uint32_t iteration = 0;
    std::vector<ChallengerItem> challenger_batch;
    std::vector<SolverEntry> solver_set;
    IterationReport report;
    std::vector<std::string> warnings;
    std::filesystem::path dir;
};

/// challenger phase -> solver phase -> metrics -> artifacts -> SAM cache ->
/// bank (atomic, last) -> state. The run's bank and iteration counter change
/// only after the bank file is replaced.
IterationArtifacts run_iteration(Run& run, BackendSuite& suite, const IterationOptions& opts = {});

std::filesystem::path iteration_dir(const std::filesystem::path& run_dir, std::uint32_t iteration);

/// Reports of every finished iteration, read from the per-iteration folders.
std::vector<IterationReport> load_run_reports(const std::filesystem::path& run_dir);

std::vector<ChallengerItem> load_challenger_batch(const std::filesystem::path& file);

}  // namespace spdiv
