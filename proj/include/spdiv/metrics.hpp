#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spdiv/backends.hpp"
#include "spdiv/core.hpp"
#include "spdiv/memory.hpp"

namespace spdiv {

/// Mean over questions of 0.5 * max cosine + 0.5 * mean cosine to the bank.
/// Undefined (nullopt) for an empty bank or an empty question set.
std::optional<double> cross_iteration_repetition(std::span<const Embedding> questions,
                                                 const MemoryBank& bank);

/// Mean cosine over ordered pairs i != j. Undefined for fewer than 2 questions.
std::optional<double> intra_iteration_repetition(std::span<const Embedding> questions);

/// Mean Euclidean distance to the (unnormalized) centroid. Throws Error on an
/// empty set.
double distribution_spread(std::span<const Embedding> questions);

/// Entropy in nats of one top-k distribution after renormalizing it to sum 1.
double renormalized_entropy(std::span<const TokenProb> position);

/// Mean over rollouts of the mean positional entropy. Positions with no
/// tokens and rollouts with no positions are skipped; nullopt when nothing
/// remains.
std::optional<double> challenger_entropy(std::span<const TokenDistribution> rollouts);

/// Bank indices of the k most similar records by cosine, most similar first;
/// ties keep bank order.
std::vector<std::size_t> nearest_records(const MemoryBank& bank, const Embedding& e, std::size_t k);

struct JudgeOutcome {
    std::vector<std::size_t> neighbors;
    std::optional<Verdict> verdict;  // absent when the judge call failed
    std::string error;
};

struct LlmRepResult {
    std::optional<double> ratio;  // duplicates / judged; undefined when nothing was judged
    std::size_t judged = 0;
    std::size_t duplicates = 0;
    std::size_t failures = 0;
    double coverage = 0.0;  // judged / questions
    bool partial = false;
    std::vector<JudgeOutcome> outcomes;  // one per question
};

/// One judge call per question with its top-k bank neighbors as references.
/// Undefined when the bank holds fewer than k records. Judge transport
/// failures mark the result partial instead of aborting.
LlmRepResult llm_rep_ratio(std::span<const Question> questions,
                           std::span<const Embedding> embeddings, const MemoryBank& bank,
                           JudgeBackend& judge, const PromptSet& prompts, std::size_t k = 3,
                           int max_in_flight = 1);

struct IterationCounts {
    std::size_t generated = 0;
    std::size_t valid = 0;
    std::size_t invalid = 0;
    std::size_t malformed = 0;
    std::size_t replayed = 0;
    std::size_t solver_set = 0;
};

struct IterationReport {
    std::uint32_t iteration = 0;
    IterationCounts counts;
    std::optional<double> cross_iter_rep;
    std::optional<double> intra_iter_rep;
    std::optional<double> llm_rep_ratio;
    double llm_rep_coverage = 0.0;
    std::optional<double> spread;
    std::optional<double> challenger_entropy;
};

/// Column order of report.csv.
std::string report_csv_header();
/// Undefined metrics are written as "undefined"; missing entropy as "unavailable".
std::string report_csv_row(const IterationReport& r);
std::vector<IterationReport> parse_report_csv(std::string_view text);

nlohmann::ordered_json report_to_json(const IterationReport& r);
IterationReport report_from_json(const nlohmann::json& j);

/// Fixed-width trend table, one row per iteration.
std::string render_trend_table(std::span<const IterationReport> reports);

/// Shortest round-trip decimal form used in every artifact.
std::string format_number(double v);

}  // namespace spdiv
