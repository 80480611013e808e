#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spdiv/core.hpp"

namespace spdiv {

/// K solver responses for one question and the answer extracted from each.
struct SolverRollout {
    std::string question_id;
    std::vector<std::string> responses;
    std::vector<std::optional<std::string>> extracted;
};

/// Content of the last balanced \boxed{...}, normalized. Absent when there is
/// no \boxed{ or the last one never closes.
std::optional<std::string> extract_answer(std::string_view solution);

/// Extracts every response. Throws Error when `responses` is empty.
SolverRollout make_rollout(std::string question_id, std::vector<std::string> responses);

AnswerGroupSet group_answers(const SolverRollout& rollout);

/// Largest group size over K.
double consistency_score(const AnswerGroupSet& groups);

/// min(s, 1 - s). Throws Error for s outside [0, 1].
double uncertainty_reward(double s);

/// Majority answer; ties go to the lexicographically smallest answer.
/// Absent when the largest group is an unparseable response.
std::optional<std::string> pseudo_label(const AnswerGroupSet& groups);

/// 1 iff `answer` is present and equal to `label`.
int solver_reward(const std::optional<std::string>& answer, std::string_view label);

/// Inclusive on both ends.
bool is_valid(double s, const Config& cfg);

}  // namespace spdiv
