#include "spdiv/reward.hpp"

#include <algorithm>
#include <map>

namespace spdiv {

std::optional<std::string> extract_answer(std::string_view solution) {
    static constexpr std::string_view kOpen = "\\boxed{";
    const auto pos = solution.rfind(kOpen);
    if (pos == std::string_view::npos) return std::nullopt;

    const std::size_t start = pos + kOpen.size();
    int depth = 1;
    for (std::size_t i = start; i < solution.size(); ++i) {
        if (solution[i] == '{') {
            ++depth;
        } else if (solution[i] == '}') {
            if (--depth == 0) return normalize_answer(solution.substr(start, i - start));
        }
    }
    return std::nullopt;
}

SolverRollout make_rollout(std::string question_id, std::vector<std::string> responses) {
    if (responses.empty()) throw Error("rollout needs at least one response");
    SolverRollout r;
    r.question_id = std::move(question_id);
    r.extracted.reserve(responses.size());
    for (const auto& resp : responses) r.extracted.push_back(extract_answer(resp));
    r.responses = std::move(responses);
    return r;
}

AnswerGroupSet group_answers(const SolverRollout& rollout) {
    AnswerGroupSet out;
    out.total = static_cast<int>(rollout.extracted.size());

    std::map<std::string, int> counts;
    int unparsed = 0;
    for (const auto& a : rollout.extracted) {
        if (a)
            ++counts[*a];
        else
            ++unparsed;
    }
    for (auto& [answer, count] : counts) out.groups.push_back({answer, count, true});
    for (int i = 0; i < unparsed; ++i)
        out.groups.push_back({"<unparsed:" + std::to_string(i) + ">", 1, false});

    std::stable_sort(out.groups.begin(), out.groups.end(),
                     [](const AnswerGroup& a, const AnswerGroup& b) {
                         if (a.count != b.count) return a.count > b.count;
                         if (a.parseable != b.parseable) return a.parseable;
                         if (a.parseable) return a.answer < b.answer;
                         return false;  // unparsed groups keep response order
                     });
    return out;
}

double consistency_score(const AnswerGroupSet& groups) {
    if (groups.total < 1 || groups.groups.empty())
        throw Error("consistency score needs K >= 1");
    return static_cast<double>(groups.groups.front().count) / groups.total;
}

double uncertainty_reward(double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error("consistency score out of [0,1]");
    return std::min(s, 1.0 - s);
}

std::optional<std::string> pseudo_label(const AnswerGroupSet& groups) {
    if (groups.groups.empty()) return std::nullopt;
    const auto& top = groups.groups.front();
    if (!top.parseable) return std::nullopt;
    return top.answer;
}

int solver_reward(const std::optional<std::string>& answer, std::string_view label) {
    return answer && normalize_answer(*answer) == normalize_answer(label) ? 1 : 0;
}

bool is_valid(double s, const Config& cfg) { return cfg.valid_lo <= s && s <= cfg.valid_hi; }

}  // namespace spdiv
