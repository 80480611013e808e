#include <gtest/gtest.h>

#include <algorithm>

#include "spdiv/reward.hpp"
#include "spdiv/rng.hpp"

using namespace spdiv;

namespace {

AnswerGroupSet groups_of(std::vector<std::optional<std::string>> answers) {
    SolverRollout r;
    r.question_id = "q";
    for (const auto& a : answers) {
        r.responses.push_back(a ? "\\boxed{" + *a + "}" : "no answer");
        r.extracted.push_back(a);
    }
    return group_answers(r);
}

}  // namespace

TEST(ExtractAnswer, Examples) {
    EXPECT_EQ(extract_answer("...so \\boxed{12}"), "12");
    EXPECT_EQ(extract_answer("\\boxed{3} wrong, actually \\boxed{5}"), "5");
    EXPECT_EQ(extract_answer("no box here"), std::nullopt);
    EXPECT_EQ(extract_answer("\\boxed{\\frac{1}{2}}"), "\\frac{1}{2}");
    EXPECT_EQ(extract_answer("\\boxed{7} then \\boxed{8"), std::nullopt);
    EXPECT_EQ(extract_answer("\\boxed{ 3 / 4 }"), "3/4");
}

TEST(GroupAnswers, Examples) {
    auto g = groups_of({"7", "7", "7", "7"});
    ASSERT_EQ(g.groups.size(), 1u);
    EXPECT_EQ(g.groups[0], (AnswerGroup{"7", 4, true}));
    EXPECT_EQ(g.total, 4);

    g = groups_of({"7", "7", "9", std::nullopt});
    ASSERT_EQ(g.groups.size(), 3u);
    EXPECT_EQ(g.groups[0].answer, "7");
    EXPECT_EQ(g.groups[0].count, 2);
    EXPECT_EQ(g.groups[1].answer, "9");
    EXPECT_EQ(g.groups[1].count, 1);
    EXPECT_FALSE(g.groups[2].parseable);
    EXPECT_EQ(g.groups[2].count, 1);

    g = groups_of({std::nullopt, std::nullopt});
    ASSERT_EQ(g.groups.size(), 2u);
    EXPECT_DOUBLE_EQ(consistency_score(g), 0.5);
    EXPECT_EQ(pseudo_label(g), std::nullopt);
}

TEST(ConsistencyScore, Examples) {
    EXPECT_DOUBLE_EQ(consistency_score(groups_of({"7", "7", "7", "7"})), 1.0);
    std::vector<std::optional<std::string>> split(5, "7");
    split.insert(split.end(), 5, "9");
    EXPECT_DOUBLE_EQ(consistency_score(groups_of(split)), 0.5);
    std::vector<std::optional<std::string>> v(6, "7");
    v.insert(v.end(), 3, "9");
    v.push_back("2");
    EXPECT_DOUBLE_EQ(consistency_score(groups_of(v)), 0.6);
}

TEST(UncertaintyReward, Examples) {
    EXPECT_EQ(uncertainty_reward(0.5), 0.5);
    EXPECT_EQ(uncertainty_reward(1.0), 0.0);
    EXPECT_DOUBLE_EQ(uncertainty_reward(0.6), 0.4);
    EXPECT_THROW(uncertainty_reward(-0.01), Error);
    EXPECT_THROW(uncertainty_reward(1.01), Error);
}

TEST(UncertaintyReward, SymmetricWithPeakAtHalf) {
    for (int i = 0; i <= 1000; ++i) {
        const double s = i / 1000.0;
        // 0.001 and 0.999 are not exact mirrors in binary, so allow representation error
        EXPECT_NEAR(uncertainty_reward(s), uncertainty_reward((1000 - i) / 1000.0), 1e-15) << s;
        if (i != 500) {
            EXPECT_LT(uncertainty_reward(s), 0.5);
        }
    }
}

TEST(PseudoLabel, Examples) {
    std::vector<std::optional<std::string>> v(6, "7");
    v.insert(v.end(), 4, "9");
    EXPECT_EQ(pseudo_label(groups_of(v)), "7");
    std::vector<std::optional<std::string>> tie(5, "9");
    tie.insert(tie.end(), 5, "7");
    EXPECT_EQ(pseudo_label(groups_of(tie)), "7");
}

TEST(PseudoLabel, OrderIndependentAndTotalsConserved) {
    Rng rng(3);
    const std::vector<std::optional<std::string>> pool = {"1", "2", "3", "10", std::nullopt};
    for (int trial = 0; trial < 500; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_index(12));
        std::vector<std::optional<std::string>> answers;
        for (int i = 0; i < k; ++i) answers.push_back(pool[rng.uniform_index(pool.size())]);
        const auto g = groups_of(answers);
        int sum = 0;
        for (const auto& x : g.groups) sum += x.count;
        EXPECT_EQ(sum, k);
        EXPECT_EQ(g.total, k);
        auto shuffled = answers;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
        EXPECT_EQ(pseudo_label(groups_of(shuffled)), pseudo_label(g));
        EXPECT_EQ(consistency_score(groups_of(shuffled)), consistency_score(g));
    }
}

TEST(SolverReward, Examples) {
    EXPECT_EQ(solver_reward("12", "12"), 1);
    EXPECT_EQ(solver_reward("13", "12"), 0);
    EXPECT_EQ(solver_reward(std::nullopt, "12"), 0);
}

TEST(IsValid, InclusiveBounds) {
    const Config c;
    EXPECT_TRUE(is_valid(0.3, c));
    EXPECT_TRUE(is_valid(0.8, c));
    EXPECT_FALSE(is_valid(0.81, c));
    EXPECT_TRUE(is_valid(0.55, c));
    EXPECT_FALSE(is_valid(0.2, c));
}

TEST(MakeRollout, RejectsEmptyAndExtracts) {
    EXPECT_THROW(make_rollout("q", {}), Error);
    const auto r = make_rollout("q", {"\\boxed{4}", "none"});
    EXPECT_EQ(r.extracted[0], "4");
    EXPECT_EQ(r.extracted[1], std::nullopt);
}
