#include <gtest/gtest.h>

#include <cmath>

#include "spdiv/metrics.hpp"
#include "support.hpp"

using namespace spdiv;
using nlohmann::json;
using test::basis;
using test::random_unit;

namespace {

std::vector<Embedding> embeddings_of(const json& rows) {
    std::vector<Embedding> out;
    for (const auto& r : rows) out.push_back(Embedding::from_normalized(r.get<std::vector<float>>()));
    return out;
}

MemoryBank bank_of(const std::vector<Embedding>& es, std::vector<std::string> texts = {}) {
    std::vector<BankCandidate> batch;
    for (std::size_t i = 0; i < es.size(); ++i)
        batch.push_back({Question("b" + std::to_string(i), i < texts.size() ? texts[i] : "bank " + std::to_string(i), 1),
                         es[i], 0.5, "1"});
    return update_bank(MemoryBank{}, batch, 1, Config{});
}

/// Random orthogonal matrix via Gram-Schmidt.
std::vector<std::vector<double>> random_rotation(Rng& rng, std::size_t d) {
    std::vector<std::vector<double>> q;
    while (q.size() < d) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.normal();
        for (const auto& u : q) {
            double p = 0.0;
            for (std::size_t k = 0; k < d; ++k) p += v[k] * u[k];
            for (std::size_t k = 0; k < d; ++k) v[k] -= p * u[k];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (auto& x : v) x /= n;
        q.push_back(v);
    }
    return q;
}

Embedding rotate(const std::vector<std::vector<double>>& r, const Embedding& e) {
    std::vector<double> out(r.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t k = 0; k < r.size(); ++k) out[i] += r[i][k] * e.values()[k];
    return Embedding(out);
}

}  // namespace

TEST(Metrics, MatchReferenceValues) {
    for (const auto& c : test::oracles()["metrics"]) {
        const auto q = embeddings_of(c["questions"]);
        const auto bank = bank_of(embeddings_of(c["bank"]));
        EXPECT_NEAR(*cross_iteration_repetition(q, bank), c["cross"].get<double>(), 1e-9);
        EXPECT_NEAR(*intra_iteration_repetition(q), c["intra"].get<double>(), 1e-9);
        EXPECT_NEAR(distribution_spread(q), c["spread"].get<double>(), 1e-9);
    }
}

TEST(Metrics, EntropyMatchesReferenceValues) {
    for (const auto& c : test::oracles()["entropy"]) {
        std::vector<TokenDistribution> rollouts;
        for (const auto& r : c["rollouts"]) {
            TokenDistribution d;
            for (const auto& pos : r) {
                std::vector<TokenProb> p;
                for (const auto& x : pos) p.push_back({"t" + std::to_string(p.size()), x.get<double>()});
                d.positions.push_back(p);
            }
            rollouts.push_back(d);
        }
        EXPECT_NEAR(*challenger_entropy(rollouts), c["entropy"].get<double>(), 1e-9);
    }
}

TEST(CrossIteration, Examples) {
    const auto e = basis(3, 0);
    EXPECT_NEAR(*cross_iteration_repetition(std::vector{e}, bank_of({e})), 1.0, 1e-12);
    EXPECT_EQ(*cross_iteration_repetition(std::vector{e}, bank_of({basis(3, 1), basis(3, 2)})), 0.0);
    EXPECT_FALSE(cross_iteration_repetition(std::vector{e}, MemoryBank{}));
    EXPECT_FALSE(cross_iteration_repetition(std::vector<Embedding>{}, bank_of({e})));
}

TEST(IntraIteration, Examples) {
    const auto e = basis(3, 0);
    EXPECT_NEAR(*intra_iteration_repetition(std::vector{e, e, e}), 1.0, 1e-12);
    EXPECT_EQ(*intra_iteration_repetition(std::vector{e, basis(3, 1)}), 0.0);
    EXPECT_FALSE(intra_iteration_repetition(std::vector{e}));
}

TEST(Spread, Examples) {
    const auto e = basis(3, 0);
    EXPECT_EQ(distribution_spread(std::vector{e, e, e}), 0.0);
    EXPECT_NEAR(distribution_spread(std::vector{e, basis(3, 0, -1.0)}), 1.0, 1e-12);
    EXPECT_THROW(distribution_spread(std::vector<Embedding>{}), Error);
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        std::vector<Embedding> v = {random_unit(rng, 4), random_unit(rng, 4)};
        EXPECT_GT(distribution_spread(v), 1e-9);
    }
}

TEST(Entropy, Examples) {
    TokenDistribution det;
    det.positions.assign(5, {{"x", 1.0}});
    EXPECT_EQ(*challenger_entropy(std::vector{det}), 0.0);
    TokenDistribution uni;
    std::vector<TokenProb> eight;
    for (int i = 0; i < 8; ++i) eight.push_back({std::to_string(i), 0.125});
    uni.positions.assign(3, eight);
    EXPECT_NEAR(*challenger_entropy(std::vector{uni}), std::log(8.0), 1e-12);
    EXPECT_FALSE(challenger_entropy(std::vector<TokenDistribution>{}));
    EXPECT_FALSE(challenger_entropy(std::vector{TokenDistribution{}}));
    EXPECT_THROW(renormalized_entropy(std::vector<TokenProb>{{"a", 0.0}}), Error);
}

TEST(Entropy, BoundedByLogK) {
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t k = 1 + rng.uniform_index(16);
        std::vector<TokenProb> p;
        for (std::size_t j = 0; j < k; ++j) p.push_back({"t", 1e-6 + rng.uniform01() / static_cast<double>(k)});
        const double h = renormalized_entropy(p);
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
    }
}

TEST(Metrics, CosineMetricsAreRotationInvariant) {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 5;
        std::vector<Embedding> q, b;
        for (int i = 0; i < 6; ++i) q.push_back(random_unit(rng, d));
        for (int i = 0; i < 12; ++i) b.push_back(random_unit(rng, d));
        const auto r = random_rotation(rng, d);
        std::vector<Embedding> rq, rb;
        for (const auto& e : q) rq.push_back(rotate(r, e));
        for (const auto& e : b) rb.push_back(rotate(r, e));
        // Rotated vectors are re-rounded to f32, hence the looser bound.
        EXPECT_NEAR(*cross_iteration_repetition(q, bank_of(b)), *cross_iteration_repetition(rq, bank_of(rb)), 1e-6);
        EXPECT_NEAR(*intra_iteration_repetition(q), *intra_iteration_repetition(rq), 1e-6);
        EXPECT_NEAR(distribution_spread(q), distribution_spread(rq), 1e-6);
        const double cross = *cross_iteration_repetition(q, bank_of(b));
        EXPECT_GE(cross, -1.0);
        EXPECT_LE(cross, 1.0);
    }
}

TEST(NearestRecords, OrderAndTies) {
    const auto bank = bank_of({basis(2, 1), basis(2, 0), basis(2, 0), Embedding(std::vector<double>{1.0, 1.0})});
    EXPECT_EQ(nearest_records(bank, basis(2, 0), 3), (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(nearest_records(bank, basis(2, 0), 10).size(), 4u);
}

class LlmRepRatio : public ::testing::Test {
protected:
    void SetUp() override {
        json doc;
        for (int f = 0; f < 12; ++f)
            doc["families"].push_back({{"id", "f" + std::to_string(f)},
                                       {"params", {{"x", json::array({1, 500})}}},
                                       {"templates", json::array({"Family " + std::to_string(f) + " asks about {x}."})},
                                       {"program", "def solver(x={x}):\n    return x * " + std::to_string(f + 2)}});
        world = std::make_shared<const MockWorld>(scenario_from_json(doc));
        suite = std::make_unique<BackendSuite>(make_mock_suite(1, world));
        std::vector<Embedding> es;
        std::vector<std::string> texts;
        for (int f = 0; f < 4; ++f)
            for (int x : {10, 20}) {
                texts.push_back(world->render_question(f, 0, {{"x", x}}));
                es.emplace_back(world->embed(world->render_program(f, {{"x", x}})));
            }
        bank = bank_of(es, texts);
    }

    void add(std::size_t family, std::int64_t x) {
        questions.emplace_back("q" + std::to_string(questions.size()),
                               world->render_question(family, 0, {{"x", x}}), 2);
        embeddings.emplace_back(world->embed(world->render_program(family, {{"x", x}})));
    }

    std::shared_ptr<const MockWorld> world;
    std::unique_ptr<BackendSuite> suite;
    MemoryBank bank;
    std::vector<Question> questions;
    std::vector<Embedding> embeddings;
};

TEST_F(LlmRepRatio, AllKnownFamilies) {
    for (int i = 0; i < 6; ++i) add(static_cast<std::size_t>(i % 4), 100 + i);
    const auto r = llm_rep_ratio(questions, embeddings, bank, *suite->judge, suite->prompts);
    EXPECT_EQ(r.ratio, 1.0);
    EXPECT_EQ(r.coverage, 1.0);
    EXPECT_FALSE(r.partial);
}

TEST_F(LlmRepRatio, AllUnseenFamilies) {
    for (int i = 0; i < 6; ++i) add(static_cast<std::size_t>(4 + i), 100 + i);
    EXPECT_EQ(llm_rep_ratio(questions, embeddings, bank, *suite->judge, suite->prompts).ratio, 0.0);
}

TEST_F(LlmRepRatio, MixedTenWithFourKnown) {
    for (int i = 0; i < 4; ++i) add(static_cast<std::size_t>(i), 300 + i);
    for (int i = 0; i < 6; ++i) add(static_cast<std::size_t>(4 + i), 300 + i);
    const auto r = llm_rep_ratio(questions, embeddings, bank, *suite->judge, suite->prompts, 3, 4);
    EXPECT_DOUBLE_EQ(*r.ratio, 0.4);
    EXPECT_EQ(r.duplicates, 4u);
    for (const auto& o : r.outcomes) EXPECT_EQ(o.neighbors.size(), 3u);
}

TEST_F(LlmRepRatio, UndefinedBelowKRecords) {
    add(0, 1);
    EXPECT_FALSE(llm_rep_ratio(questions, embeddings, bank_of({embeddings[0]}), *suite->judge, suite->prompts).ratio);
}

TEST_F(LlmRepRatio, JudgeFailuresMarkPartial) {
    struct Flaky : JudgeBackend {
        JudgeBackend* inner;
        std::atomic<int> calls{0};
        std::string complete(const std::vector<ChatMessage>& m) override {
            if (m.back().content.find("Family 5 ") != std::string::npos) throw TransportError("judge down");
            return inner->complete(m);
        }
    } flaky;
    flaky.inner = suite->judge.get();
    for (int i = 0; i < 4; ++i) add(static_cast<std::size_t>(i), 300 + i);
    add(5, 1);
    add(6, 1);
    const auto r = llm_rep_ratio(questions, embeddings, bank, flaky, suite->prompts);
    EXPECT_TRUE(r.partial);
    EXPECT_EQ(r.failures, 1u);
    EXPECT_EQ(r.judged, 5u);
    EXPECT_DOUBLE_EQ(*r.ratio, 0.8);
    EXPECT_DOUBLE_EQ(r.coverage, 5.0 / 6.0);
}

TEST(Report, CsvAndJsonRoundTrip) {
    IterationReport a;
    a.iteration = 1;
    a.counts = {16, 9, 5, 2, 0, 9};
    a.intra_iter_rep = 0.1 + 0.2;
    a.spread = 0.75;
    a.challenger_entropy = std::log(3.0);
    IterationReport b = a;
    b.iteration = 2;
    b.cross_iter_rep = 1.0 / 3.0;
    b.llm_rep_ratio = 0.4375;
    b.llm_rep_coverage = 1.0;
    b.challenger_entropy.reset();

    const std::string csv = report_csv_header() + "\n" + report_csv_row(a) + "\n" + report_csv_row(b) + "\n";
    EXPECT_NE(csv.find(",undefined,"), std::string::npos);
    EXPECT_NE(csv.find(",unavailable"), std::string::npos);
    const auto back = parse_report_csv(csv);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].intra_iter_rep, a.intra_iter_rep);
    EXPECT_EQ(back[1].cross_iter_rep, b.cross_iter_rep);
    EXPECT_FALSE(back[0].cross_iter_rep);
    EXPECT_FALSE(back[1].challenger_entropy);
    EXPECT_EQ(back[0].counts.malformed, 2u);

    const auto j = report_from_json(json::parse(report_to_json(b).dump()));
    EXPECT_EQ(j.cross_iter_rep, b.cross_iter_rep);
    EXPECT_EQ(j.llm_rep_ratio, b.llm_rep_ratio);
    EXPECT_FALSE(j.challenger_entropy);

    const auto table = render_trend_table(back);
    EXPECT_NE(table.find("0.3333"), std::string::npos);
    EXPECT_THROW(parse_report_csv("bad header\n"), Error);
}
