#include <gtest/gtest.h>

#include <thread>

#include "spdiv/parallel.hpp"
#include "spdiv/prompts.hpp"
#include "spdiv/sam.hpp"
#include "support.hpp"

using namespace spdiv;
using test::HashEmbedder;
using test::TableCoder;

namespace {

const std::string kChickens =
    "A farm has chickens and rabbits. There are 35 heads and 94 legs. How many rabbits are there?";
const std::string kCars =
    "A parking lot has cars and motorcycles, 35 vehicles and 94 wheels. How many cars are there?";
const std::string kProgram =
    "from sympy import symbols, Eq, solve\n"
    "def solver(n1=35, n2=94):\n"
    "    x, y = symbols('x y')\n"
    "    sol = solve((Eq(x + y, n1), Eq(2*x + 4*y, n2)), (x, y))\n"
    "    return sol[y]";

struct Fixture {
    TableCoder coder;
    HashEmbedder embedder{8};
    PromptSet prompts = PromptSet::builtin();
    SamCache cache;
    SamPipeline pipeline{coder, embedder, prompts, cache};
};

}  // namespace

TEST(CodeBlock, Extraction) {
    EXPECT_EQ(extract_code_block("<CODE>\n  x = 1\n</CODE>"), "x = 1");
    EXPECT_EQ(extract_code_block("a <CODE>first</CODE> b <CODE>second</CODE>"), "first");
    EXPECT_EQ(extract_code_block("no tags here"), std::nullopt);
    EXPECT_EQ(extract_code_block("<CODE>   </CODE>"), std::nullopt);
    EXPECT_EQ(extract_code_block("<CODE>never closed"), std::nullopt);
}

TEST(AbstractToCode, SendsVerbatimPrompt) {
    struct Capture : CoderBackend {
        std::string prompt;
        std::string complete(const std::vector<ChatMessage>& m) override {
            prompt = m.back().content;
            return "<CODE>\nprogram\n</CODE>";
        }
    } coder;
    const auto prompts = PromptSet::builtin();
    EXPECT_EQ(abstract_to_code(Question("q", kChickens, 1), coder, prompts), "program");
    EXPECT_EQ(coder.prompt, render_template(prompts.code_generation, {{"question", kChickens}}));
}

TEST(AbstractToCode, TransportFailureIsNotAFallback) {
    struct Down : CoderBackend {
        std::string complete(const std::vector<ChatMessage>&) override { throw TransportError("down"); }
    } coder;
    EXPECT_THROW(abstract_to_code(Question("q", kChickens, 1), coder, PromptSet::builtin()), TransportError);
}

TEST(PhiSam, IsomorphicQuestionsCollapse) {
    Fixture f;
    f.coder.replies[kChickens] = "<CODE>\n" + kProgram + "\n</CODE>";
    f.coder.replies[kCars] = "Sure! <CODE>" + kProgram + "</CODE>";
    const Config cfg;
    const auto a = f.pipeline.phi_sam(Question("a", kChickens, 1), cfg);
    const auto b = f.pipeline.phi_sam(Question("b", kCars, 1), cfg);
    EXPECT_EQ(a.provenance, Provenance::abstracted);
    EXPECT_EQ(a.code, kProgram);
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_NEAR(dot(a.embedding, b.embedding), 1.0, 1e-6);
    // Raw text would not have collapsed them.
    EXPECT_LT(dot(f.pipeline.embed_text(kChickens), f.pipeline.embed_text(kCars)), 0.99);
}

TEST(PhiSam, ProseFallsBackToRawText) {
    Fixture f;
    const Config cfg;
    const auto r = f.pipeline.phi_sam(Question("a", kChickens, 1), cfg);
    EXPECT_EQ(r.provenance, Provenance::raw_text_fallback);
    EXPECT_FALSE(r.code);
    EXPECT_EQ(r.embedding, f.pipeline.embed_text(kChickens));
    EXPECT_NEAR(r.embedding.norm(), 1.0, 1e-6);
}

TEST(PhiSam, WithoutAbstractionEqualsEmbedText) {
    Fixture f;
    f.coder.replies[kChickens] = "<CODE>" + kProgram + "</CODE>";
    Config cfg;
    cfg.use_abstraction = false;
    const auto r = f.pipeline.phi_sam(Question("a", kChickens, 1), cfg);
    EXPECT_EQ(f.coder.calls, 0);
    EXPECT_EQ(r.embedding, f.pipeline.embed_text(kChickens));
    EXPECT_FALSE(r.code);
}

TEST(PhiSam, CacheHitsCallBackendsOnce) {
    Fixture f;
    f.coder.replies[kChickens] = "<CODE>" + kProgram + "</CODE>";
    const Config cfg;
    const auto first = f.pipeline.phi_sam(Question("a", kChickens, 1), cfg);
    const auto second = f.pipeline.phi_sam(Question("b", "  " + kChickens + "\n", 2), cfg);
    EXPECT_EQ(first.embedding, second.embedding);
    EXPECT_EQ(f.coder.calls, 1);
    EXPECT_EQ(f.embedder.calls, 1);
    EXPECT_EQ(f.pipeline.coder_calls(), 1u);
    EXPECT_EQ(f.pipeline.embedder_calls(), 1u);
}

TEST(PhiSam, ConcurrentCallersAgree) {
    Fixture f;
    std::vector<std::string> texts;
    for (int i = 0; i < 20; ++i) texts.push_back("question number " + std::to_string(i % 5));
    std::vector<std::optional<SamResult>> out(texts.size());
    const Config cfg;
    parallel_for(texts.size(), 8, [&](std::size_t i) { out[i] = f.pipeline.phi_sam(Question("q", texts[i], 1), cfg); });
    for (std::size_t i = 5; i < texts.size(); ++i) EXPECT_EQ(out[i]->embedding, out[i % 5]->embedding);
    EXPECT_EQ(f.cache.embedding_entries(), 5u);
}

TEST(EmbedText, DimensionDriftRejected) {
    struct Drifting : EmbedderBackend {
        int calls = 0;
        std::vector<double> embed(const std::string&) override {
            return std::vector<double>(++calls == 1 ? 4 : 5, 1.0);
        }
    } embedder;
    TableCoder coder;
    const auto prompts = PromptSet::builtin();
    SamCache cache;
    SamPipeline p(coder, embedder, prompts, cache);
    EXPECT_NO_THROW(p.embed_text("one"));
    EXPECT_THROW(p.embed_text("two"), DimensionError);
    EXPECT_THROW(p.embed_text("  "), Error);
}

TEST(SamCache, PersistsAndReloads) {
    test::TempDir dir("cache");
    const auto log = dir / "sam_cache.jsonl";
    Embedding before = test::basis(2, 0);
    {
        Fixture f;
        f.coder.replies[kChickens] = "<CODE>" + kProgram + "</CODE>";
        const Config cfg;
        before = f.pipeline.phi_sam(Question("a", kChickens, 1), cfg).embedding;
        f.pipeline.phi_sam(Question("b", kCars, 1), cfg);
        f.cache.flush(log);
        f.cache.flush(log);  // nothing pending: no duplicate lines
    }
    const auto text = test::slurp(log);
    // 2 code entries (one empty), the program embedding and the fallback text embedding
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);

    Fixture g;
    g.cache.load(log);
    SamPipeline p(g.coder, g.embedder, g.prompts, g.cache);
    const auto again = p.phi_sam(Question("a", kChickens, 1), Config{});
    EXPECT_EQ(again.embedding, before);
    EXPECT_EQ(g.coder.calls, 0);
    EXPECT_EQ(g.embedder.calls, 0);

    g.cache.flush(log);
    EXPECT_EQ(test::slurp(log), text);
}

TEST(SamCache, RejectsTamperedLog) {
    test::TempDir dir("cache");
    const auto log = dir / "bad.jsonl";
    std::ofstream(log) << R"({"kind":"code","key":"0000","text":"x","code":null})" << "\n";
    SamCache c;
    EXPECT_THROW(c.load(log), Error);
    SamCache missing;
    EXPECT_NO_THROW(missing.load(dir / "absent.jsonl"));
}

TEST(Provenance, StringRoundTrip) {
    for (auto p : {Provenance::abstracted, Provenance::raw_text_fallback})
        EXPECT_EQ(provenance_from_string(to_string(p)), p);
    EXPECT_THROW(provenance_from_string("other"), Error);
}
