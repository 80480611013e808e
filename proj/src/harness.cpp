#include "spdiv/harness.hpp"

#include <algorithm>
#include <cstdio>

#include "spdiv/io.hpp"
#include "spdiv/parallel.hpp"
#include "spdiv/repetition.hpp"
#include "spdiv/reward.hpp"
#include "spdiv/rng.hpp"

namespace spdiv {

// Scoring -------------------------------------------------------------------------

namespace {

/// String used for BLEU comparisons when embeddings are not used.
const std::string& string_rep(const ScoreItem& item, const Config& cfg) {
    if (cfg.similarity_mode == SimilarityMode::sam && item.code) return *item.code;
    return *item.text;
}

bool uses_embeddings(const Config& cfg) {
    return cfg.similarity_mode == SimilarityMode::sam && cfg.use_embedding_similarity;
}

const Embedding& require_embedding(const ScoreItem& item) {
    if (!item.embedding) throw Error("item '" + item.id + "' has no embedding");
    return *item.embedding;
}

}  // namespace

SimilarityStats bank_similarity(const ScoreItem& item, const MemoryBank& bank, const Config& cfg,
                                const BankCodeLookup& bank_code) {
    if (!item.text || bank.empty()) return {};
    if (uses_embeddings(cfg)) {
        const Embedding& e = require_embedding(item);
        return similarity_stats(bank, [&](const MemoryRecord& r) { return dot(e, r.embedding); });
    }
    const std::string& mine = string_rep(item, cfg);
    const bool code_path = cfg.similarity_mode == SimilarityMode::sam;
    return similarity_stats(bank, [&](const MemoryRecord& r) {
        std::optional<std::string> other;
        if (code_path && bank_code) other = bank_code(r);
        return 1.0 - bleu_distance(mine, other ? *other : r.question.text);
    });
}

std::vector<RewardBreakdown> score_batch(std::span<const ScoreItem> items, const MemoryBank& bank,
                                         const Config& cfg, const BankCodeLookup& bank_code) {
    const std::size_t n = items.size();
    std::vector<RewardBreakdown> out(n);
    if (n == 0) return out;

    std::vector<std::size_t> with_text;
    for (std::size_t i = 0; i < n; ++i)
        if (items[i].text) with_text.push_back(i);

    SquareMatrix distances(with_text.size());
    if (uses_embeddings(cfg)) {
        std::vector<Embedding> embs;
        for (auto i : with_text) embs.push_back(require_embedding(items[i]));
        distances = cosine_distances(embs);
    } else {
        std::vector<std::string> reps;
        for (auto i : with_text) reps.push_back(string_rep(items[i], cfg));
        distances = bleu_distances(reps);
    }
    const auto assignment = cluster(distances, cfg.cluster_threshold);

    const double batch = static_cast<double>(n);
    std::vector<double> p_rep(n, 1.0 / batch);
    for (std::size_t k = 0; k < with_text.size(); ++k)
        p_rep[with_text[k]] =
            assignment.sizes.at(static_cast<std::size_t>(assignment.labels[k])) / batch;

    for (std::size_t i = 0; i < n; ++i) {
        auto& r = out[i];
        const auto st = bank_similarity(items[i], bank, cfg, bank_code);
        r.uncertainty = items[i].uncertainty;
        r.p_rep = p_rep[i];
        r.p_max = st.max;
        r.p_mean = st.mean;
        r.p_map = cfg.use_map ? map_penalty(st.max, st.mean, cfg) : 0.0;
        r.alpha = cfg.alpha;
        r.beta = cfg.beta;
        r.total = r.recompute_total();
    }
    return out;
}

// Serialization -------------------------------------------------------------------

std::string_view to_string(ItemStatus s) {
    switch (s) {
        case ItemStatus::valid: return "valid";
        case ItemStatus::invalid: return "invalid";
        case ItemStatus::malformed: return "malformed";
    }
    return "?";
}

ItemStatus item_status_from_string(std::string_view s) {
    if (s == "valid") return ItemStatus::valid;
    if (s == "invalid") return ItemStatus::invalid;
    if (s == "malformed") return ItemStatus::malformed;
    throw Error("unknown item status '" + std::string(s) + "'");
}

namespace {

template <typename T>
nlohmann::ordered_json or_null(const std::optional<T>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

nlohmann::ordered_json reward_json(const RewardBreakdown& r) {
    nlohmann::ordered_json j;
    j["uncertainty"] = r.uncertainty;
    j["p_rep"] = r.p_rep;
    j["p_max"] = r.p_max;
    j["p_mean"] = r.p_mean;
    j["p_map"] = r.p_map;
    j["total"] = r.total;
    j["alpha"] = r.alpha;
    j["beta"] = r.beta;
    return j;
}

RewardBreakdown reward_from_json(const nlohmann::json& j) {
    RewardBreakdown r;
    r.uncertainty = j.at("uncertainty").get<double>();
    r.p_rep = j.at("p_rep").get<double>();
    r.p_max = j.at("p_max").get<double>();
    r.p_mean = j.at("p_mean").get<double>();
    r.p_map = j.at("p_map").get<double>();
    r.total = j.at("total").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.beta = j.at("beta").get<double>();
    return r;
}

}  // namespace

nlohmann::ordered_json to_json(const ChallengerItem& item) {
    nlohmann::ordered_json j;
    j["id"] = item.id;
    j["iteration"] = item.iteration;
    j["status"] = std::string(to_string(item.status));
    j["text"] = or_null(item.text);
    j["claimed_answer"] = or_null(item.claimed_answer);
    j["consistency"] = or_null(item.consistency);
    j["pseudo_label"] = or_null(item.pseudo_label);
    auto answers = nlohmann::ordered_json::array();
    for (const auto& a : item.solver_answers) answers.push_back(or_null(a));
    j["solver_answers"] = std::move(answers);
    j["reward"] = reward_json(item.reward);
    if (item.sam) {
        j["provenance"] = std::string(to_string(item.sam->provenance));
        j["code"] = or_null(item.sam->code);
        const auto v = item.sam->embedding.values();
        j["embedding"] = std::vector<float>(v.begin(), v.end());
    } else {
        j["provenance"] = nullptr;
        j["code"] = nullptr;
        j["embedding"] = nullptr;
    }
    if (item.logprobs) {
        auto positions = nlohmann::ordered_json::array();
        for (const auto& p : item.logprobs->positions) {
            auto toks = nlohmann::ordered_json::array();
            for (const auto& t : p) toks.push_back({t.token, t.probability});
            positions.push_back(std::move(toks));
        }
        j["logprobs"] = std::move(positions);
    } else {
        j["logprobs"] = nullptr;
    }
    j["raw"] = item.raw;
    return j;
}

ChallengerItem challenger_item_from_json(const nlohmann::json& j) {
    ChallengerItem item;
    item.id = j.at("id").get<std::string>();
    item.iteration = j.at("iteration").get<std::uint32_t>();
    item.status = item_status_from_string(j.at("status").get<std::string>());
    item.text = opt_get<std::string>(j, "text");
    item.claimed_answer = opt_get<std::string>(j, "claimed_answer");
    item.consistency = opt_get<double>(j, "consistency");
    item.pseudo_label = opt_get<std::string>(j, "pseudo_label");
    for (const auto& a : j.at("solver_answers"))
        item.solver_answers.push_back(a.is_null() ? std::nullopt
                                                  : std::optional(a.get<std::string>()));
    item.reward = reward_from_json(j.at("reward"));
    if (j.contains("embedding") && !j.at("embedding").is_null()) {
        SamResult s{item.id, opt_get<std::string>(j, "code"),
                    Embedding::from_normalized(j.at("embedding").get<std::vector<float>>()),
                    provenance_from_string(j.at("provenance").get<std::string>())};
        item.sam = std::move(s);
    }
    if (j.contains("logprobs") && !j.at("logprobs").is_null()) {
        TokenDistribution d;
        for (const auto& p : j.at("logprobs")) {
            std::vector<TokenProb> toks;
            for (const auto& t : p) toks.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
            d.positions.push_back(std::move(toks));
        }
        item.logprobs = std::move(d);
    }
    item.raw = j.value("raw", std::string());
    return item;
}

nlohmann::ordered_json to_json(const SolverEntry& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["text"] = e.text;
    j["pseudo_label"] = e.pseudo_label;
    j["source"] = std::string(to_string(e.source));
    j["iteration"] = e.iteration;
    return j;
}

SolverEntry solver_entry_from_json(const nlohmann::json& j) {
    return {j.at("id").get<std::string>(), j.at("text").get<std::string>(),
            j.at("pseudo_label").get<std::string>(),
            question_source_from_string(j.at("source").get<std::string>()),
            j.at("iteration").get<std::uint32_t>()};
}

std::string question_id(std::uint32_t iteration, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%03u-q%04zu", iteration, index);
    return buf;
}

// Phases ------------------------------------------------------------------------

std::vector<ChallengerItem> run_challenger_phase(const Config& cfg, BackendSuite& suite,
                                                 SamPipeline& sam, const MemoryBank& bank,
                                                 std::uint32_t iteration, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(cfg.batch_size);
    const BankCodeLookup lookup = [&](const MemoryRecord& r) -> std::optional<std::string> {
        if (!cfg.use_abstraction) return std::nullopt;
        return sam.code_for(r.question.text);
    };

    GenerationContext ctx;
    ctx.iteration = iteration;
    ctx.alpha = cfg.alpha;
    ctx.beta = cfg.beta;
    ctx.map_penalty_probe = [&](const std::string& text) {
        if (!cfg.use_map || bank.empty()) return 0.0;
        ScoreItem probe{"probe", text, std::nullopt, std::nullopt, 0.0};
        if (cfg.similarity_mode == SimilarityMode::sam) {
            auto r = sam.phi_sam(Question("probe", text, iteration), cfg);
            probe.embedding = std::move(r.embedding);
            probe.code = std::move(r.code);
        }
        const auto st = bank_similarity(probe, bank, cfg, lookup);
        return map_penalty(st.max, st.mean, cfg);
    };

    std::vector<GeneratedQuestion> generated;
    try {
        generated = generate_questions(*suite.challenger, suite.prompts, n,
                                       derive_seed(seed, "challenger", {iteration}), ctx);
    } catch (const std::exception& e) {
        throw PhaseAborted(std::string("question generation failed: ") + e.what(), {});
    }

    std::vector<ChallengerItem> items(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& it = items[i];
        it.id = question_id(iteration, i);
        it.iteration = iteration;
        it.raw = generated[i].raw;
        it.text = generated[i].text;
        it.claimed_answer = generated[i].claimed_answer;
        it.logprobs = generated[i].logprobs;
        it.status = generated[i].well_formed ? ItemStatus::invalid : ItemStatus::malformed;
    }

    std::vector<char> done(n, 0);
    try {
        parallel_for(n, suite.max_in_flight, [&](std::size_t i) {
            auto& it = items[i];
            if (it.text) {
                const Question q(it.id, *it.text, iteration);
                it.sam = sam.phi_sam(q, cfg);
                if (it.status != ItemStatus::malformed) {
                    const auto rollout = solve(*suite.solver, suite.prompts, q, cfg.solver_samples,
                                               derive_seed(seed, "solve", {iteration, i}));
                    const auto groups = group_answers(rollout);
                    const double s = consistency_score(groups);
                    it.solver_answers = rollout.extracted;
                    it.consistency = s;
                    it.pseudo_label = pseudo_label(groups);
                    if (is_valid(s, cfg) && it.pseudo_label) it.status = ItemStatus::valid;
                }
            }
            done[i] = 1;
        });
    } catch (const std::exception& e) {
        std::vector<ChallengerItem> partial;
        for (std::size_t i = 0; i < n; ++i)
            if (done[i]) partial.push_back(items[i]);
        throw PhaseAborted(std::string("challenger phase aborted: ") + e.what(), std::move(partial));
    }

    std::vector<ScoreItem> scoring;
    scoring.reserve(n);
    for (const auto& it : items) {
        ScoreItem s{it.id, it.text, std::nullopt, std::nullopt, 0.0};
        if (it.sam) {
            s.embedding = it.sam->embedding;
            s.code = it.sam->code;
        }
        if (it.status != ItemStatus::malformed && it.consistency)
            s.uncertainty = uncertainty_reward(*it.consistency);
        scoring.push_back(std::move(s));
    }
    const auto rewards = score_batch(scoring, bank, cfg, lookup);
    for (std::size_t i = 0; i < n; ++i) items[i].reward = rewards[i];
    return items;
}

SolverPhase run_solver_phase(const Config& cfg, const MemoryBank& bank,
                             std::span<const ChallengerItem> batch, std::uint32_t iteration,
                             std::uint64_t seed) {
    SolverPhase out;
    std::vector<const ChallengerItem*> current;
    for (const auto& it : batch)
        if (it.status == ItemStatus::valid && it.pseudo_label && it.text) current.push_back(&it);
    std::sort(current.begin(), current.end(),
              [](const ChallengerItem* a, const ChallengerItem* b) { return a->id < b->id; });
    for (const auto* it : current)
        out.entries.push_back({it->id, *it->text, *it->pseudo_label, QuestionSource::generated, iteration});

    if (current.empty())
        out.warnings.push_back("iteration " + std::to_string(iteration) +
                               ": no valid questions; solver set is empty");
    if (cfg.use_replay && !current.empty()) {
        for (const auto& r : sample_replay(bank, current.size(), cfg,
                                           derive_seed(seed, "replay", {iteration}))) {
            if (r.question.iteration >= iteration)
                throw Error("replayed question '" + r.question.id + "' is not from an earlier iteration");
            out.entries.push_back({r.question.id, r.question.text, *r.pseudo_label,
                                   QuestionSource::replayed, r.question.iteration});
        }
    }
    return out;
}

IterationMetrics compute_metrics(std::span<const ChallengerItem> batch, const MemoryBank& bank,
                                 JudgeBackend* judge, const PromptSet& prompts,
                                 bool entropy_capable, std::uint32_t iteration,
                                 int max_in_flight) {
    IterationMetrics m;
    auto& r = m.report;
    r.iteration = iteration;
    r.counts.generated = batch.size();

    std::vector<const ChallengerItem*> with_text;
    std::vector<Embedding> embs;
    std::vector<Question> qs;
    std::vector<TokenDistribution> rollouts;
    for (const auto& it : batch) {
        switch (it.status) {
            case ItemStatus::valid: ++r.counts.valid; break;
            case ItemStatus::invalid: ++r.counts.invalid; break;
            case ItemStatus::malformed: ++r.counts.malformed; break;
        }
        if (it.logprobs) rollouts.push_back(*it.logprobs);
        if (!it.sam || !it.text) continue;
        with_text.push_back(&it);
        embs.push_back(it.sam->embedding);
        qs.emplace_back(it.id, *it.text, iteration);
    }

    r.cross_iter_rep = cross_iteration_repetition(embs, bank);
    r.intra_iter_rep = intra_iteration_repetition(embs);
    if (!embs.empty()) r.spread = distribution_spread(embs);
    LlmRepResult llm;
    if (judge) llm = llm_rep_ratio(qs, embs, bank, *judge, prompts, 3, max_in_flight);
    r.llm_rep_ratio = llm.ratio;
    r.llm_rep_coverage = llm.coverage;
    if (entropy_capable) r.challenger_entropy = challenger_entropy(rollouts);

    // Per-question values.
    std::vector<double> centroid;
    if (!embs.empty()) {
        centroid.assign(embs.front().dim(), 0.0);
        for (const auto& e : embs)
            for (std::size_t d = 0; d < centroid.size(); ++d) centroid[d] += e.values()[d];
        for (auto& c : centroid) c /= static_cast<double>(embs.size());
    }
    for (std::size_t i = 0; i < embs.size(); ++i) {
        nlohmann::ordered_json d;
        d["id"] = qs[i].id;
        if (!bank.empty()) {
            const auto st = similarity_stats(
                bank, [&](const MemoryRecord& rec) { return dot(embs[i], rec.embedding); });
            d["cross_iter_rep"] = 0.5 * st.max + 0.5 * st.mean;
        } else {
            d["cross_iter_rep"] = "undefined";
        }
        if (embs.size() >= 2) {
            double s = 0.0;
            for (std::size_t j = 0; j < embs.size(); ++j)
                if (j != i) s += dot(embs[i], embs[j]);
            d["intra_iter_rep"] = s / static_cast<double>(embs.size() - 1);
        } else {
            d["intra_iter_rep"] = "undefined";
        }
        double sq = 0.0;
        for (std::size_t k = 0; k < centroid.size(); ++k) {
            const double diff = embs[i].values()[k] - centroid[k];
            sq += diff * diff;
        }
        d["centroid_distance"] = std::sqrt(sq);
        nlohmann::ordered_json jd;
        if (llm.outcomes.empty()) {
            jd["verdict"] = "undefined";
        } else {
            const auto& o = llm.outcomes[i];
            jd["verdict"] = o.verdict ? (*o.verdict == Verdict::duplicate ? "duplicate" : "novel")
                                      : "failed";
            auto ids = nlohmann::ordered_json::array();
            for (auto n : o.neighbors) ids.push_back(bank.records()[n].question.id);
            jd["neighbors"] = std::move(ids);
            if (!o.error.empty()) jd["error"] = o.error;
        }
        d["judge"] = std::move(jd);
        const auto* it = with_text[i];
        if (entropy_capable && it->logprobs) {
            const auto h = challenger_entropy(std::span(&*it->logprobs, 1));
            d["entropy"] = h ? nlohmann::ordered_json(*h) : nlohmann::ordered_json("unavailable");
        } else {
            d["entropy"] = "unavailable";
        }
        m.details.push_back(std::move(d));
    }
    return m;
}

MemoryBank bank_before(const MemoryBank& bank, std::uint32_t iteration) {
    std::vector<MemoryRecord> kept;
    for (const auto& r : bank.records())
        if (r.question.iteration < iteration) kept.push_back(r);
    const std::int64_t wm = std::min<std::int64_t>(bank.watermark(), std::int64_t{iteration} - 1);
    return MemoryBank::restore(bank.dim(), kept.empty() && bank.watermark() < 0 ? -1 : wm,
                               std::move(kept));
}

// Runs ----------------------------------------------------------------------------

namespace {

constexpr const char* kStateFile = "state.json";
constexpr const char* kCacheFile = "sam_cache.jsonl";
constexpr const char* kReportFile = "report.csv";

std::string state_document(const Config& cfg, std::uint64_t seed, std::uint32_t completed) {
    nlohmann::ordered_json j;
    j["format"] = 1;
    j["seed"] = seed;
    j["completed_iterations"] = completed;
    j["config"] = nlohmann::ordered_json::parse(serialize_config(cfg));
    return j.dump(2) + "\n";
}

std::string jsonl(const std::vector<nlohmann::ordered_json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

void crash_if(const IterationOptions& o, CrashPoint at, std::uint32_t iteration) {
    if (o.crash == at && o.crash_iteration == iteration)
        throw InjectedCrash("injected crash in iteration " + std::to_string(iteration));
}

}  // namespace

std::filesystem::path iteration_dir(const std::filesystem::path& run_dir, std::uint32_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter_%03u", iteration);
    return run_dir / buf;
}

Run open_run(const std::filesystem::path& dir, const Config& cfg, std::uint64_t seed,
             std::optional<std::filesystem::path> bank_path) {
    Run run;
    run.dir = dir;
    run.cfg = cfg;
    run.seed = seed;
    run.bank_path = bank_path.value_or(dir / "bank.rdmb");
    std::filesystem::create_directories(dir);

    const auto state = dir / kStateFile;
    if (std::filesystem::exists(state)) {
        const auto j = nlohmann::json::parse(read_file(state));
        const Config stored = validate_config(parse_config_document(j.at("config").dump()));
        if (!(stored == cfg))
            throw ConfigError("config", "run directory " + dir.string() +
                                            " was created with a different configuration");
        if (j.at("seed").get<std::uint64_t>() != seed)
            throw ConfigError("seed", "run directory " + dir.string() + " was created with seed " +
                                          std::to_string(j.at("seed").get<std::uint64_t>()));
    } else {
        write_file_atomic(state, state_document(cfg, seed, 0));
    }

    if (std::filesystem::exists(run.bank_path)) run.bank = load_bank(run.bank_path);
    run.cache = std::make_unique<SamCache>();
    run.cache->load(dir / kCacheFile);
    run.next_iteration =
        static_cast<std::uint32_t>(std::max<std::int64_t>(1, run.bank.watermark() + 1));
    return run;
}

IterationArtifacts run_iteration(Run& run, BackendSuite& suite, const IterationOptions& opts) {
    const std::uint32_t t = run.next_iteration;
    IterationArtifacts art;
    art.iteration = t;
    art.dir = iteration_dir(run.dir, t);
    std::filesystem::create_directories(art.dir);

    SamPipeline sam(*suite.coder, *suite.embedder, suite.prompts, *run.cache);
    const auto partial_file = art.dir / "challenger_batch.partial.jsonl";
    try {
        art.challenger_batch = run_challenger_phase(run.cfg, suite, sam, run.bank, t, run.seed);
    } catch (const PhaseAborted& e) {
        std::vector<nlohmann::ordered_json> rows;
        for (const auto& it : e.partial()) rows.push_back(to_json(it));
        write_file_atomic(partial_file, jsonl(rows));
        run.cache->flush(run.dir / kCacheFile);
        throw;
    }
    crash_if(opts, CrashPoint::after_challenger, t);

    auto solver = run_solver_phase(run.cfg, run.bank, art.challenger_batch, t, run.seed);
    art.solver_set = std::move(solver.entries);
    art.warnings = std::move(solver.warnings);
    crash_if(opts, CrashPoint::after_solver, t);

    auto metrics = compute_metrics(art.challenger_batch, run.bank, suite.judge.get(), suite.prompts,
                                   suite.challenger->logprobs_capable(), t, suite.max_in_flight);
    art.report = metrics.report;
    for (const auto& e : art.solver_set)
        if (e.source == QuestionSource::replayed) ++art.report.counts.replayed;
    art.report.counts.solver_set = art.solver_set.size();

    std::vector<nlohmann::ordered_json> rows;
    for (const auto& it : art.challenger_batch) rows.push_back(to_json(it));
    write_file_atomic(art.dir / "challenger_batch.jsonl", jsonl(rows));
    rows.clear();
    for (const auto& e : art.solver_set) rows.push_back(to_json(e));
    write_file_atomic(art.dir / "solver_set.jsonl", jsonl(rows));
    write_file_atomic(art.dir / "details.jsonl", jsonl(metrics.details));
    write_file_atomic(art.dir / "report.json", report_to_json(art.report).dump(2) + "\n");
    std::filesystem::remove(partial_file);

    std::string csv = report_csv_header() + "\n";
    for (const auto& r : load_run_reports(run.dir))
        if (r.iteration <= t) csv += report_csv_row(r) + "\n";
    write_file_atomic(run.dir / kReportFile, csv);
    crash_if(opts, CrashPoint::after_artifacts, t);

    run.cache->flush(run.dir / kCacheFile);

    std::vector<BankCandidate> candidates;
    for (const auto& it : art.challenger_batch) {
        if (it.status != ItemStatus::valid) continue;
        candidates.push_back({Question(it.id, *it.text, t), it.sam->embedding, *it.consistency,
                              it.pseudo_label});
    }
    MemoryBank next = update_bank(run.bank, candidates, t, run.cfg);
    save_bank(next, run.bank_path);
    run.bank = std::move(next);
    run.next_iteration = t + 1;
    crash_if(opts, CrashPoint::after_bank, t);

    write_file_atomic(run.dir / kStateFile, state_document(run.cfg, run.seed, t));
    return art;
}

std::vector<IterationReport> load_run_reports(const std::filesystem::path& run_dir) {
    std::vector<IterationReport> out;
    for (std::uint32_t t = 1;; ++t) {
        const auto f = iteration_dir(run_dir, t) / "report.json";
        if (!std::filesystem::exists(f)) break;
        out.push_back(report_from_json(nlohmann::json::parse(read_file(f))));
    }
    return out;
}

std::vector<ChallengerItem> load_challenger_batch(const std::filesystem::path& file) {
    std::vector<ChallengerItem> out;
    const std::string text = read_file(file);
    std::size_t start = 0, lineno = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const auto line = std::string_view(text).substr(start, end - start);
        start = end + 1;
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(challenger_item_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace spdiv
