// spdiv: run the self-play curriculum loop and inspect its artifacts.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "spdiv/harness.hpp"
#include "spdiv/io.hpp"
#include "spdiv/mock.hpp"

namespace {

using namespace spdiv;

const char* const kConfigKeys[] = {
    "alpha",       "beta",          "gamma",          "tau_max",          "tau_mean",
    "rho",         "valid_lo",      "valid_hi",       "solver_samples",   "batch_size",
    "cluster_threshold", "similarity_mode", "use_map", "use_max_term",   "use_mean_term",
    "use_replay",  "use_abstraction", "use_embedding_similarity"};

struct ConfigFlags {
    std::string file;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "Flat JSON config document");
        for (const char* key : kConfigKeys)
            app->add_option(std::string("--") + key, values[key], std::string("Override ") + key);
    }

    Config resolve() const {
        RawConfig raw;
        if (!file.empty()) raw = parse_config_document(read_file(file));
        for (const auto& [k, v] : values)
            if (!v.empty()) raw[k] = v;
        return validate_config(raw);
    }
};

struct BackendFlags {
    std::string scenario;
    std::string profile;

    void attach(CLI::App* app) {
        auto* s = app->add_option("--scenario", scenario, "Mock scenario JSON (deterministic backends)");
        auto* p = app->add_option("--backend-profile", profile, "HTTP backend profile JSON");
        s->excludes(p);
    }

    bool given() const { return !scenario.empty() || !profile.empty(); }

    BackendSuite build(std::uint64_t seed) const {
        if (!scenario.empty()) return make_mock_suite(seed, parse_scenario(read_file(scenario)));
        if (!profile.empty()) return make_http_suite(nlohmann::json::parse(read_file(profile)));
        throw ConfigError("backend", "pass --scenario or --backend-profile");
    }
};

int cmd_run(const ConfigFlags& cf, const BackendFlags& bf, const std::string& run_dir,
            const std::string& bank, std::uint32_t iterations, std::uint64_t seed) {
    const Config cfg = cf.resolve();
    auto suite = bf.build(seed);
    Run run = open_run(run_dir, cfg, seed,
                       bank.empty() ? std::nullopt : std::optional<std::filesystem::path>(bank));
    if (run.next_iteration > iterations) {
        std::cerr << "run already has " << run.next_iteration - 1 << " iterations\n";
    }
    while (run.next_iteration <= iterations) {
        const auto art = run_iteration(run, suite);
        for (const auto& w : art.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << report_csv_row(art.report) << "\n" << std::flush;
    }
    return 0;
}

int cmd_score(const ConfigFlags& cf, const BackendFlags& bf, const std::string& input,
              const std::string& bank_file, const std::string& output, std::uint64_t seed) {
    const Config cfg = cf.resolve();
    const MemoryBank bank = bank_file.empty() ? MemoryBank() : load_bank(bank_file);

    std::optional<BackendSuite> suite;
    SamCache cache;
    std::optional<SamPipeline> sam;
    if (bf.given()) {
        suite = bf.build(seed);
        sam.emplace(*suite->coder, *suite->embedder, suite->prompts, cache);
    }

    std::vector<ScoreItem> items;
    const std::string text = read_file(input);
    std::size_t start = 0, lineno = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = trim(std::string_view(text).substr(start, end - start));
        start = end + 1;
        ++lineno;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ScoreItem it;
        it.id = j.value("id", "line" + std::to_string(lineno));
        if (j.contains("text") && !j["text"].is_null()) it.text = j["text"].get<std::string>();
        if (j.contains("uncertainty"))
            it.uncertainty = j["uncertainty"].get<double>();
        else if (j.contains("consistency"))
            it.uncertainty = uncertainty_reward(j["consistency"].get<double>());
        if (j.contains("code") && !j["code"].is_null()) it.code = j["code"].get<std::string>();
        if (j.contains("embedding") && !j["embedding"].is_null())
            it.embedding = Embedding(j["embedding"].get<std::vector<double>>());
        if (it.text && !it.embedding && sam) {
            auto r = sam->phi_sam(Question(it.id, *it.text, 0), cfg);
            it.embedding = std::move(r.embedding);
            if (!it.code) it.code = std::move(r.code);
        }
        items.push_back(std::move(it));
    }

    BankCodeLookup lookup;
    if (sam && cfg.use_abstraction)
        lookup = [&](const MemoryRecord& r) { return sam->code_for(r.question.text); };
    const auto rewards = score_batch(items, bank, cfg, lookup);

    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        nlohmann::ordered_json j;
        j["id"] = items[i].id;
        j["uncertainty"] = rewards[i].uncertainty;
        j["p_rep"] = rewards[i].p_rep;
        j["p_max"] = rewards[i].p_max;
        j["p_mean"] = rewards[i].p_mean;
        j["p_map"] = rewards[i].p_map;
        j["total"] = rewards[i].total;
        j["alpha"] = rewards[i].alpha;
        j["beta"] = rewards[i].beta;
        out += j.dump() + "\n";
    }
    if (output.empty() || output == "-")
        std::cout << out;
    else
        write_file_atomic(output, out);
    return 0;
}

int cmd_metrics(const BackendFlags& bf, const std::string& run_dir, std::uint32_t only,
                const std::string& bank_file, std::uint64_t seed) {
    const std::filesystem::path dir(run_dir);
    const MemoryBank bank = load_bank(bank_file.empty() ? dir / "bank.rdmb" : std::filesystem::path(bank_file));
    std::optional<BackendSuite> suite;
    if (bf.given()) suite = bf.build(seed);
    const PromptSet prompts = suite ? suite->prompts : PromptSet::builtin();

    for (std::uint32_t t = 1;; ++t) {
        const auto file = iteration_dir(dir, t) / "challenger_batch.jsonl";
        if (!std::filesystem::exists(file)) break;
        if (only != 0 && t != only) continue;
        const auto batch = load_challenger_batch(file);
        bool entropy = false;
        for (const auto& it : batch) entropy = entropy || it.logprobs.has_value();
        const auto m = compute_metrics(batch, bank_before(bank, t), suite ? suite->judge.get() : nullptr,
                                       prompts, entropy, t, suite ? suite->max_in_flight : 1);
        std::cout << report_to_json(m.report).dump() << "\n";
    }
    return 0;
}

int cmd_bank(const std::string& action, const std::string& bank_file, bool with_embeddings) {
    const MemoryBank bank = load_bank(bank_file);
    if (action == "info") {
        nlohmann::ordered_json j;
        j["records"] = bank.size();
        j["dim"] = bank.dim();
        j["watermark"] = bank.watermark();
        std::size_t labelled = 0;
        std::map<std::uint32_t, std::size_t> per_iteration;
        for (const auto& r : bank.records()) {
            labelled += r.pseudo_label ? 1 : 0;
            ++per_iteration[r.question.iteration];
        }
        j["labelled"] = labelled;
        nlohmann::ordered_json per = nlohmann::ordered_json::object();
        for (const auto& [it, n] : per_iteration) per[std::to_string(it)] = n;
        j["per_iteration"] = per;
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    for (const auto& r : bank.records()) {
        nlohmann::ordered_json j;
        j["id"] = r.question.id;
        j["iteration"] = r.question.iteration;
        j["text"] = r.question.text;
        j["pseudo_label"] = r.pseudo_label ? nlohmann::ordered_json(*r.pseudo_label) : nullptr;
        j["consistency"] = r.consistency;
        if (with_embeddings) {
            const auto v = r.embedding.values();
            j["embedding"] = std::vector<float>(v.begin(), v.end());
        }
        std::cout << j.dump() << "\n";
    }
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& csv) {
    std::vector<IterationReport> reports;
    if (!csv.empty())
        reports = parse_report_csv(read_file(csv));
    else
        reports = parse_report_csv(read_file(std::filesystem::path(run_dir) / "report.csv"));
    std::cout << render_trend_table(reports);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-play curriculum engine: rewards, memory bank, diversity metrics"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "Run challenger/solver iterations into a run directory");
    ConfigFlags run_cfg;
    BackendFlags run_backends;
    std::string run_dir, run_bank;
    std::uint32_t iterations = 3;
    run_cfg.attach(run);
    run_backends.attach(run);
    run->add_option("--run-dir", run_dir, "Run directory (created or resumed)")->required();
    run->add_option("--bank", run_bank, "Bank file (default: <run-dir>/bank.rdmb)");
    run->add_option("--iterations", iterations, "Total iterations the run should reach");
    run->add_option("--seed", seed, "Run seed");

    auto* score = app.add_subcommand("score", "Score a question JSONL against a bank");
    ConfigFlags score_cfg;
    BackendFlags score_backends;
    std::string score_input, score_bank, score_output;
    score_cfg.attach(score);
    score_backends.attach(score);
    score->add_option("--input", score_input, "JSONL: id, text, consistency|uncertainty, [embedding], [code]")
        ->required();
    score->add_option("--bank", score_bank, "Bank file (default: empty bank)");
    score->add_option("--output", score_output, "Output JSONL (default: stdout)");
    score->add_option("--seed", seed, "Seed for mock backends");

    auto* metrics = app.add_subcommand("metrics", "Recompute diversity metrics from run artifacts");
    BackendFlags metrics_backends;
    std::string metrics_dir, metrics_bank;
    std::uint32_t metrics_iteration = 0;
    metrics_backends.attach(metrics);
    metrics->add_option("--run-dir", metrics_dir, "Run directory")->required();
    metrics->add_option("--bank", metrics_bank, "Bank file (default: <run-dir>/bank.rdmb)");
    metrics->add_option("--iteration", metrics_iteration, "Only this iteration (default: all)");
    metrics->add_option("--seed", seed, "Seed for mock backends");

    auto* bank = app.add_subcommand("bank", "Inspect or export a memory bank");
    std::string bank_action = "info", bank_file;
    bool with_embeddings = false;
    bank->add_option("action", bank_action, "info | export")
        ->check(CLI::IsMember({"info", "export"}));
    bank->add_option("--bank", bank_file, "Bank file")->required();
    bank->add_flag("--with-embeddings", with_embeddings, "Include embeddings in export");

    auto* report = app.add_subcommand("report", "Render the per-iteration trend table");
    std::string report_dir, report_csv;
    auto* rd = report->add_option("--run-dir", report_dir, "Run directory");
    auto* rc = report->add_option("--csv", report_csv, "report.csv file");
    rd->excludes(rc);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_cfg, run_backends, run_dir, run_bank, iterations, seed);
        if (score->parsed())
            return cmd_score(score_cfg, score_backends, score_input, score_bank, score_output, seed);
        if (metrics->parsed())
            return cmd_metrics(metrics_backends, metrics_dir, metrics_iteration, metrics_bank, seed);
        if (bank->parsed()) return cmd_bank(bank_action, bank_file, with_embeddings);
        if (report->parsed()) {
            if (report_dir.empty() && report_csv.empty()) throw Error("pass --run-dir or --csv");
            return cmd_report(report_dir, report_csv);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error";
        if (!e.key().empty()) std::cerr << " [" << e.key() << "]";
        std::cerr << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
