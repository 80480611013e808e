#include "spdiv/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "spdiv/parallel.hpp"

namespace spdiv {

std::optional<double> cross_iteration_repetition(std::span<const Embedding> questions,
                                                 const MemoryBank& bank) {
    if (bank.empty() || questions.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& q : questions) {
        const auto st = similarity_stats(bank, [&](const MemoryRecord& r) { return dot(q, r.embedding); });
        sum += 0.5 * st.max + 0.5 * st.mean;
    }
    return sum / static_cast<double>(questions.size());
}

std::optional<double> intra_iteration_repetition(std::span<const Embedding> questions) {
    const std::size_t n = questions.size();
    if (n < 2) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sum += dot(questions[i], questions[j]);
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double distribution_spread(std::span<const Embedding> questions) {
    if (questions.empty()) throw Error("distribution spread needs at least one question");
    const std::size_t dim = questions.front().dim();
    std::vector<double> centroid(dim, 0.0);
    for (const auto& q : questions) {
        if (q.dim() != dim) throw DimensionError("spread: embedding dimension mismatch");
        const auto v = q.values();
        for (std::size_t d = 0; d < dim; ++d) centroid[d] += v[d];
    }
    for (auto& c : centroid) c /= static_cast<double>(questions.size());
    double sum = 0.0;
    for (const auto& q : questions) {
        const auto v = q.values();
        double sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = static_cast<double>(v[d]) - centroid[d];
            sq += diff * diff;
        }
        sum += std::sqrt(sq);
    }
    return sum / static_cast<double>(questions.size());
}

double renormalized_entropy(std::span<const TokenProb> position) {
    double z = 0.0;
    for (const auto& t : position) {
        if (!(t.probability > 0.0) || !std::isfinite(t.probability))
            throw Error("token probabilities must be positive and finite");
        z += t.probability;
    }
    double h = 0.0;
    for (const auto& t : position) {
        const double p = t.probability / z;
        h -= p * std::log(p);
    }
    return std::max(0.0, h);
}

std::optional<double> challenger_entropy(std::span<const TokenDistribution> rollouts) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& r : rollouts) {
        double pos_sum = 0.0;
        std::size_t positions = 0;
        for (const auto& p : r.positions) {
            if (p.empty()) continue;
            pos_sum += renormalized_entropy(p);
            ++positions;
        }
        if (positions == 0) continue;
        sum += pos_sum / static_cast<double>(positions);
        ++counted;
    }
    if (counted == 0) return std::nullopt;
    return sum / static_cast<double>(counted);
}

std::vector<std::size_t> nearest_records(const MemoryBank& bank, const Embedding& e, std::size_t k) {
    const auto& recs = bank.records();
    std::vector<double> sim(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) sim[i] = dot(e, recs[i].embedding);
    std::vector<std::size_t> idx(recs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t take = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return sim[a] != sim[b] ? sim[a] > sim[b] : a < b;
                      });
    idx.resize(take);
    return idx;
}

LlmRepResult llm_rep_ratio(std::span<const Question> questions,
                           std::span<const Embedding> embeddings, const MemoryBank& bank,
                           JudgeBackend& judge, const PromptSet& prompts, std::size_t k,
                           int max_in_flight) {
    if (questions.size() != embeddings.size())
        throw Error("llm_rep_ratio: questions and embeddings differ in length");
    LlmRepResult out;
    if (bank.size() < k || k == 0 || questions.empty()) return out;

    out.outcomes.resize(questions.size());
    parallel_for(questions.size(), max_in_flight, [&](std::size_t i) {
        auto& o = out.outcomes[i];
        o.neighbors = nearest_records(bank, embeddings[i], k);
        std::vector<Question> refs;
        for (auto n : o.neighbors) refs.push_back(bank.records()[n].question);
        try {
            o.verdict = judge_duplicate(judge, prompts, questions[i], refs);
        } catch (const TransportError& e) {
            o.error = e.what();
        }
    });
    for (const auto& o : out.outcomes) {
        if (!o.verdict) {
            ++out.failures;
            continue;
        }
        ++out.judged;
        if (*o.verdict == Verdict::duplicate) ++out.duplicates;
    }
    out.coverage = static_cast<double>(out.judged) / static_cast<double>(questions.size());
    out.partial = out.failures > 0;
    if (out.judged > 0)
        out.ratio = static_cast<double>(out.duplicates) / static_cast<double>(out.judged);
    return out;
}

// Report I/O ----------------------------------------------------------------------

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

namespace {

constexpr const char* kColumns[] = {"iteration",      "generated",      "valid",
                                    "invalid",        "malformed",      "replayed",
                                    "solver_set",     "cross_iter_rep", "intra_iter_rep",
                                    "llm_rep_ratio",  "llm_rep_coverage", "spread",
                                    "challenger_entropy"};

std::string opt(const std::optional<double>& v, const char* missing) {
    return v ? format_number(*v) : std::string(missing);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error("report: expected a number, got '" + s + "'");
    return v;
}

std::optional<double> parse_opt(const std::string& s) {
    if (s == "undefined" || s == "unavailable") return std::nullopt;
    return parse_double(s);
}

std::size_t parse_count(const std::string& s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error("report: expected a count, got '" + s + "'");
    return v;
}

nlohmann::json opt_json(const std::optional<double>& v, const char* missing) {
    return v ? nlohmann::json(*v) : nlohmann::json(missing);
}

std::optional<double> opt_from_json(const nlohmann::json& j) {
    if (j.is_string()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

std::string report_csv_header() {
    std::string out;
    for (const char* c : kColumns) {
        if (!out.empty()) out += ',';
        out += c;
    }
    return out;
}

std::string report_csv_row(const IterationReport& r) {
    const auto& c = r.counts;
    std::ostringstream os;
    os << r.iteration << ',' << c.generated << ',' << c.valid << ',' << c.invalid << ','
       << c.malformed << ',' << c.replayed << ',' << c.solver_set << ','
       << opt(r.cross_iter_rep, "undefined") << ',' << opt(r.intra_iter_rep, "undefined") << ','
       << opt(r.llm_rep_ratio, "undefined") << ',' << format_number(r.llm_rep_coverage) << ','
       << opt(r.spread, "undefined") << ',' << opt(r.challenger_entropy, "unavailable");
    return os.str();
}

std::vector<IterationReport> parse_report_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || trim(line) != report_csv_header())
        throw Error("report: unexpected CSV header");
    std::vector<IterationReport> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(trim(line));
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != std::size(kColumns))
            throw Error("report: row has " + std::to_string(f.size()) + " fields");
        IterationReport r;
        r.iteration = static_cast<std::uint32_t>(parse_count(f[0]));
        r.counts = {parse_count(f[1]), parse_count(f[2]), parse_count(f[3]),
                    parse_count(f[4]), parse_count(f[5]), parse_count(f[6])};
        r.cross_iter_rep = parse_opt(f[7]);
        r.intra_iter_rep = parse_opt(f[8]);
        r.llm_rep_ratio = parse_opt(f[9]);
        r.llm_rep_coverage = parse_double(f[10]);
        r.spread = parse_opt(f[11]);
        r.challenger_entropy = parse_opt(f[12]);
        out.push_back(r);
    }
    return out;
}

nlohmann::ordered_json report_to_json(const IterationReport& r) {
    const auto& c = r.counts;
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["counts"] = {{"generated", c.generated}, {"valid", c.valid}, {"invalid", c.invalid},
                   {"malformed", c.malformed}, {"replayed", c.replayed},
                   {"solver_set", c.solver_set}};
    j["cross_iter_rep"] = opt_json(r.cross_iter_rep, "undefined");
    j["intra_iter_rep"] = opt_json(r.intra_iter_rep, "undefined");
    j["llm_rep_ratio"] = opt_json(r.llm_rep_ratio, "undefined");
    j["llm_rep_coverage"] = r.llm_rep_coverage;
    j["spread"] = opt_json(r.spread, "undefined");
    j["challenger_entropy"] = opt_json(r.challenger_entropy, "unavailable");
    return j;
}

IterationReport report_from_json(const nlohmann::json& j) {
    IterationReport r;
    r.iteration = j.at("iteration").get<std::uint32_t>();
    const auto& c = j.at("counts");
    r.counts = {c.at("generated").get<std::size_t>(), c.at("valid").get<std::size_t>(),
                c.at("invalid").get<std::size_t>(),   c.at("malformed").get<std::size_t>(),
                c.at("replayed").get<std::size_t>(),  c.at("solver_set").get<std::size_t>()};
    r.cross_iter_rep = opt_from_json(j.at("cross_iter_rep"));
    r.intra_iter_rep = opt_from_json(j.at("intra_iter_rep"));
    r.llm_rep_ratio = opt_from_json(j.at("llm_rep_ratio"));
    r.llm_rep_coverage = j.at("llm_rep_coverage").get<double>();
    r.spread = opt_from_json(j.at("spread"));
    r.challenger_entropy = opt_from_json(j.at("challenger_entropy"));
    return r;
}

std::string render_trend_table(std::span<const IterationReport> reports) {
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", *v);
        return std::string(buf);
    };
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%4s %6s %6s %9s %9s %9s %9s %9s %9s\n", "iter", "gen",
                  "valid", "replayed", "cross", "intra", "llm_dup", "spread", "entropy");
    out += line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%4u %6zu %6zu %9zu %9s %9s %9s %9s %9s\n", r.iteration,
                      r.counts.generated, r.counts.valid, r.counts.replayed,
                      cell(r.cross_iter_rep).c_str(), cell(r.intra_iter_rep).c_str(),
                      cell(r.llm_rep_ratio).c_str(), cell(r.spread).c_str(),
                      cell(r.challenger_entropy).c_str());
        out += line;
    }
    return out;
}

}  // namespace spdiv
