#include "spdiv/mock.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "spdiv/rng.hpp"

namespace spdiv {

namespace {

// Template pieces ---------------------------------------------------------------

struct Piece {
    bool param = false;
    std::string text;  // literal text or parameter name
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Piece> split_template(std::string_view t) {
    std::vector<Piece> out;
    std::string lit;
    std::size_t i = 0;
    while (i < t.size()) {
        if (t[i] == '{' && i + 1 < t.size() && ident_start(t[i + 1])) {
            std::size_t j = i + 1;
            while (j < t.size() && ident_char(t[j])) ++j;
            if (j < t.size() && t[j] == '}') {
                if (!lit.empty()) out.push_back({false, std::move(lit)});
                lit.clear();
                out.push_back({true, std::string(t.substr(i + 1, j - i - 1))});
                i = j + 1;
                continue;
            }
        }
        lit.push_back(t[i++]);
    }
    if (!lit.empty()) out.push_back({false, std::move(lit)});
    return out;
}

std::optional<std::map<std::string, std::int64_t>> match_template(std::string_view tmpl,
                                                                  std::string_view text) {
    const auto pieces = split_template(tmpl);
    std::map<std::string, std::int64_t> params;
    std::size_t pos = 0;
    for (const auto& p : pieces) {
        if (!p.param) {
            if (text.substr(pos, p.text.size()) != p.text) return std::nullopt;
            pos += p.text.size();
            continue;
        }
        std::size_t end = pos;
        if (end < text.size() && text[end] == '-') ++end;
        const std::size_t digits = end;
        while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
        if (end == digits || end - digits > 15) return std::nullopt;
        const std::int64_t v = std::stoll(std::string(text.substr(pos, end - pos)));
        auto [it, inserted] = params.emplace(p.text, v);
        if (!inserted && it->second != v) return std::nullopt;
        pos = end;
    }
    if (pos != text.size()) return std::nullopt;
    return params;
}

std::string render_pieces(std::string_view tmpl, const std::map<std::string, std::int64_t>& params) {
    std::string out;
    for (const auto& p : split_template(tmpl)) {
        if (!p.param) {
            out += p.text;
            continue;
        }
        auto it = params.find(p.text);
        if (it == params.end()) throw Error("mock: missing parameter '" + p.text + "'");
        out += std::to_string(it->second);
    }
    return out;
}

std::string canonical_params(const std::map<std::string, std::int64_t>& params) {
    std::string out;
    for (const auto& [k, v] : params) out += k + "=" + std::to_string(v) + ";";
    return out;
}

/// Unit-variance gaussian entries seeded from `key`, normalized to unit length.
std::vector<double> hash_direction(std::string_view key, std::size_t n) {
    Rng rng(fnv1a64(key));
    std::vector<double> v(n);
    double sq = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        sq += x * x;
    }
    const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (auto& x : v) x *= inv;
    return v;
}

// Scenario parsing ----------------------------------------------------------------

template <typename T>
T field(const nlohmann::json& obj, const std::string& path, const char* name, T fallback) {
    if (!obj.contains(name)) return fallback;
    try {
        return obj.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ScenarioError(path + name, path + name + ": wrong type");
    }
}

void check(bool ok, const std::string& path, const std::string& msg) {
    if (!ok) throw ScenarioError(path, path + ": " + msg);
}

void check_placeholders(std::string_view tmpl, const SkillFamily& fam, const std::string& path) {
    const auto pieces = split_template(tmpl);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (!pieces[i].param) continue;
        check(fam.params.count(pieces[i].text) == 1, path,
              "undeclared parameter '" + pieces[i].text + "'");
        check(i + 1 >= pieces.size() || !pieces[i + 1].param, path,
              "adjacent placeholders cannot be matched");
    }
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& doc) {
    check(doc.is_object(), "scenario", "must be a JSON object");
    static const std::set<std::string> known = {
        "families",     "challenger_policy", "policy_temperature", "penalty_sensitivity",
        "noise_scale",  "noise_dims",        "malformed_rate",     "unparseable_rate",
        "logprobs_top_k"};
    for (const auto& [k, _] : doc.items()) check(known.count(k) == 1, k, "unknown field");

    Scenario s;
    const std::string root;
    const auto policy = field<std::string>(doc, root, "challenger_policy", "penalty_aware");
    if (policy == "penalty_aware")
        s.policy = ChallengerPolicy::penalty_aware;
    else if (policy == "ignore_penalties")
        s.policy = ChallengerPolicy::ignore_penalties;
    else
        check(false, "challenger_policy", "expected penalty_aware or ignore_penalties");
    s.policy_temperature = field(doc, root, "policy_temperature", s.policy_temperature);
    check(s.policy_temperature >= 0.0, "policy_temperature", "must be >= 0");
    s.penalty_sensitivity = field(doc, root, "penalty_sensitivity", s.penalty_sensitivity);
    check(s.penalty_sensitivity >= 0.0, "penalty_sensitivity", "must be >= 0");
    s.noise_scale = field(doc, root, "noise_scale", s.noise_scale);
    check(s.noise_scale >= 0.0 && s.noise_scale <= 0.2, "noise_scale",
          "must be in [0,0.2] to keep same-family cosine >= 0.96");
    s.noise_dims = field(doc, root, "noise_dims", s.noise_dims);
    check(s.noise_dims >= 1, "noise_dims", "must be positive");
    s.malformed_rate = field(doc, root, "malformed_rate", s.malformed_rate);
    check(s.malformed_rate >= 0.0 && s.malformed_rate <= 1.0, "malformed_rate", "out of [0,1]");
    s.unparseable_rate = field(doc, root, "unparseable_rate", s.unparseable_rate);
    check(s.unparseable_rate >= 0.0 && s.unparseable_rate <= 1.0, "unparseable_rate",
          "out of [0,1]");
    s.logprobs_top_k = field(doc, root, "logprobs_top_k", s.logprobs_top_k);
    check(s.logprobs_top_k >= 0, "logprobs_top_k", "must be >= 0");

    check(doc.contains("families") && doc["families"].is_array() && !doc["families"].empty(),
          "families", "must be a non-empty array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < doc["families"].size(); ++i) {
        const auto& f = doc["families"][i];
        const std::string path = "families[" + std::to_string(i) + "]";
        check(f.is_object(), path, "must be an object");
        SkillFamily fam;
        fam.id = field<std::string>(f, path + ".", "id", "");
        check(!fam.id.empty(), path + ".id", "must be a non-empty string");
        check(ids.insert(fam.id).second, path + ".id", "duplicate family id '" + fam.id + "'");
        fam.weight = field(f, path + ".", "weight", fam.weight);
        check(fam.weight > 0.0, path + ".weight", "must be > 0");
        fam.solver_accuracy = field(f, path + ".", "solver_accuracy", fam.solver_accuracy);
        check(fam.solver_accuracy >= 0.0 && fam.solver_accuracy <= 1.0, path + ".solver_accuracy",
              "out of [0,1]");
        fam.distractors = field(f, path + ".", "distractors", fam.distractors);
        check(fam.distractors >= 1, path + ".distractors", "must be >= 1");
        if (f.contains("params")) {
            check(f["params"].is_object(), path + ".params", "must be an object");
            for (const auto& [name, range] : f["params"].items()) {
                const std::string ppath = path + ".params." + name;
                check(range.is_array() && range.size() == 2 && range[0].is_number_integer() &&
                          range[1].is_number_integer(),
                      ppath, "must be [lo, hi] integers");
                ParamRange r{range[0].get<std::int64_t>(), range[1].get<std::int64_t>()};
                check(r.lo <= r.hi, ppath, "lo must not exceed hi");
                fam.params.emplace(name, r);
            }
        }
        check(f.contains("templates") && f["templates"].is_array() && !f["templates"].empty(),
              path + ".templates", "must be a non-empty array");
        for (std::size_t t = 0; t < f["templates"].size(); ++t) {
            const std::string tpath = path + ".templates[" + std::to_string(t) + "]";
            check(f["templates"][t].is_string(), tpath, "must be a string");
            fam.templates.push_back(f["templates"][t].get<std::string>());
            check(!trim(fam.templates.back()).empty(), tpath, "must be non-empty");
            check_placeholders(fam.templates.back(), fam, tpath);
        }
        fam.program = field<std::string>(f, path + ".", "program", "");
        check(!fam.program.empty(), path + ".program", "must be a non-empty string");
        check_placeholders(fam.program, fam, path + ".program");
        s.families.push_back(std::move(fam));
    }
    return s;
}

Scenario parse_scenario(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError("", std::string("scenario is not valid JSON: ") + e.what());
    }
    return scenario_from_json(doc);
}

// World -------------------------------------------------------------------------

MockWorld::MockWorld(Scenario scenario) : scenario_(std::move(scenario)) {
    std::size_t offset = scenario_.families.size();
    for (const auto& f : scenario_.families) {
        surface_offset_.push_back(offset);
        offset += f.templates.size();
    }
    dim_ = offset + static_cast<std::size_t>(scenario_.noise_dims);
}

std::optional<Recognized> MockWorld::recognize_question(std::string_view text) const {
    const std::string t = trim(text);
    for (std::size_t f = 0; f < scenario_.families.size(); ++f) {
        const auto& fam = scenario_.families[f];
        for (std::size_t i = 0; i < fam.templates.size(); ++i)
            if (auto p = match_template(fam.templates[i], t)) return Recognized{f, i, std::move(*p)};
    }
    return std::nullopt;
}

std::optional<Recognized> MockWorld::recognize_program(std::string_view text) const {
    const std::string t = trim(text);
    for (std::size_t f = 0; f < scenario_.families.size(); ++f)
        if (auto p = match_template(scenario_.families[f].program, t))
            return Recognized{f, std::nullopt, std::move(*p)};
    return std::nullopt;
}

std::optional<std::string> MockWorld::family_of(std::string_view question_text) const {
    if (auto r = recognize_question(question_text)) return scenario_.families[r->family].id;
    return std::nullopt;
}

std::string MockWorld::render_question(std::size_t family, std::size_t tmpl,
                                       const std::map<std::string, std::int64_t>& params) const {
    return render_pieces(scenario_.families.at(family).templates.at(tmpl), params);
}

std::string MockWorld::render_program(std::size_t family,
                                      const std::map<std::string, std::int64_t>& params) const {
    return render_pieces(scenario_.families.at(family).program, params);
}

std::string MockWorld::answer(std::size_t family,
                              const std::map<std::string, std::int64_t>& params) const {
    const auto h = fnv1a64(scenario_.families.at(family).id + "|" + canonical_params(params));
    return std::to_string(10 + h % 990);
}

std::string MockWorld::prototype(std::size_t family) const {
    std::map<std::string, std::int64_t> params;
    for (const auto& [name, r] : scenario_.families.at(family).params) params[name] = r.lo;
    return render_question(family, 0, params);
}

std::vector<double> MockWorld::embed(std::string_view text) const {
    std::vector<double> v(dim_, 0.0);
    const std::size_t noise_at = dim_ - static_cast<std::size_t>(scenario_.noise_dims);
    const double eps = scenario_.noise_scale;
    if (auto r = recognize_program(text)) {
        const auto& fam = scenario_.families[r->family];
        const auto u = hash_direction("skill|" + fam.id + "|" + canonical_params(r->params),
                                      static_cast<std::size_t>(scenario_.noise_dims));
        // noise stays in the positive orthant, so same-family cosine >= 1 - eps^2
        v[r->family] = std::sqrt(1.0 - eps * eps);
        for (std::size_t i = 0; i < u.size(); ++i) v[noise_at + i] = eps * std::abs(u[i]);
        return v;
    }
    if (auto r = recognize_question(text)) {
        const auto u = hash_direction("text|" + trim(text),
                                      static_cast<std::size_t>(scenario_.noise_dims));
        v[r->family] = 0.6;
        v[surface_offset_[r->family] + *r->template_index] = 0.8;
        for (std::size_t i = 0; i < u.size(); ++i) v[noise_at + i] = eps * u[i];
        return v;
    }
    return hash_direction("other|" + std::string(text), dim_);
}

// Roles -------------------------------------------------------------------------

namespace {

std::string last_user_content(const std::vector<ChatMessage>& messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->role == "user") return it->content;
    throw Error("mock backend: request has no user message");
}

std::vector<TokenProb> top_k(std::vector<TokenProb> probs, std::size_t k) {
    std::stable_sort(probs.begin(), probs.end(),
                     [](const TokenProb& a, const TokenProb& b) { return a.probability > b.probability; });
    if (probs.size() > k) probs.resize(k);
    return probs;
}

std::vector<TokenProb> uniform_tokens(const std::vector<std::string>& tokens, std::size_t k) {
    std::vector<TokenProb> out;
    for (const auto& t : tokens) out.push_back({t, 1.0 / static_cast<double>(tokens.size())});
    return top_k(std::move(out), k);
}

class MockChallenger final : public ChallengerBackend {
public:
    MockChallenger(std::uint64_t seed, std::shared_ptr<const MockWorld> w)
        : seed_(seed), world_(std::move(w)) {}

    std::vector<Completion> propose(const std::vector<ChatMessage>&, std::size_t n,
                                    std::uint64_t seed, const GenerationContext& ctx) override {
        const auto& sc = world_->scenario();
        const std::size_t nf = sc.families.size();
        const bool aware = sc.policy == ChallengerPolicy::penalty_aware;

        // Per-family base preference and the memory penalty of a representative.
        std::vector<double> base(nf), probe(nf, 0.0);
        for (std::size_t f = 0; f < nf; ++f) {
            const auto& fam = sc.families[f];
            const double r = std::min(fam.solver_accuracy, 1.0 - fam.solver_accuracy);
            base[f] = std::log(fam.weight) + sc.penalty_sensitivity * r;
            if (aware && ctx.map_penalty_probe && ctx.beta > 0.0)
                probe[f] = ctx.map_penalty_probe(world_->prototype(f));
        }

        std::vector<int> chosen(nf, 0);
        std::vector<Completion> out;
        out.reserve(n);
        for (std::size_t slot = 0; slot < n; ++slot) {
            Rng rng(derive_seed(seed_ ^ seed, "mock-challenger", {slot}));
            std::vector<double> score(nf);
            for (std::size_t f = 0; f < nf; ++f) {
                score[f] = base[f];
                if (aware) {
                    const double batch_share = static_cast<double>(chosen[f] + 1) / static_cast<double>(n);
                    score[f] -= sc.penalty_sensitivity * (ctx.alpha * batch_share + ctx.beta * probe[f]);
                }
            }
            std::size_t pick = 0;
            double best = -INFINITY;
            for (std::size_t f = 0; f < nf; ++f) {
                const double s = score[f] + sc.policy_temperature * rng.gumbel();
                if (s > best) {
                    best = s;
                    pick = f;
                }
            }
            ++chosen[pick];

            const auto& fam = sc.families[pick];
            const auto tmpl = static_cast<std::size_t>(rng.uniform_index(fam.templates.size()));
            std::map<std::string, std::int64_t> params;
            for (const auto& [name, r] : fam.params) params[name] = rng.uniform_int(r.lo, r.hi);

            const bool malformed = rng.uniform01() < sc.malformed_rate;
            Completion c;
            c.text = "<question>\n" + world_->render_question(pick, tmpl, params) + "\n" +
                     (malformed ? "" : "</question>\n") + "\n\\boxed{" +
                     world_->answer(pick, params) + "}";
            if (sc.logprobs_top_k > 0)
                c.logprobs = distribution(score, pick, static_cast<std::size_t>(sc.logprobs_top_k));
            out.push_back(std::move(c));
        }
        return out;
    }

    bool logprobs_capable() const override { return world_->scenario().logprobs_top_k > 0; }

private:
    /// Scripted token distributions: the family choice (softmax of the policy
    /// scores), the template choice, and one position per parameter.
    TokenDistribution distribution(const std::vector<double>& score, std::size_t pick,
                                   std::size_t k) const {
        const auto& sc = world_->scenario();
        TokenDistribution d;
        const double temp = std::max(sc.policy_temperature, 1e-3);
        const double top = *std::max_element(score.begin(), score.end());
        double z = 0.0;
        for (double s : score) z += std::exp((s - top) / temp);
        std::vector<TokenProb> fam;
        for (std::size_t f = 0; f < score.size(); ++f)
            fam.push_back({sc.families[f].id, std::exp((score[f] - top) / temp) / z});
        d.positions.push_back(top_k(std::move(fam), k));

        std::vector<std::string> tmpl_tokens;
        for (std::size_t t = 0; t < sc.families[pick].templates.size(); ++t)
            tmpl_tokens.push_back("t" + std::to_string(t));
        d.positions.push_back(uniform_tokens(tmpl_tokens, k));

        for (const auto& [name, r] : sc.families[pick].params) {
            std::vector<std::string> values;
            for (std::int64_t v = r.lo; v <= r.hi && values.size() < k; ++v)
                values.push_back(std::to_string(v));
            d.positions.push_back(uniform_tokens(values, k));
        }
        return d;
    }

    std::uint64_t seed_;
    std::shared_ptr<const MockWorld> world_;
};

class MockSolver final : public SolverBackend {
public:
    MockSolver(std::uint64_t seed, std::shared_ptr<const MockWorld> w)
        : seed_(seed), world_(std::move(w)) {}

    std::vector<std::string> sample(const std::vector<ChatMessage>& messages, int k,
                                    std::uint64_t seed) override {
        const std::string problem = last_user_content(messages);
        Rng rng(derive_seed(seed_ ^ seed, "mock-solver", {fnv1a64(problem)}));
        std::vector<std::string> answers;
        if (auto r = world_->recognize_question(problem)) {
            const auto& fam = world_->scenario().families[r->family];
            const std::string truth = world_->answer(r->family, r->params);
            const auto correct = static_cast<int>(std::llround(fam.solver_accuracy * k));
            for (int i = 0; i < correct; ++i) answers.push_back(truth);
            const std::int64_t t = std::stoll(truth);
            for (int i = correct; i < k; ++i)
                answers.push_back(std::to_string(t + 1 + (i - correct) % fam.distractors));
        } else {
            // Unknown problem: every sample guesses differently.
            for (int i = 0; i < k; ++i) answers.push_back(std::to_string(rng.uniform_int(0, 999999)));
        }
        for (std::size_t i = answers.size(); i > 1; --i)
            std::swap(answers[i - 1], answers[rng.uniform_index(i)]);

        std::vector<std::string> out;
        for (const auto& a : answers) {
            if (rng.uniform01() < world_->scenario().unparseable_rate)
                out.push_back("I could not finish this one.");
            else
                out.push_back("Working through the problem step by step gives \\boxed{" + a + "}");
        }
        return out;
    }

private:
    std::uint64_t seed_;
    std::shared_ptr<const MockWorld> world_;
};

class MockCoder final : public CoderBackend {
public:
    explicit MockCoder(std::shared_ptr<const MockWorld> w) : world_(std::move(w)) {}

    std::string complete(const std::vector<ChatMessage>& messages) override {
        static constexpr std::string_view kMarker = "Input Question: ";
        const std::string prompt = last_user_content(messages);
        const auto at = prompt.rfind(kMarker);
        if (at == std::string::npos) return "I need a question to encode.";
        const auto q = std::string_view(prompt).substr(at + kMarker.size());
        if (auto r = world_->recognize_question(q))
            return "<CODE>\n" + world_->render_program(r->family, r->params) + "\n</CODE>";
        return "This question does not describe a well-defined computation.";
    }

private:
    std::shared_ptr<const MockWorld> world_;
};

class MockEmbedder final : public EmbedderBackend {
public:
    explicit MockEmbedder(std::shared_ptr<const MockWorld> w) : world_(std::move(w)) {}
    std::vector<double> embed(const std::string& text) override { return world_->embed(text); }

private:
    std::shared_ptr<const MockWorld> world_;
};

std::string between(std::string_view s, std::string_view open, std::string_view close) {
    const auto a = s.find(open);
    if (a == std::string_view::npos) throw Error("mock judge: prompt lacks '" + std::string(open) + "'");
    const auto b = s.find(close, a + open.size());
    if (b == std::string_view::npos) throw Error("mock judge: prompt lacks '" + std::string(close) + "'");
    return std::string(s.substr(a + open.size(), b - a - open.size()));
}

std::vector<std::string> split_references(const std::string& block) {
    std::vector<std::string> out;
    for (std::size_t i = 1;; ++i) {
        const std::string head = "Reference " + std::to_string(i) + ":\n";
        const std::string next = "\n\nReference " + std::to_string(i + 1) + ":\n";
        const auto a = block.find(head);
        if (a == std::string::npos) break;
        const auto b = block.find(next, a + head.size());
        out.push_back(block.substr(a + head.size(),
                                   b == std::string::npos ? std::string::npos : b - a - head.size()));
        if (b == std::string::npos) break;
    }
    return out;
}

class MockJudge final : public JudgeBackend {
public:
    explicit MockJudge(std::shared_ptr<const MockWorld> w) : world_(std::move(w)) {}

    std::string complete(const std::vector<ChatMessage>& messages) override {
        const std::string prompt = last_user_content(messages);
        static constexpr std::string_view kAnswer = "Hi, there is an answer: ";
        if (prompt.rfind(kAnswer, 0) == 0) {
            const auto answer = between(prompt, kAnswer, ", and the ground truth answer is: ");
            const auto truth = between(prompt, "the ground truth answer is: ", ", please check");
            return normalize_answer(answer) == normalize_answer(truth) ? "Yes" : "No";
        }
        const auto refs = split_references(
            between(prompt, "## REFERENCE PROBLEMS (from previous iterations):\n",
                    "\n\n## NEW PROBLEM"));
        const auto fresh = between(prompt, "## NEW PROBLEM (from current iteration):\n",
                                   "\n\n## Important:");
        const auto fam = world_->family_of(fresh);
        for (const auto& r : refs) {
            if (fam ? world_->family_of(r) == fam : trim(r) == trim(fresh)) return "DUPLICATE";
        }
        return "NOVEL";
    }

private:
    std::shared_ptr<const MockWorld> world_;
};

}  // namespace

BackendSuite make_mock_suite(std::uint64_t seed, std::shared_ptr<const MockWorld> world) {
    BackendSuite suite;
    suite.challenger = std::make_unique<MockChallenger>(seed, world);
    suite.solver = std::make_unique<MockSolver>(seed, world);
    suite.coder = std::make_unique<MockCoder>(world);
    suite.embedder = std::make_unique<MockEmbedder>(world);
    suite.judge = std::make_unique<MockJudge>(world);
    suite.max_in_flight = 4;
    return suite;
}

BackendSuite make_mock_suite(std::uint64_t seed, const Scenario& scenario) {
    return make_mock_suite(seed, std::make_shared<const MockWorld>(scenario));
}

}  // namespace spdiv
