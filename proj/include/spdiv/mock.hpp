#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spdiv/backends.hpp"

namespace spdiv {

/// Malformed scenario document. `key()` holds the offending field path,
/// e.g. "families[2].solver_accuracy".
class ScenarioError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class ChallengerPolicy { penalty_aware, ignore_penalties };

struct ParamRange {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
};

/// A latent skill: every template phrases the same procedure, rendered to
/// code by `program`.
struct SkillFamily {
    std::string id;
    double weight = 1.0;
    double solver_accuracy = 0.5;
    int distractors = 2;
    std::map<std::string, ParamRange> params;
    std::vector<std::string> templates;
    std::string program;
};

struct Scenario {
    std::vector<SkillFamily> families;
    ChallengerPolicy policy = ChallengerPolicy::penalty_aware;
    double policy_temperature = 0.5;
    double penalty_sensitivity = 4.0;
    double noise_scale = 0.15;
    int noise_dims = 16;
    double malformed_rate = 0.0;
    double unparseable_rate = 0.0;
    int logprobs_top_k = 0;
};

Scenario parse_scenario(std::string_view json_text);
Scenario scenario_from_json(const nlohmann::json& doc);

/// What the mock world recognises in a piece of text.
struct Recognized {
    std::size_t family = 0;
    /// Template index, or nullopt when the text is the family's program.
    std::optional<std::size_t> template_index;
    std::map<std::string, std::int64_t> params;
};

/// Immutable ground truth behind the mock roles.
class MockWorld {
public:
    explicit MockWorld(Scenario scenario);

    const Scenario& scenario() const noexcept { return scenario_; }
    std::size_t embedding_dim() const noexcept { return dim_; }

    std::optional<Recognized> recognize_question(std::string_view text) const;
    std::optional<Recognized> recognize_program(std::string_view text) const;
    /// Family id of a question text, if it came from a template.
    std::optional<std::string> family_of(std::string_view question_text) const;

    std::string render_question(std::size_t family, std::size_t tmpl,
                                const std::map<std::string, std::int64_t>& params) const;
    std::string render_program(std::size_t family,
                               const std::map<std::string, std::int64_t>& params) const;
    std::string answer(std::size_t family, const std::map<std::string, std::int64_t>& params) const;
    /// Template 0 with every parameter at its lower bound.
    std::string prototype(std::size_t family) const;

    /// Program text -> skill vector (same family: cosine >= 0.95);
    /// question text -> surface vector; anything else -> hash vector.
    std::vector<double> embed(std::string_view text) const;

private:
    Scenario scenario_;
    std::size_t dim_ = 0;
    std::vector<std::size_t> surface_offset_;
};

/// All five roles backed by `world`. Each role is a pure function of
/// (suite seed, per-call seed, inputs).
BackendSuite make_mock_suite(std::uint64_t seed, std::shared_ptr<const MockWorld> world);
BackendSuite make_mock_suite(std::uint64_t seed, const Scenario& scenario);

}  // namespace spdiv
