#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace spdiv {

/// The prompt templates sent to model backends. The builtin set is compiled
/// from templates/*.txt; placeholders are `{name}`.
struct PromptSet {
    std::string solver_system;
    std::string solver_user;  // {problem}
    std::string challenger_system;
    std::string challenger_user;
    std::string code_generation;      // {question}
    std::string answer_check_system;
    std::string answer_check_user;    // {answer}, {response}
    std::string repetition_judge;     // {reference_problems}, {new_problem}

    static PromptSet builtin();
    /// Reads `<dir>/<field>.txt` for every field; throws Error if one is missing.
    static PromptSet load(const std::filesystem::path& dir);

    friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

/// Single-pass substitution of `{key}` placeholders. Unknown placeholders and
/// braces that are not placeholders are left as they are; substituted text is
/// never re-scanned.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// "Reference 1:\n<text>\n\nReference 2:\n<text>..."
std::string format_reference_problems(std::span<const std::string> refs);

}  // namespace spdiv
