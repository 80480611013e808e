#include "spdiv/prompts.hpp"

#include "spdiv/core.hpp"
#include "spdiv/io.hpp"

namespace spdiv {

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    PromptSet p;
    const std::pair<const char*, std::string*> files[] = {
        {"solver_system", &p.solver_system},
        {"solver_user", &p.solver_user},
        {"challenger_system", &p.challenger_system},
        {"challenger_user", &p.challenger_user},
        {"code_generation", &p.code_generation},
        {"answer_check_system", &p.answer_check_system},
        {"answer_check_user", &p.answer_check_user},
        {"repetition_judge", &p.repetition_judge},
    };
    for (const auto& [name, field] : files) {
        const auto path = dir / (std::string(name) + ".txt");
        if (!std::filesystem::exists(path)) throw Error("missing prompt template " + path.string());
        *field = read_file(path);
    }
    return p;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string format_reference_problems(std::span<const std::string> refs) {
    std::string out;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (i) out += "\n\n";
        out += "Reference " + std::to_string(i + 1) + ":\n" + refs[i];
    }
    return out;
}

}  // namespace spdiv
