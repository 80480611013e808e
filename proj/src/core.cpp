#include "spdiv/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>

#include <json.hpp>

namespace spdiv {

std::string_view to_string(QuestionSource s) {
    return s == QuestionSource::generated ? "generated" : "replayed";
}

QuestionSource question_source_from_string(std::string_view s) {
    if (s == "generated") return QuestionSource::generated;
    if (s == "replayed") return QuestionSource::replayed;
    throw Error("unknown question source '" + std::string(s) + "'");
}

Question::Question(std::string id_, std::string text_, std::uint32_t iteration_,
                   QuestionSource source_)
    : id(std::move(id_)), text(std::move(text_)), iteration(iteration_), source(source_) {
    if (text.empty()) throw Error("question text must be non-empty (id '" + id + "')");
}

Embedding::Embedding(std::span<const double> raw) {
    if (raw.empty()) throw DimensionError("embedding must have positive dimension");
    double sq = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw Error("embedding has a non-finite entry");
        sq += v * v;
    }
    if (sq == 0.0) throw Error("embedding is the zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    values_.reserve(raw.size());
    for (double v : raw) values_.push_back(static_cast<float>(v * inv));
}

Embedding Embedding::from_normalized(std::vector<float> values) {
    if (values.empty()) throw DimensionError("embedding must have positive dimension");
    double sq = 0.0;
    for (float v : values) {
        if (!std::isfinite(v)) throw Error("embedding has a non-finite entry");
        sq += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) throw Error("stored embedding is not unit-norm");
    Embedding e;
    e.values_ = std::move(values);
    return e;
}

double Embedding::norm() const {
    double sq = 0.0;
    for (float v : values_) sq += static_cast<double>(v) * v;
    return std::sqrt(sq);
}

double dot(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim())
        throw DimensionError("embedding dimension mismatch: " + std::to_string(a.dim()) +
                             " vs " + std::to_string(b.dim()));
    const auto av = a.values();
    const auto bv = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += static_cast<double>(av[i]) * bv[i];
    // f32 rounding can push a self-similarity just past 1
    return std::clamp(s, -1.0, 1.0);
}

std::string_view to_string(SimilarityMode m) { return m == SimilarityMode::sam ? "sam" : "bleu"; }

namespace {

double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || !std::isfinite(out))
        throw ConfigError(key, key + ": expected a real number, got '" + value + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& value) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError(key, key + ": expected an integer, got '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key, key + ": expected true/false, got '" + value + "'");
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void require_range(const std::string& key, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi))
        throw ConfigError(key, key + " out of [" + format_real(lo) + "," + format_real(hi) + "]");
}

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <typename M>
Field real_field(const char* key, M member) {
    return {[key, member](Config& c, const std::string& v) { c.*member = parse_real(key, v); },
            [member](const Config& c) { return format_real(c.*member); }};
}

template <typename M>
Field bool_field(const char* key, M member) {
    return {[key, member](Config& c, const std::string& v) { c.*member = parse_bool(key, v); },
            [member](const Config& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"alpha", real_field("alpha", &Config::alpha)},
        {"beta", real_field("beta", &Config::beta)},
        {"gamma", real_field("gamma", &Config::gamma)},
        {"tau_max", real_field("tau_max", &Config::tau_max)},
        {"tau_mean", real_field("tau_mean", &Config::tau_mean)},
        {"rho", real_field("rho", &Config::rho)},
        {"valid_lo", real_field("valid_lo", &Config::valid_lo)},
        {"valid_hi", real_field("valid_hi", &Config::valid_hi)},
        {"cluster_threshold", real_field("cluster_threshold", &Config::cluster_threshold)},
        {"solver_samples",
         {[](Config& c, const std::string& v) { c.solver_samples = parse_int("solver_samples", v); },
          [](const Config& c) { return std::to_string(c.solver_samples); }}},
        {"batch_size",
         {[](Config& c, const std::string& v) { c.batch_size = parse_int("batch_size", v); },
          [](const Config& c) { return std::to_string(c.batch_size); }}},
        {"similarity_mode",
         {[](Config& c, const std::string& v) {
              if (v == "sam")
                  c.similarity_mode = SimilarityMode::sam;
              else if (v == "bleu")
                  c.similarity_mode = SimilarityMode::bleu;
              else
                  throw ConfigError("similarity_mode",
                                    "similarity_mode: expected sam or bleu, got '" + v + "'");
          },
          [](const Config& c) { return std::string(to_string(c.similarity_mode)); }}},
        {"use_map", bool_field("use_map", &Config::use_map)},
        {"use_max_term", bool_field("use_max_term", &Config::use_max_term)},
        {"use_mean_term", bool_field("use_mean_term", &Config::use_mean_term)},
        {"use_replay", bool_field("use_replay", &Config::use_replay)},
        {"use_abstraction", bool_field("use_abstraction", &Config::use_abstraction)},
        {"use_embedding_similarity",
         bool_field("use_embedding_similarity", &Config::use_embedding_similarity)},
    };
    return table;
}

}  // namespace

Config validate_config(const RawConfig& raw) {
    Config cfg;
    const auto& table = fields();
    for (const auto& [key, value] : raw) {
        auto it = table.find(key);
        if (it == table.end()) throw ConfigError(key, "unknown config key '" + key + "'");
        it->second.set(cfg, trim(value));
    }
    if (!(cfg.alpha >= 0.0)) throw ConfigError("alpha", "alpha must be >= 0");
    if (!(cfg.beta >= 0.0)) throw ConfigError("beta", "beta must be >= 0");
    require_range("gamma", cfg.gamma, 0.0, 1.0);
    require_range("tau_max", cfg.tau_max, 0.0, 1.0);
    require_range("tau_mean", cfg.tau_mean, 0.0, 1.0);
    if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw ConfigError("rho", "rho out of [0,1)");
    require_range("valid_lo", cfg.valid_lo, 0.0, 1.0);
    require_range("valid_hi", cfg.valid_hi, 0.0, 1.0);
    if (cfg.valid_lo > cfg.valid_hi)
        throw ConfigError("valid_lo", "valid_lo must not exceed valid_hi");
    require_range("cluster_threshold", cfg.cluster_threshold, 0.0, 1.0);
    if (cfg.solver_samples < 1)
        throw ConfigError("solver_samples", "solver_samples must be positive");
    if (cfg.batch_size < 1) throw ConfigError("batch_size", "batch_size must be positive");
    return cfg;
}

RawConfig to_raw(const Config& cfg) {
    RawConfig out;
    for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
    return out;
}

std::string serialize_config(const Config& cfg) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (const auto& [key, value] : to_raw(cfg)) {
        if (value == "true" || value == "false")
            doc[key] = value == "true";
        else if (key == "similarity_mode")
            doc[key] = value;
        else
            doc[key] = nlohmann::json::parse(value);
    }
    return doc.dump(2) + "\n";
}

RawConfig parse_config_document(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("config document is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("", "config document must be a flat JSON object");
    RawConfig out;
    for (const auto& [key, value] : doc.items()) {
        if (value.is_boolean())
            out[key] = value.get<bool>() ? "true" : "false";
        else if (value.is_number_integer())
            out[key] = std::to_string(value.get<long long>());
        else if (value.is_number())
            out[key] = format_real(value.get<double>());
        else if (value.is_string())
            out[key] = value.get<std::string>();
        else
            throw ConfigError(key, key + ": nested values are not allowed");
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_answer(std::string_view raw) {
    std::string s = trim(raw);
    for (;;) {
        std::size_t b = 0, e = s.size();
        while (b < e && s[b] == '$') ++b;
        while (e > b && s[e - 1] == '$') --e;
        std::string next = trim(std::string_view(s).substr(b, e - b));
        if (next == s) break;
        s = std::move(next);
    }

    std::string collapsed;
    collapsed.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) {
            // no space survives next to a fraction slash
            if (c != '/' && (collapsed.empty() || collapsed.back() != '/')) collapsed.push_back(' ');
            pending_space = false;
        }
        collapsed.push_back(static_cast<char>(std::tolower(c)));
    }
    return collapsed;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace spdiv
