#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spdiv {

/// Base class for every error raised by the library.
inline constexpr const char* kVersion = "0.1.0";

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `key()` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

enum class QuestionSource { generated, replayed };

std::string_view to_string(QuestionSource s);
QuestionSource question_source_from_string(std::string_view s);

/// A generated problem statement plus where it came from.
struct Question {
    std::string id;
    std::string text;
    std::uint32_t iteration = 0;
    QuestionSource source = QuestionSource::generated;

    Question() = default;
    Question(std::string id, std::string text, std::uint32_t iteration,
             QuestionSource source = QuestionSource::generated);

    friend bool operator==(const Question&, const Question&) = default;
};

/// Unit-norm dense vector. Values are normalized once, at construction, so
/// cosine similarity between two embeddings is their dot product.
class Embedding {
public:
    /// Normalizes `raw`. Throws DimensionError on empty input and Error on
    /// non-finite entries or a zero vector.
    explicit Embedding(std::span<const double> raw);
    explicit Embedding(const std::vector<double>& raw)
        : Embedding(std::span<const double>(raw)) {}

    /// Adopts already-normalized values without rescaling (used when loading
    /// persisted embeddings, so a save/load cycle is bit-exact).
    static Embedding from_normalized(std::vector<float> values);

    std::span<const float> values() const noexcept { return values_; }
    std::size_t dim() const noexcept { return values_.size(); }
    double norm() const;

    friend bool operator==(const Embedding&, const Embedding&) = default;

private:
    Embedding() = default;
    std::vector<float> values_;
};

/// Cosine of two unit embeddings: dot product accumulated in double, in index
/// order, clamped to [-1, 1].
double dot(const Embedding& a, const Embedding& b);

/// One group of equivalent solver answers. Unparseable responses each get
/// their own group with `parseable == false`.
struct AnswerGroup {
    std::string answer;
    int count = 0;
    bool parseable = true;

    friend bool operator==(const AnswerGroup&, const AnswerGroup&) = default;
};

struct AnswerGroupSet {
    /// Sorted by count desc, then parseable before unparseable, then answer asc.
    std::vector<AnswerGroup> groups;
    int total = 0;
};

/// Per-question decomposition of the challenger reward.
struct RewardBreakdown {
    double uncertainty = 0.0;
    double p_rep = 0.0;
    double p_max = -1.0;
    double p_mean = -1.0;
    double p_map = 0.0;
    double total = 0.0;
    double alpha = 1.0;
    double beta = 1.0;

    /// uncertainty - alpha * p_rep - beta * p_map
    double recompute_total() const { return uncertainty - alpha * p_rep - beta * p_map; }
};

enum class SimilarityMode { sam, bleu };

std::string_view to_string(SimilarityMode m);

struct Config {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.5;
    double tau_max = 0.5;
    double tau_mean = 0.25;
    double rho = 0.3;
    double valid_lo = 0.3;
    double valid_hi = 0.8;
    int solver_samples = 10;
    int batch_size = 128;
    double cluster_threshold = 0.5;
    SimilarityMode similarity_mode = SimilarityMode::sam;

    bool use_map = true;
    bool use_max_term = true;
    bool use_mean_term = true;
    bool use_replay = true;
    bool use_abstraction = true;
    bool use_embedding_similarity = true;

    friend bool operator==(const Config&, const Config&) = default;
};

using RawConfig = std::map<std::string, std::string>;

/// Builds a Config from string key/value pairs, filling defaults for absent
/// keys. Throws ConfigError naming the key on unknown keys, unparseable or
/// out-of-range values, and on valid_lo > valid_hi.
Config validate_config(const RawConfig& raw);

/// Inverse of validate_config: every key, values formatted to round-trip.
RawConfig to_raw(const Config& cfg);

/// Flat JSON object, one member per config key.
std::string serialize_config(const Config& cfg);

/// Parses a flat JSON object (numbers, booleans or strings) into RawConfig.
RawConfig parse_config_document(std::string_view text);

/// Canonical answer form used for answer equivalence.
std::string normalize_answer(std::string_view raw);

/// FNV-1a 64-bit; stable across platforms.
std::uint64_t fnv1a64(std::string_view s);

std::string trim(std::string_view s);

}  // namespace spdiv
