#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spdiv/backends.hpp"
#include "spdiv/core.hpp"

namespace spdiv {

enum class Provenance { abstracted, raw_text_fallback };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct SamResult {
    std::string question_id;
    std::optional<std::string> code;
    Embedding embedding;
    Provenance provenance = Provenance::raw_text_fallback;
};

/// Trimmed body of the first <CODE>...</CODE> block; absent when there is no
/// closed block or it is empty.
std::optional<std::string> extract_code_block(std::string_view response);

/// Sends the code-generation prompt for `q` and extracts the code block.
/// Transport failures propagate as TransportError; a reply without a block
/// yields nullopt.
std::optional<std::string> abstract_to_code(const Question& q, CoderBackend& coder,
                                            const PromptSet& prompts);

/// Question-text -> code and text -> embedding memo, shared by concurrent
/// callers and persisted as a JSONL log next to the bank.
class SamCache {
public:
    SamCache() = default;

    /// Outer optional: cached or not. Inner: the coder produced a block.
    std::optional<std::optional<std::string>> code(const std::string& text) const;
    std::optional<std::vector<float>> embedding(const std::string& text) const;
    void put_code(const std::string& text, std::optional<std::string> code);
    void put_embedding(const std::string& text, std::vector<float> values);

    std::size_t code_entries() const;
    std::size_t embedding_entries() const;
    /// Embedding dimension of the cached vectors; 0 when none are cached.
    std::size_t dim() const;

    /// Merges a log written by flush() into this cache. A missing file is
    /// an empty log. Loaded entries are not pending.
    void load(const std::filesystem::path& path);
    /// Appends entries added since load/last flush, sorted by (kind, text).
    void flush(const std::filesystem::path& path);

private:
    mutable std::mutex mu_;
    std::map<std::string, std::optional<std::string>> code_;
    std::map<std::string, std::vector<float>> embedding_;
    std::map<std::string, bool> pending_code_;
    std::map<std::string, bool> pending_embedding_;
};

/// Question -> canonical code -> unit embedding, with caching and fallback.
class SamPipeline {
public:
    SamPipeline(CoderBackend& coder, EmbedderBackend& embedder, const PromptSet& prompts,
                SamCache& cache);

    /// Normalized embedder output for the trimmed text. The first vector
    /// fixes the dimension; later vectors of another size raise DimensionError.
    Embedding embed_text(const std::string& text);

    /// Cached abstract_to_code for a question text.
    std::optional<std::string> code_for(const std::string& question_text);

    /// Embedding used for every similarity in a run:
    ///  - use_abstraction: code embedding when abstraction succeeds, else the
    ///    raw text embedding flagged raw_text_fallback;
    ///  - !use_abstraction: raw text embedding, no coder call.
    SamResult phi_sam(const Question& q, const Config& cfg);

    std::size_t coder_calls() const noexcept { return coder_calls_; }
    std::size_t embedder_calls() const noexcept { return embedder_calls_; }

private:
    CoderBackend& coder_;
    EmbedderBackend& embedder_;
    const PromptSet& prompts_;
    SamCache& cache_;
    std::mutex dim_mu_;
    std::size_t dim_ = 0;
    std::atomic<std::size_t> coder_calls_{0};
    std::atomic<std::size_t> embedder_calls_{0};
};

}  // namespace spdiv
