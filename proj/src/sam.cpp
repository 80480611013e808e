#include "spdiv/sam.hpp"

#include <fstream>

#include <json.hpp>

#include "spdiv/io.hpp"

namespace spdiv {

std::string_view to_string(Provenance p) {
    return p == Provenance::abstracted ? "abstracted" : "raw_text_fallback";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "abstracted") return Provenance::abstracted;
    if (s == "raw_text_fallback") return Provenance::raw_text_fallback;
    throw Error("unknown provenance '" + std::string(s) + "'");
}

std::optional<std::string> extract_code_block(std::string_view response) {
    static constexpr std::string_view kOpen = "<CODE>";
    static constexpr std::string_view kClose = "</CODE>";
    const auto open = response.find(kOpen);
    if (open == std::string_view::npos) return std::nullopt;
    const auto close = response.find(kClose, open + kOpen.size());
    if (close == std::string_view::npos) return std::nullopt;
    std::string body = trim(response.substr(open + kOpen.size(), close - open - kOpen.size()));
    if (body.empty()) return std::nullopt;
    return body;
}

std::optional<std::string> abstract_to_code(const Question& q, CoderBackend& coder,
                                            const PromptSet& prompts) {
    const std::vector<ChatMessage> messages = {
        {"user", render_template(prompts.code_generation, {{"question", q.text}})}};
    return extract_code_block(coder.complete(messages));
}

// Cache -------------------------------------------------------------------------

std::optional<std::optional<std::string>> SamCache::code(const std::string& text) const {
    std::lock_guard lock(mu_);
    auto it = code_.find(text);
    if (it == code_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::vector<float>> SamCache::embedding(const std::string& text) const {
    std::lock_guard lock(mu_);
    auto it = embedding_.find(text);
    if (it == embedding_.end()) return std::nullopt;
    return it->second;
}

void SamCache::put_code(const std::string& text, std::optional<std::string> code) {
    std::lock_guard lock(mu_);
    if (code_.emplace(text, std::move(code)).second) pending_code_[text] = true;
}

void SamCache::put_embedding(const std::string& text, std::vector<float> values) {
    std::lock_guard lock(mu_);
    if (!embedding_.empty() && embedding_.begin()->second.size() != values.size())
        throw DimensionError("SAM cache: embedding dimension " + std::to_string(values.size()) +
                             " differs from cached " +
                             std::to_string(embedding_.begin()->second.size()));
    if (embedding_.emplace(text, std::move(values)).second) pending_embedding_[text] = true;
}

std::size_t SamCache::code_entries() const {
    std::lock_guard lock(mu_);
    return code_.size();
}

std::size_t SamCache::embedding_entries() const {
    std::lock_guard lock(mu_);
    return embedding_.size();
}

std::size_t SamCache::dim() const {
    std::lock_guard lock(mu_);
    return embedding_.empty() ? 0 : embedding_.begin()->second.size();
}

namespace {

std::string hash_hex(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

}  // namespace

void SamCache::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    std::lock_guard lock(mu_);
    auto& cache = *this;
    std::ifstream in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto text = j.at("text").get<std::string>();
            if (j.at("key").get<std::string>() != hash_hex(text))
                throw Error("key does not match text hash");
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "code") {
                const auto& c = j.at("code");
                cache.code_.emplace(text, c.is_null() ? std::nullopt
                                                      : std::optional(c.get<std::string>()));
            } else if (kind == "embedding") {
                auto v = j.at("embedding").get<std::vector<float>>();
                if (!cache.embedding_.empty() && cache.embedding_.begin()->second.size() != v.size())
                    throw DimensionError("embedding dimension changes within the cache");
                cache.embedding_.emplace(text, std::move(v));
            } else {
                throw Error("unknown entry kind '" + kind + "'");
            }
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void SamCache::flush(const std::filesystem::path& path) {
    std::string out;
    {
        std::lock_guard lock(mu_);
        for (const auto& [text, _] : pending_code_) {
            const auto& c = code_.at(text);
            nlohmann::json j = {{"kind", "code"}, {"key", hash_hex(text)}, {"text", text},
                                {"code", c ? nlohmann::json(*c) : nlohmann::json(nullptr)}};
            out += j.dump() + "\n";
        }
        for (const auto& [text, _] : pending_embedding_) {
            nlohmann::json j = {{"kind", "embedding"}, {"key", hash_hex(text)}, {"text", text},
                                {"embedding", embedding_.at(text)}};
            out += j.dump() + "\n";
        }
        pending_code_.clear();
        pending_embedding_.clear();
    }
    if (!out.empty()) append_file(path, out);
}

// Pipeline ----------------------------------------------------------------------

SamPipeline::SamPipeline(CoderBackend& coder, EmbedderBackend& embedder, const PromptSet& prompts,
                         SamCache& cache)
    : coder_(coder), embedder_(embedder), prompts_(prompts), cache_(cache), dim_(cache.dim()) {}

Embedding SamPipeline::embed_text(const std::string& text) {
    const std::string key = trim(text);
    if (key.empty()) throw Error("cannot embed empty text");
    if (auto hit = cache_.embedding(key)) return Embedding::from_normalized(std::move(*hit));

    ++embedder_calls_;
    const auto raw = embedder_.embed(key);
    {
        std::lock_guard lock(dim_mu_);
        if (dim_ == 0) dim_ = raw.size();
        if (raw.size() != dim_)
            throw DimensionError("embedder returned dimension " + std::to_string(raw.size()) +
                                 ", run uses " + std::to_string(dim_));
    }
    Embedding e(raw);
    cache_.put_embedding(key, std::vector<float>(e.values().begin(), e.values().end()));
    // Another thread may have stored the same text first; both are equal
    // for a deterministic embedder, and the cached copy wins.
    return Embedding::from_normalized(*cache_.embedding(key));
}

std::optional<std::string> SamPipeline::code_for(const std::string& question_text) {
    const std::string key = trim(question_text);
    if (auto hit = cache_.code(key)) return *hit;
    ++coder_calls_;
    auto code = abstract_to_code(Question("", key, 0), coder_, prompts_);
    cache_.put_code(key, code);
    return *cache_.code(key);
}

SamResult SamPipeline::phi_sam(const Question& q, const Config& cfg) {
    if (!cfg.use_abstraction)
        return {q.id, std::nullopt, embed_text(q.text), Provenance::raw_text_fallback};
    auto code = code_for(q.text);
    if (code) {
        auto e = embed_text(*code);
        return {q.id, std::move(code), std::move(e), Provenance::abstracted};
    }
    return {q.id, std::nullopt, embed_text(q.text), Provenance::raw_text_fallback};
}

}  // namespace spdiv
