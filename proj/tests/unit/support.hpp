#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "spdiv/backends.hpp"
#include "spdiv/core.hpp"
#include "spdiv/mock.hpp"
#include "spdiv/rng.hpp"

namespace spdiv::test {

inline nlohmann::json oracles() {
    std::ifstream in(std::string(SPDIV_FIXTURES) + "/oracles.json");
    return nlohmann::json::parse(in);
}

inline std::filesystem::path desk_scenario() {
    return std::filesystem::path(SPDIV_SCENARIOS) / "desk.json";
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("spdiv-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline Embedding unit(std::vector<double> v) { return Embedding(v); }

/// Basis vector e_i in `dim` dimensions.
inline Embedding basis(std::size_t dim, std::size_t i, double sign = 1.0) {
    std::vector<double> v(dim, 0.0);
    v[i] = sign;
    return Embedding(v);
}

inline Embedding random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    return Embedding(v);
}

/// Coder that answers from a fixed table keyed by question text.
class TableCoder : public CoderBackend {
public:
    std::map<std::string, std::string> replies;
    std::string fallback = "I cannot write code for this.";
    std::atomic<int> calls{0};

    std::string complete(const std::vector<ChatMessage>& messages) override {
        ++calls;
        const std::string& prompt = messages.back().content;
        for (const auto& [q, reply] : replies)
            if (prompt.find(q) != std::string::npos) return reply;
        return fallback;
    }
};

/// Embedder that hashes text to a deterministic vector.
class HashEmbedder : public EmbedderBackend {
public:
    explicit HashEmbedder(std::size_t dim = 8) : dim_(dim) {}
    std::atomic<int> calls{0};
    std::vector<double> embed(const std::string& text) override {
        ++calls;
        Rng rng(fnv1a64(text));
        std::vector<double> v(dim_);
        for (auto& x : v) x = rng.normal();
        return v;
    }

private:
    std::size_t dim_;
};

}  // namespace spdiv::test
