#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdiv/core.hpp"

namespace spdiv {

/// One stored question. `consistency` is kept at the f32 precision it is
/// persisted with.
struct MemoryRecord {
    Question question;
    Embedding embedding;
    std::optional<std::string> pseudo_label;
    float consistency = 0.0f;

    friend bool operator==(const MemoryRecord&, const MemoryRecord&) = default;
};

/// An item offered to the bank at the end of an iteration.
struct BankCandidate {
    Question question;
    Embedding embedding;
    double consistency = 0.0;
    std::optional<std::string> pseudo_label;
};

/// Append-only store of validity-filtered questions across iterations.
class MemoryBank {
public:
    /// dim == 0 means "not yet fixed"; the first ingested embedding fixes it.
    explicit MemoryBank(std::uint32_t dim = 0) : dim_(dim) {}

    const std::vector<MemoryRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::uint32_t dim() const noexcept { return dim_; }
    /// Highest iteration ingested; -1 before any ingest.
    std::int64_t watermark() const noexcept { return watermark_; }

    /// Appends the valid items of one iteration's batch, in batch order, and
    /// advances the watermark. Throws Error when `iteration` <= watermark and
    /// DimensionError on mismatched embeddings; the bank is unchanged on throw.
    void ingest(std::span<const BankCandidate> batch, std::uint32_t iteration, const Config& cfg);

    /// Raw restore path for the persistence layer.
    static MemoryBank restore(std::uint32_t dim, std::int64_t watermark,
                              std::vector<MemoryRecord> records);

    friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

private:
    std::uint32_t dim_ = 0;
    std::int64_t watermark_ = -1;
    std::vector<MemoryRecord> records_;
};

/// Functional form of MemoryBank::ingest.
MemoryBank update_bank(const MemoryBank& bank, std::span<const BankCandidate> batch,
                       std::uint32_t iteration, const Config& cfg);

/// True when a stored f32 consistency lies inside the validity bounds rounded
/// to f32 (rounding is monotone, so every ingested record satisfies this).
bool stored_consistency_valid(float consistency, const Config& cfg);

struct SimilarityStats {
    double max = -1.0;
    double mean = -1.0;
};

/// Max and mean of `similarity(record)` over the bank in record order.
/// Both are -1 for an empty bank.
SimilarityStats similarity_stats(const MemoryBank& bank,
                                 const std::function<double(const MemoryRecord&)>& similarity);

/// Max cosine to any record; -1 for an empty bank.
double max_similarity(const MemoryBank& bank, const Embedding& e);

/// Mean cosine over all records; -1 for an empty bank.
double mean_similarity(const MemoryBank& bank, const Embedding& e);

/// gamma * [p_max - tau_max]_+ + (1 - gamma) * [p_mean - tau_mean]_+, with
/// either hinge dropped when its ablation switch is off.
double map_penalty(double p_max, double p_mean, const Config& cfg);

/// Number of replay records that makes replayed / (replayed + n_current) ~= rho.
std::size_t replay_count(std::size_t n_current, double rho);

/// Uniform sample without replacement from records carrying a pseudo-label.
/// Returns all eligible records when there are fewer than requested. Output
/// is in bank order.
std::vector<MemoryRecord> sample_replay(const MemoryBank& bank, std::size_t n_current,
                                        const Config& cfg, std::uint64_t seed);

// Persistence ---------------------------------------------------------------

class BankFileError : public Error {
public:
    using Error::Error;
};
/// Wrong magic bytes.
class BankFormatError : public BankFileError {
public:
    using BankFileError::BankFileError;
};
class BankVersionError : public BankFileError {
public:
    using BankFileError::BankFileError;
};
class BankTruncatedError : public BankFileError {
public:
    using BankFileError::BankFileError;
};
class BankChecksumError : public BankFileError {
public:
    using BankFileError::BankFileError;
};

inline constexpr std::uint16_t kBankFormatVersion = 1;

std::string encode_bank(const MemoryBank& bank);
MemoryBank decode_bank(std::string_view bytes);

/// Writes to a temporary sibling and renames over `path`.
void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path);

}  // namespace spdiv
