#include "spdiv/memory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <zlib.h>

#include "spdiv/io.hpp"
#include "spdiv/reward.hpp"
#include "spdiv/rng.hpp"

namespace spdiv {

void MemoryBank::ingest(std::span<const BankCandidate> batch, std::uint32_t iteration,
                        const Config& cfg) {
    if (static_cast<std::int64_t>(iteration) <= watermark_)
        throw Error("iteration " + std::to_string(iteration) +
                    " already ingested (watermark " + std::to_string(watermark_) + ")");

    std::uint32_t dim = dim_;
    std::vector<MemoryRecord> staged;
    for (const auto& item : batch) {
        if (item.question.iteration != iteration)
            throw Error("question '" + item.question.id + "' is from iteration " +
                        std::to_string(item.question.iteration) + ", batch is " +
                        std::to_string(iteration));
        if (dim == 0) dim = static_cast<std::uint32_t>(item.embedding.dim());
        if (item.embedding.dim() != dim)
            throw DimensionError("embedding dim " + std::to_string(item.embedding.dim()) +
                                 " does not match bank dim " + std::to_string(dim));
        if (!is_valid(item.consistency, cfg)) continue;
        staged.push_back({item.question, item.embedding, item.pseudo_label,
                          static_cast<float>(item.consistency)});
    }

    records_.insert(records_.end(), std::make_move_iterator(staged.begin()),
                    std::make_move_iterator(staged.end()));
    dim_ = dim;
    watermark_ = iteration;
}

MemoryBank MemoryBank::restore(std::uint32_t dim, std::int64_t watermark,
                               std::vector<MemoryRecord> records) {
    MemoryBank b(dim);
    b.watermark_ = watermark;
    for (const auto& r : records)
        if (r.embedding.dim() != dim) throw DimensionError("record dim does not match bank dim");
    b.records_ = std::move(records);
    return b;
}

MemoryBank update_bank(const MemoryBank& bank, std::span<const BankCandidate> batch,
                       std::uint32_t iteration, const Config& cfg) {
    MemoryBank next = bank;
    next.ingest(batch, iteration, cfg);
    return next;
}

bool stored_consistency_valid(float consistency, const Config& cfg) {
    return static_cast<float>(cfg.valid_lo) <= consistency &&
           consistency <= static_cast<float>(cfg.valid_hi);
}

SimilarityStats similarity_stats(const MemoryBank& bank,
                                 const std::function<double(const MemoryRecord&)>& similarity) {
    SimilarityStats out;
    if (bank.empty()) return out;
    double sum = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : bank.records()) {
        const double s = similarity(r);
        sum += s;
        best = std::max(best, s);
    }
    out.max = best;
    out.mean = sum / static_cast<double>(bank.size());
    return out;
}

namespace {

void check_dim(const MemoryBank& bank, const Embedding& e) {
    if (bank.dim() != 0 && e.dim() != bank.dim())
        throw DimensionError("query dim " + std::to_string(e.dim()) + " does not match bank dim " +
                             std::to_string(bank.dim()));
}

}  // namespace

double max_similarity(const MemoryBank& bank, const Embedding& e) {
    check_dim(bank, e);
    return similarity_stats(bank, [&](const MemoryRecord& r) { return dot(e, r.embedding); }).max;
}

double mean_similarity(const MemoryBank& bank, const Embedding& e) {
    check_dim(bank, e);
    return similarity_stats(bank, [&](const MemoryRecord& r) { return dot(e, r.embedding); }).mean;
}

double map_penalty(double p_max, double p_mean, const Config& cfg) {
    const double max_term = cfg.use_max_term ? std::max(0.0, p_max - cfg.tau_max) : 0.0;
    const double mean_term = cfg.use_mean_term ? std::max(0.0, p_mean - cfg.tau_mean) : 0.0;
    return cfg.gamma * max_term + (1.0 - cfg.gamma) * mean_term;
}

std::size_t replay_count(std::size_t n_current, double rho) {
    if (rho <= 0.0 || n_current == 0) return 0;
    return static_cast<std::size_t>(std::llround(rho * static_cast<double>(n_current) / (1.0 - rho)));
}

std::vector<MemoryRecord> sample_replay(const MemoryBank& bank, std::size_t n_current,
                                        const Config& cfg, std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < bank.size(); ++i)
        if (bank.records()[i].pseudo_label) eligible.push_back(i);

    const std::size_t m = replay_count(n_current, cfg.rho);
    std::vector<std::size_t> chosen;
    if (m >= eligible.size()) {
        chosen = eligible;
    } else {
        // partial Fisher-Yates
        Rng rng(seed);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + rng.uniform_index(eligible.size() - i);
            std::swap(eligible[i], eligible[j]);
        }
        chosen.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(chosen.begin(), chosen.end());
    }

    std::vector<MemoryRecord> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(bank.records()[i]);
    return out;
}

// Persistence ---------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "RDMB";

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void raw(std::string_view s) { buf_.append(s); }
    std::string& bytes() { return buf_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class Reader {
public:
    Reader(std::string_view data, std::size_t end) : data_(data), end_(end) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const std::uint32_t n = u32();
        return std::string(take(n));
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return end_ - pos_; }
    void seek(std::size_t p) { pos_ = p; }

private:
    std::string_view take(std::size_t n) {
        if (n > end_ - pos_) throw BankTruncatedError("bank file is truncated");
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t le(int n) {
        auto s = take(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[static_cast<std::size_t>(i)]))
                 << (8 * i);
        return v;
    }

    std::string_view data_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

// Fixed header: magic, u16 version, u32 dim, u64 count, i64 watermark,
// u64 byte length of the record section.
constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 8 + 8 + 8;

struct Header {
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    std::int64_t watermark = -1;
    std::uint64_t record_bytes = 0;
};

MemoryBank parse_records(Reader& in, const Header& h) {
    if (h.count > 0 && static_cast<std::uint64_t>(h.dim) * 4 > in.remaining())
        throw Error("implausible embedding dimension " + std::to_string(h.dim));
    std::vector<MemoryRecord> records;
    for (std::uint64_t i = 0; i < h.count; ++i) {
        std::string id = in.str();
        const std::uint32_t iteration = in.u32();
        std::string text = in.str();
        std::optional<std::string> label;
        if (in.u8() != 0) label = in.str();
        const float consistency = in.f32();
        if (static_cast<std::uint64_t>(h.dim) * 4 > in.remaining())
            throw Error("record embedding runs past the record section");
        std::vector<float> values(h.dim);
        for (auto& v : values) v = in.f32();
        if (text.empty()) throw Error("bank record has empty question text");
        records.push_back({Question(std::move(id), std::move(text), iteration),
                           Embedding::from_normalized(std::move(values)), std::move(label),
                           consistency});
    }
    if (in.remaining() != 0) throw Error("trailing bytes after bank records");
    return MemoryBank::restore(h.dim, h.watermark, std::move(records));
}

}  // namespace

std::string encode_bank(const MemoryBank& bank) {
    Writer records;
    for (const auto& r : bank.records()) {
        records.str(r.question.id);
        records.u32(r.question.iteration);
        records.str(r.question.text);
        records.u8(r.pseudo_label ? 1 : 0);
        if (r.pseudo_label) records.str(*r.pseudo_label);
        records.f32(r.consistency);
        for (float v : r.embedding.values()) records.f32(v);
    }
    Writer w;
    w.raw(kMagic);
    w.u16(kBankFormatVersion);
    w.u32(bank.dim());
    w.u64(bank.size());
    w.u64(static_cast<std::uint64_t>(bank.watermark()));
    w.u64(records.bytes().size());
    w.raw(records.bytes());
    const std::uint32_t crc = crc_of(std::string_view(w.bytes()).substr(kMagic.size()));
    w.u32(crc);
    return std::move(w.bytes());
}

MemoryBank decode_bank(std::string_view bytes) {
    if (bytes.size() < kMagic.size()) throw BankTruncatedError("bank file is truncated");
    if (bytes.substr(0, kMagic.size()) != kMagic)
        throw BankFormatError("not a memory bank file (bad magic)");
    if (bytes.size() < kMagic.size() + 2) throw BankTruncatedError("bank file is truncated");

    Reader header(bytes, bytes.size());
    header.seek(kMagic.size());
    const std::uint16_t version = header.u16();
    if (version != kBankFormatVersion)
        throw BankVersionError("unsupported bank format version " + std::to_string(version) +
                               " (expected " + std::to_string(kBankFormatVersion) + ")");
    if (bytes.size() < kHeaderSize + 4) throw BankTruncatedError("bank file is truncated");

    Header h;
    h.dim = header.u32();
    h.count = header.u64();
    h.watermark = static_cast<std::int64_t>(header.u64());
    h.record_bytes = header.u64();
    const std::uint64_t available = bytes.size() - kHeaderSize - 4;
    if (h.record_bytes > available) throw BankTruncatedError("bank file is truncated");
    if (h.record_bytes < available) throw BankFormatError("trailing bytes after bank checksum");

    const std::size_t body_end = kHeaderSize + static_cast<std::size_t>(h.record_bytes);
    Reader crc_reader(bytes, bytes.size());
    crc_reader.seek(body_end);
    if (crc_of(bytes.substr(kMagic.size(), body_end - kMagic.size())) != crc_reader.u32())
        throw BankChecksumError("bank file checksum mismatch");

    Reader body(bytes, body_end);
    body.seek(kHeaderSize);
    try {
        return parse_records(body, h);
    } catch (const Error& e) {
        throw BankFormatError(std::string("malformed bank records: ") + e.what());
    }
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
    write_file_atomic(path, encode_bank(bank));
}

MemoryBank load_bank(const std::filesystem::path& path) { return decode_bank(read_file(path)); }

}  // namespace spdiv
