#include "spdiv/repetition.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace spdiv {

namespace {

std::vector<std::string_view> tokenize(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    const auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        const std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

using NGram = std::vector<std::string_view>;

std::map<NGram, int> ngram_counts(const std::vector<std::string_view>& toks, std::size_t n) {
    std::map<NGram, int> out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
        ++out[NGram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                    toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return out;
}

constexpr std::size_t kMaxOrder = 4;

}  // namespace

double sentence_bleu(std::string_view hypothesis, std::string_view reference) {
    const auto hyp = tokenize(hypothesis);
    const auto ref = tokenize(reference);
    if (hyp.empty()) return 0.0;

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
        const auto hyp_counts = ngram_counts(hyp, n);
        const auto ref_counts = ngram_counts(ref, n);
        double matched = 0.0;
        double total = hyp.size() >= n ? static_cast<double>(hyp.size() - n + 1) : 0.0;
        for (const auto& [gram, count] : hyp_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matched += std::min(count, it->second);
        }
        if (n > 1) {
            matched += 1.0;
            total += 1.0;
        }
        if (matched == 0.0) return 0.0;
        log_sum += std::log(matched / total);
    }
    const double c = static_cast<double>(hyp.size());
    const double r = static_cast<double>(ref.size());
    const double log_bp = c < r ? 1.0 - r / c : 0.0;
    return std::clamp(std::exp(log_sum / kMaxOrder + log_bp), 0.0, 1.0);
}

double bleu_distance(std::string_view a, std::string_view b) {
    if (tokenize(a).empty() && tokenize(b).empty()) return 0.0;
    const double bleu = 0.5 * (sentence_bleu(a, b) + sentence_bleu(b, a));
    return std::clamp(1.0 - bleu, 0.0, 1.0);
}

SquareMatrix pairwise_similarity(std::span<const Embedding> embeddings) {
    const std::size_t n = embeddings.size();
    SquareMatrix s(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = dot(embeddings[i], embeddings[j]);
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

SquareMatrix cosine_distances(std::span<const Embedding> embeddings) {
    SquareMatrix d = pairwise_similarity(embeddings);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j)
            d(i, j) = i == j ? 0.0 : std::clamp(1.0 - d(i, j), 0.0, 1.0);
    return d;
}

SquareMatrix bleu_distances(std::span<const std::string> texts) {
    const std::size_t n = texts.size();
    SquareMatrix d(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = bleu_distance(texts[i], texts[j]);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

ClusterAssignment cluster(const SquareMatrix& distances, double threshold) {
    const std::size_t n = distances.size();

    // Active clusters, ordered by smallest member index. `sums` holds the sum
    // of member-to-member distances between clusters, indexed by the slot of
    // each cluster's representative (its smallest member).
    std::vector<std::size_t> active(n);
    std::vector<int> size(n, 1);
    std::vector<std::size_t> owner(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = owner[i] = i;
    SquareMatrix sums = distances;

    while (active.size() > 1) {
        double best = 0.0;
        std::size_t best_a = 0, best_b = 0;
        bool found = false;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const std::size_t a = active[x], b = active[y];
                const double avg = sums(a, b) / (static_cast<double>(size[a]) * size[b]);
                if (!found || avg < best) {
                    best = avg;
                    best_a = x;
                    best_b = y;
                    found = true;
                }
            }
        }
        if (best > threshold) break;

        const std::size_t a = active[best_a], b = active[best_b];
        for (std::size_t k : active) {
            if (k == a || k == b) continue;
            sums(a, k) += sums(b, k);
            sums(k, a) = sums(a, k);
        }
        size[a] += size[b];
        for (std::size_t i = 0; i < n; ++i)
            if (owner[i] == b) owner[i] = a;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    }

    ClusterAssignment out;
    out.labels.assign(n, -1);
    std::map<std::size_t, int> ids;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = ids.try_emplace(owner[i], static_cast<int>(ids.size()));
        if (inserted) out.sizes.push_back(0);
        out.labels[i] = it->second;
        ++out.sizes[static_cast<std::size_t>(it->second)];
    }
    return out;
}

std::vector<double> repetition_penalty(const ClusterAssignment& assignment) {
    const double batch = static_cast<double>(assignment.labels.size());
    std::vector<double> out;
    out.reserve(assignment.labels.size());
    for (int label : assignment.labels)
        out.push_back(assignment.sizes.at(static_cast<std::size_t>(label)) / batch);
    return out;
}

}  // namespace spdiv
