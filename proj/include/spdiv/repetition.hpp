#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "spdiv/core.hpp"

namespace spdiv {

/// Dense n x n matrix, row-major.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

    std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

    friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

struct ClusterAssignment {
    /// Cluster id per batch item. Ids are contiguous from 0 and numbered in
    /// order of each cluster's smallest member index.
    std::vector<int> labels;
    /// sizes[id] = number of members.
    std::vector<int> sizes;
};

/// Sentence BLEU of `hypothesis` against a single `reference`: whitespace
/// tokens, n = 1..4 uniform weights, add-one smoothing for n >= 2, brevity
/// penalty. In [0, 1].
double sentence_bleu(std::string_view hypothesis, std::string_view reference);

/// 1 - BLEU, averaged over both directions. Two empty strings are at distance 0.
double bleu_distance(std::string_view a, std::string_view b);

/// S[i][j] = cos(e_i, e_j). Throws DimensionError on mixed dimensions.
SquareMatrix pairwise_similarity(std::span<const Embedding> embeddings);

/// 1 - cosine, clamped to [0, 1], with an exact zero diagonal.
SquareMatrix cosine_distances(std::span<const Embedding> embeddings);

/// Pairwise bleu_distance over a batch of strings.
SquareMatrix bleu_distances(std::span<const std::string> texts);

/// Average-linkage agglomerative clustering. Repeatedly merges the closest
/// pair of clusters while their mean pairwise distance is <= threshold. Equal
/// distances merge the pair with the smallest (min index A, min index B) first.
ClusterAssignment cluster(const SquareMatrix& distances, double threshold);

/// penalty[i] = |C_i| / |B|.
std::vector<double> repetition_penalty(const ClusterAssignment& assignment);

}  // namespace spdiv
