#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hexreg/hierarchy.hpp"
#include "hexreg/linalg.hpp"

namespace hexreg {

struct RankCurvePoint {
  int epoch = 0;
  double mean_rankme_superclass = 0.0;
  double mean_rankme_random = 0.0;
  int n_subsets = 0;
  int subset_size = 0;
};

enum class EmbeddingSpace { Projection, Representation };

std::string_view to_string(EmbeddingSpace space) noexcept;

/// Cosine-similarity statistics split into same-superclass and cross-superclass pools.
/// Statistics of an empty or degenerate pool are left unset.
struct DistributionStats {
  int epoch = 0;
  std::optional<double> mean_super;
  std::optional<double> mean_regular;
  std::optional<double> skew_super;
  std::optional<double> skew_regular;
  std::optional<double> ratio;
  std::size_t n_super = 0;
  std::size_t n_regular = 0;
  EmbeddingSpace space = EmbeddingSpace::Projection;
};

namespace diagnostics {

inline constexpr double kRankMeEps = 1e-7;

/// Entropy-based effective rank of the singular-value spectrum of r.
double rankme(const Matrix& r, double eps = kRankMeEps);

struct SubsetOptions {
  int n_subsets = 20;
  int subset_size = 100;
  std::uint64_t seed = 0;
  bool allow_replacement = false;
};

/// Mean RankMe of subsets drawn from a single random superclass versus uniformly from all rows.
RankCurvePoint subset_rank_curve(const Matrix& representations, std::span<const int> superclass_labels,
                                 const SubsetOptions& options);

/// Biased Fisher-Pearson skewness m3 / m2^{3/2}.
double skewness(std::span<const double> values);

DistributionStats distribution_stats(const SimilarityMatrix& sims, std::span<const int> superclass_labels,
                                     const PositiveIndex& positive, EmbeddingSpace space);

/// Majority-vote k-NN accuracy under cosine similarity. Vote ties go to the
/// larger summed similarity, then the smaller label; neighbour ties to the lower index.
double knn_accuracy(const Matrix& train_repr, std::span<const int> train_labels, const Matrix& query_repr,
                    std::span<const int> query_labels, int k);

}  // namespace diagnostics
}  // namespace hexreg
