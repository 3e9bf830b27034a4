#include "hexreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "hexreg/rng.hpp"

namespace hexreg {

std::string_view to_string(EmbeddingSpace space) noexcept {
  return space == EmbeddingSpace::Projection ? "projection" : "representation";
}

namespace diagnostics {

double rankme(const Matrix& r, double eps) {
  require(eps > 0, ErrorCode::BadParams, "rankme eps must be > 0");
  const std::vector<double> sv = linalg::singular_values(r);
  const double total = std::accumulate(sv.begin(), sv.end(), 0.0);
  require(total > 1e-300, ErrorCode::ZeroMatrix, "rankme of a zero matrix");
  double entropy = 0.0;
  for (double s : sv) {
    const double p = s / total + eps;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

namespace {

// Partial Fisher-Yates: `count` distinct draws from `pool` (reordered in place).
std::vector<Index> draw_without_replacement(std::vector<Index> pool, int count, CounterRng& rng) {
  const auto n = pool.size();
  const auto m = static_cast<std::size_t>(count);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

std::vector<Index> draw(const std::vector<Index>& pool, int count, bool allow_replacement, CounterRng& rng) {
  if (static_cast<int>(pool.size()) >= count) return draw_without_replacement(pool, count, rng);
  require(allow_replacement, ErrorCode::InsufficientSamples,
          "pool of " + std::to_string(pool.size()) + " rows is smaller than subset size " + std::to_string(count));
  std::vector<Index> out(static_cast<std::size_t>(count));
  for (auto& v : out) v = pool[static_cast<std::size_t>(rng.below(pool.size()))];
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
  return out;
}

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
};

Moments central_moments(std::span<const double> v) {
  Moments m;
  const auto n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  for (double x : v) {
    const double d = x - m.mean;
    m.m2 += d * d;
    m.m3 += d * d * d;
  }
  m.m2 /= n;
  m.m3 /= n;
  return m;
}

}  // namespace

RankCurvePoint subset_rank_curve(const Matrix& representations, std::span<const int> superclass_labels,
                                 const SubsetOptions& options) {
  require(static_cast<Index>(superclass_labels.size()) == representations.rows(), ErrorCode::MissingLabels,
          "label count does not match representation rows");
  require(options.n_subsets >= 1 && options.subset_size >= 1, ErrorCode::BadParams,
          "n_subsets and subset_size must be >= 1");

  std::map<int, std::vector<Index>> by_super;
  std::vector<Index> all(static_cast<std::size_t>(representations.rows()));
  for (Index i = 0; i < representations.rows(); ++i) {
    by_super[superclass_labels[static_cast<std::size_t>(i)]].push_back(i);
    all[static_cast<std::size_t>(i)] = i;
  }
  require(!by_super.empty(), ErrorCode::InsufficientSamples, "no samples");
  require(static_cast<int>(all.size()) >= options.subset_size || options.allow_replacement,
          ErrorCode::InsufficientSamples, "fewer samples than subset size");
  if (!options.allow_replacement)
    for (const auto& [label, rows] : by_super)
      require(static_cast<int>(rows.size()) >= options.subset_size, ErrorCode::InsufficientSamples,
              "superclass " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                  " samples, fewer than subset size " + std::to_string(options.subset_size));

  std::vector<const std::vector<Index>*> supers;
  for (const auto& [label, rows] : by_super) supers.push_back(&rows);

  CounterRng super_rng = CounterRng::stream(options.seed, {5, 1});
  CounterRng random_rng = CounterRng::stream(options.seed, {5, 2});
  double super_sum = 0.0;
  double random_sum = 0.0;
  for (int k = 0; k < options.n_subsets; ++k) {
    const auto& pool = *supers[static_cast<std::size_t>(super_rng.below(supers.size()))];
    super_sum += rankme(gather_rows(representations, draw(pool, options.subset_size, options.allow_replacement,
                                                          super_rng)));
    random_sum += rankme(gather_rows(representations, draw(all, options.subset_size, options.allow_replacement,
                                                           random_rng)));
  }
  RankCurvePoint p;
  p.n_subsets = options.n_subsets;
  p.subset_size = options.subset_size;
  p.mean_rankme_superclass = super_sum / options.n_subsets;
  p.mean_rankme_random = random_sum / options.n_subsets;
  return p;
}

double skewness(std::span<const double> values) {
  require(values.size() >= 3, ErrorCode::DegenerateDistribution, "skewness needs at least 3 values");
  const Moments m = central_moments(values);
  require(m.m2 > 1e-15, ErrorCode::DegenerateDistribution, "skewness of a zero-variance sample");
  return m.m3 / std::pow(m.m2, 1.5);
}

DistributionStats distribution_stats(const SimilarityMatrix& sims, std::span<const int> superclass_labels,
                                     const PositiveIndex& positive, EmbeddingSpace space) {
  require(static_cast<Index>(superclass_labels.size()) == sims.size(), ErrorCode::MissingLabels,
          "label count does not match similarity matrix");
  const BoolGrid eligible = hierarchy::eligible_negatives(positive);
  std::vector<double> same;
  std::vector<double> cross;
  for (Index i = 0; i < sims.size(); ++i)
    for (Index a = 0; a < sims.size(); ++a) {
      if (!eligible(i, a)) continue;
      if (superclass_labels[static_cast<std::size_t>(i)] == superclass_labels[static_cast<std::size_t>(a)])
        same.push_back(sims(i, a));
      else
        cross.push_back(sims(i, a));
    }

  auto pool_stats = [](const std::vector<double>& pool, std::optional<double>& mean, std::optional<double>& skew) {
    if (pool.empty()) return;
    const Moments m = central_moments(pool);
    mean = m.mean;
    if (pool.size() >= 3 && m.m2 > 1e-15) skew = skewness(pool);
  };
  DistributionStats out;
  out.space = space;
  out.n_super = same.size();
  out.n_regular = cross.size();
  pool_stats(same, out.mean_super, out.skew_super);
  pool_stats(cross, out.mean_regular, out.skew_regular);
  if (out.mean_super && out.mean_regular && *out.mean_regular != 0.0)
    out.ratio = *out.mean_super / *out.mean_regular;
  return out;
}

double knn_accuracy(const Matrix& train_repr, std::span<const int> train_labels, const Matrix& query_repr,
                    std::span<const int> query_labels, int k) {
  require(train_repr.rows() > 0, ErrorCode::EmptyTrainSet, "k-NN train set is empty");
  require(static_cast<Index>(train_labels.size()) == train_repr.rows() &&
              static_cast<Index>(query_labels.size()) == query_repr.rows(),
          ErrorCode::MissingLabels, "label count mismatch");
  require(train_repr.cols() == query_repr.cols(), ErrorCode::ShapeMismatch, "train/query dimension mismatch");
  require(k >= 1 && k <= train_repr.rows(), ErrorCode::BadK,
          "k = " + std::to_string(k) + " outside [1, " + std::to_string(train_repr.rows()) + "]");
  if (query_repr.rows() == 0) return 0.0;

  const Matrix train = linalg::l2_normalize_rows(train_repr);
  const Matrix query = linalg::l2_normalize_rows(query_repr);
  const Matrix sims = query * train.transpose();

  std::vector<Index> order(static_cast<std::size_t>(train.rows()));
  std::size_t correct = 0;
  for (Index q = 0; q < query.rows(); ++q) {
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
      if (sims(q, a) != sims(q, b)) return sims(q, a) > sims(q, b);
      return a < b;
    });
    std::map<int, std::pair<int, double>> votes;
    for (int j = 0; j < k; ++j) {
      const Index idx = order[static_cast<std::size_t>(j)];
      auto& v = votes[train_labels[static_cast<std::size_t>(idx)]];
      ++v.first;
      v.second += sims(q, idx);
    }
    int best_label = votes.begin()->first;
    std::pair<int, double> best = votes.begin()->second;
    for (const auto& [label, v] : votes) {
      // Map iteration is label-ascending, so strict comparisons keep the smallest label on full ties.
      if (v.first > best.first || (v.first == best.first && v.second > best.second)) {
        best = v;
        best_label = label;
      }
    }
    if (best_label == query_labels[static_cast<std::size_t>(q)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(query.rows());
}

}  // namespace diagnostics
}  // namespace hexreg
