#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "hexreg/diagnostics.hpp"
#include "support.hpp"

using namespace hexreg;
using testing::random_matrix;

namespace {

double rankme_oracle(const Matrix& r, double eps = 1e-7) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const Eigen::VectorXd s = svd.singularValues();
  double h = 0;
  for (Index i = 0; i < s.size(); ++i) {
    const double p = s(i) / s.sum() + eps;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

int error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

SimilarityMatrix block_sims(const std::vector<int>& labels, double same, double cross) {
  const auto n = static_cast<Index>(labels.size());
  Matrix s(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      s(i, j) = i == j ? 1.0 : (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? same : cross);
  return SimilarityMatrix(s);
}

}  // namespace

TEST_CASE("rankme extremes") {
  CHECK(diagnostics::rankme(Matrix::Identity(8, 8)) == doctest::Approx(8.0).epsilon(1e-5));
  Matrix rank1(6, 4);
  for (Index i = 0; i < 6; ++i) rank1.row(i) = (i + 1.0) * Matrix::Constant(1, 4, 0.5);
  CHECK(diagnostics::rankme(rank1) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(error_code([] { diagnostics::rankme(Matrix::Zero(3, 3)); }) == static_cast<int>(ErrorCode::ZeroMatrix));
}

TEST_CASE("rankme agrees with an SVD oracle and is permutation and scale invariant") {
  CounterRng rng(71);
  for (int trial = 0; trial < 40; ++trial) {
    const Index rows = 2 + static_cast<Index>(rng.below(30)), cols = 1 + static_cast<Index>(rng.below(12));
    const Matrix r = random_matrix(rng, rows, cols);
    const double v = diagnostics::rankme(r);
    CHECK(v == doctest::Approx(rankme_oracle(r)).epsilon(1e-9));
    CHECK(v <= static_cast<double>(std::min(rows, cols)) + 1e-6);
    CHECK(v >= 1.0 - 1e-6);
    Matrix shuffled = r;
    shuffled.row(0).swap(shuffled.row(rows - 1));
    CHECK(diagnostics::rankme(shuffled) == doctest::Approx(v).epsilon(1e-10));
    CHECK(diagnostics::rankme(Matrix(3.5 * r)) == doctest::Approx(v).epsilon(1e-10));
  }
}

TEST_CASE("skewness") {
  const std::vector<double> v{0, 0, 3};
  CHECK(diagnostics::skewness(v) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(error_code([] { diagnostics::skewness(std::vector<double>{1, 2}); }) ==
        static_cast<int>(ErrorCode::DegenerateDistribution));
  CHECK(error_code([] { diagnostics::skewness(std::vector<double>{2, 2, 2, 2}); }) ==
        static_cast<int>(ErrorCode::DegenerateDistribution));

  CounterRng rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(3 + rng.below(40));
    for (auto& e : x) e = std::exp(rng.normal());
    const double s = diagnostics::skewness(x);
    const double shift = rng.uniform(-5, 5), scale = rng.uniform(0.1, 10);
    std::vector<double> y = x, flipped = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = scale * x[i] + shift;
      flipped[i] = -x[i];
    }
    CHECK(diagnostics::skewness(y) == doctest::Approx(s).epsilon(1e-9));
    CHECK(diagnostics::skewness(flipped) == doctest::Approx(-s).epsilon(1e-9));
  }
}

TEST_CASE("distribution_stats on a block similarity matrix") {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const auto stats = diagnostics::distribution_stats(block_sims(labels, 0.9, 0.1), labels,
                                                     hierarchy::no_positives(6), EmbeddingSpace::Projection);
  REQUIRE(stats.ratio);
  CHECK(*stats.ratio == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(*stats.mean_super == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(stats.n_super == 6);
  CHECK(stats.n_regular == 24);
  CHECK_FALSE(stats.skew_super);

  // Positives leave the pools.
  const auto paired = diagnostics::distribution_stats(block_sims(labels, 0.9, 0.1), labels,
                                                      PositiveIndex{1, 0, 3, 2, 5, 4}, EmbeddingSpace::Projection);
  CHECK(paired.n_super == 0);
  CHECK_FALSE(paired.mean_super);
  CHECK_FALSE(paired.ratio);

  const std::vector<int> one{4, 4, 4};
  const auto single = diagnostics::distribution_stats(block_sims(one, 0.5, 0.0), one, hierarchy::no_positives(3),
                                                      EmbeddingSpace::Representation);
  CHECK(single.n_regular == 0);
  CHECK_FALSE(single.mean_regular);
  CHECK_FALSE(single.ratio);
  CHECK(single.space == EmbeddingSpace::Representation);

  CHECK(error_code([&] {
          diagnostics::distribution_stats(block_sims(labels, 0.9, 0.1), one, hierarchy::no_positives(6),
                                          EmbeddingSpace::Projection);
        }) == static_cast<int>(ErrorCode::MissingLabels));
}

TEST_CASE("knn tie rules") {
  Matrix q(1, 2);
  q << 1, 0;
  Matrix train(3, 2);
  train << 1, 0, 0.8, 0.6, 0.6, 0.8;
  // k = 2: one vote each, label 1 has the larger summed similarity.
  CHECK(diagnostics::knn_accuracy(train.topRows(2), std::vector<int>{1, 2}, q, std::vector<int>{1}, 2) == 1.0);
  // Full tie on votes and similarity: the smaller label.
  Matrix twin(2, 2);
  twin << 0.8, 0.6, 0.8, -0.6;
  CHECK(diagnostics::knn_accuracy(twin, std::vector<int>{3, 1}, q, std::vector<int>{1}, 2) == 1.0);
  // k = 1 with two equally near neighbours: the lower index.
  CHECK(diagnostics::knn_accuracy(twin, std::vector<int>{5, 0}, q, std::vector<int>{5}, 1) == 1.0);
  // Majority beats a single closer neighbour.
  CHECK(diagnostics::knn_accuracy(train, std::vector<int>{1, 2, 2}, q, std::vector<int>{2}, 3) == 1.0);
}

TEST_CASE("knn errors") {
  const Matrix train = Matrix::Identity(3, 3);
  const std::vector<int> labels{0, 1, 2};
  CHECK(error_code([&] { diagnostics::knn_accuracy(train, labels, train, labels, 4); }) ==
        static_cast<int>(ErrorCode::BadK));
  CHECK(error_code([&] { diagnostics::knn_accuracy(train, labels, train, labels, 0); }) ==
        static_cast<int>(ErrorCode::BadK));
  CHECK(error_code([&] {
          diagnostics::knn_accuracy(Matrix(0, 3), std::vector<int>{}, train, labels, 1);
        }) == static_cast<int>(ErrorCode::EmptyTrainSet));
  CHECK(diagnostics::knn_accuracy(train, labels, train, labels, 1) == 1.0);
}

TEST_CASE("knn on unstructured data is at chance") {
  CounterRng rng(73);
  const int classes = 4;
  double total = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Matrix train = random_matrix(rng, 40, 6), query = random_matrix(rng, 10, 6);
    std::vector<int> tl(40), ql(10);
    for (auto& l : tl) l = static_cast<int>(rng.below(classes));
    for (auto& l : ql) l = static_cast<int>(rng.below(classes));
    total += diagnostics::knn_accuracy(train, tl, query, ql, 5);
  }
  CHECK(std::abs(total / trials - 1.0 / classes) <= 0.05);
}

TEST_CASE("subset_rank_curve separates low-rank superclasses") {
  // Superclass s lives in span(e_{2s}, e_{2s+1}).
  CounterRng rng(74);
  const int supers = 4, per = 60;
  Matrix r = Matrix::Zero(supers * per, 2 * supers);
  std::vector<int> labels;
  for (int s = 0; s < supers; ++s)
    for (int i = 0; i < per; ++i) {
      const Index row = s * per + i;
      r(row, 2 * s) = rng.normal();
      r(row, 2 * s + 1) = rng.normal();
      labels.push_back(s);
    }
  diagnostics::SubsetOptions o;
  o.n_subsets = 10;
  o.subset_size = 50;
  o.seed = 3;
  const RankCurvePoint p = diagnostics::subset_rank_curve(r, labels, o);
  CHECK(p.mean_rankme_superclass <= 2.0 + 1e-6);
  CHECK(p.mean_rankme_random > 6.0);
  CHECK(p.n_subsets == 10);
  CHECK(p.subset_size == 50);

  const RankCurvePoint again = diagnostics::subset_rank_curve(r, labels, o);
  CHECK(again.mean_rankme_superclass == p.mean_rankme_superclass);
  CHECK(again.mean_rankme_random == p.mean_rankme_random);

  o.subset_size = per + 1;
  CHECK(error_code([&] { diagnostics::subset_rank_curve(r, labels, o); }) ==
        static_cast<int>(ErrorCode::InsufficientSamples));
  o.allow_replacement = true;
  CHECK(diagnostics::subset_rank_curve(r, labels, o).mean_rankme_superclass <= 2.0 + 1e-6);
}
