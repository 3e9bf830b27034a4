#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hexreg/error.hpp"

namespace hexreg {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = RowMatrix<double>;
using Vector = ColVector<double>;
using Index = Eigen::Index;

/// Square matrix of pairwise cosine similarities. Symmetric; entries clamped to [-1, 1].
template <typename Scalar>
class BasicSimilarityMatrix {
 public:
  BasicSimilarityMatrix() = default;
  explicit BasicSimilarityMatrix(RowMatrix<Scalar> values) : values_(std::move(values)) {}

  Index size() const { return values_.rows(); }
  Scalar operator()(Index i, Index j) const { return values_(i, j); }
  const RowMatrix<Scalar>& values() const { return values_; }

 private:
  RowMatrix<Scalar> values_;
};

using SimilarityMatrix = BasicSimilarityMatrix<double>;

namespace linalg {

inline constexpr double kZeroRowNorm = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kJacobiTolerance = 1e-12;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) fail(ErrorCode::NonFinite, std::string(what) + " has non-finite entries");
}

/// Rows scaled to unit Euclidean norm.
template <typename Derived>
RowMatrix<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const Scalar norm = m.row(i).norm();
    if (!(norm > Scalar(kZeroRowNorm)))
      fail(ErrorCode::ZeroRow, "row " + std::to_string(i) + " has norm " + std::to_string(double(norm)));
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

/// Pairwise dot products of unit-norm rows. Each pair is computed once and mirrored.
template <typename Derived>
BasicSimilarityMatrix<typename Derived::Scalar> cosine_sim_matrix(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  const Index n = z.rows();
  for (Index i = 0; i < n; ++i) {
    const Scalar norm = z.row(i).norm();
    if (std::abs(norm - Scalar(1)) > Scalar(kUnitNormTolerance))
      fail(ErrorCode::NotNormalized, "row " + std::to_string(i) + " has norm " + std::to_string(double(norm)));
  }
  RowMatrix<Scalar> s(n, n);
  for (Index i = 0; i < n; ++i) {
    s(i, i) = Scalar(1);
    for (Index j = i + 1; j < n; ++j) {
      const Scalar v = std::clamp(z.row(i).dot(z.row(j)), Scalar(-1), Scalar(1));
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return BasicSimilarityMatrix<Scalar>(std::move(s));
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted descending.
/// Converges when the off-diagonal Frobenius norm drops below
/// kJacobiTolerance times the full Frobenius norm.
template <typename Derived>
std::vector<typename Derived::Scalar> symmetric_eigenvalues(const Eigen::MatrixBase<Derived>& sym) {
  using Scalar = typename Derived::Scalar;
  const Index n = sym.rows();
  require(sym.cols() == n, ErrorCode::ShapeMismatch, "eigensolver needs a square matrix");
  RowMatrix<Scalar> a = sym;
  const Scalar total = a.norm();

  auto off_norm = [&] {
    Scalar acc = 0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) acc += a(p, q) * a(p, q);
    return std::sqrt(Scalar(2) * acc);
  };

  int sweep = 0;
  while (total > Scalar(0) && off_norm() > Scalar(kJacobiTolerance) * total) {
    if (++sweep > kJacobiMaxSweeps)
      fail(ErrorCode::NoConvergence, "Jacobi exceeded " + std::to_string(kJacobiMaxSweeps) + " sweeps");
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = Scalar(0);
        a(q, p) = Scalar(0);
      }
    }
  }
  std::vector<Scalar> eig(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

/// Singular values, descending, from the eigenvalues of the smaller Gram matrix.
template <typename Derived>
std::vector<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  require(m.rows() >= 1 && m.cols() >= 1, ErrorCode::ShapeMismatch, "singular_values of an empty matrix");
  require_finite(m, "singular_values input");
  const RowMatrix<Scalar> gram =
      m.cols() <= m.rows() ? RowMatrix<Scalar>(m.transpose() * m) : RowMatrix<Scalar>(m * m.transpose());
  std::vector<Scalar> sv = symmetric_eigenvalues(gram);
  for (auto& v : sv) v = std::sqrt(std::max(v, Scalar(0)));
  return sv;
}

}  // namespace linalg
}  // namespace hexreg
