#include "hexreg/hierarchy.hpp"

#include <string>

namespace hexreg {

std::string_view to_string(MaskSource source) noexcept {
  switch (source) {
    case MaskSource::Adaptive: return "adaptive";
    case MaskSource::Step: return "step";
    case MaskSource::Cos: return "cos";
    case MaskSource::Fixed: return "fixed";
    case MaskSource::Supervised: return "supervised";
    case MaskSource::All: return "all";
  }
  return "unknown";
}

double HierarchyMask::mean_size() const {
  if (membership.rows() == 0) return 0.0;
  return static_cast<double>(membership.count()) / static_cast<double>(membership.rows());
}

HierarchyMask HierarchyMask::none(Index n, MaskSource source) {
  return HierarchyMask{BoolGrid::Constant(n, n, false), source, std::nullopt};
}

namespace hierarchy {

namespace {

void check_positive(const PositiveIndex& positive) {
  const auto n = static_cast<Index>(positive.size());
  for (Index i = 0; i < n; ++i) {
    const Index p = positive[static_cast<std::size_t>(i)];
    require(p >= 0 && p < n, ErrorCode::ShapeMismatch,
            "positive index " + std::to_string(p) + " of row " + std::to_string(i) + " out of range");
  }
}

}  // namespace

BoolGrid eligible_negatives(const PositiveIndex& positive) {
  check_positive(positive);
  const auto n = static_cast<Index>(positive.size());
  BoolGrid e = BoolGrid::Constant(n, n, true);
  for (Index i = 0; i < n; ++i) {
    e(i, i) = false;
    e(i, positive[static_cast<std::size_t>(i)]) = false;
  }
  return e;
}

std::vector<double> pooled_negative_similarities(const SimilarityMatrix& sims, const PositiveIndex& positive) {
  require(sims.size() == static_cast<Index>(positive.size()), ErrorCode::ShapeMismatch,
          "similarity matrix and positive index disagree on batch size");
  const BoolGrid e = eligible_negatives(positive);
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(e.count()));
  for (Index i = 0; i < e.rows(); ++i)
    for (Index a = 0; a < e.cols(); ++a)
      if (e(i, a)) pooled.push_back(sims(i, a));
  return pooled;
}

HierarchyMask threshold_mask(const SimilarityMatrix& sims, double epsilon, const PositiveIndex& positive,
                             MaskSource source) {
  require(std::isfinite(epsilon), ErrorCode::BadSchedule, "threshold is not finite");
  require(sims.size() == static_cast<Index>(positive.size()), ErrorCode::ShapeMismatch,
          "similarity matrix and positive index disagree on batch size");
  BoolGrid m = eligible_negatives(positive);
  m = m && (sims.values().array() > epsilon);
  return HierarchyMask{std::move(m), source, epsilon};
}

HierarchyMask supervised_mask(std::span<const int> superclass_labels, const PositiveIndex& positive) {
  require(superclass_labels.size() == positive.size(), ErrorCode::MissingLabels,
          std::to_string(superclass_labels.size()) + " labels for a batch of " + std::to_string(positive.size()));
  for (int l : superclass_labels) require(l >= 0, ErrorCode::MissingLabels, "negative superclass label");
  BoolGrid m = eligible_negatives(positive);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index a = 0; a < m.cols(); ++a)
      m(i, a) = m(i, a) && superclass_labels[static_cast<std::size_t>(i)] ==
                               superclass_labels[static_cast<std::size_t>(a)];
  return HierarchyMask{std::move(m), MaskSource::Supervised, std::nullopt};
}

HierarchyMask whole_batch_mask(Index n, const PositiveIndex& positive) {
  require(static_cast<Index>(positive.size()) == n, ErrorCode::ShapeMismatch, "positive index size");
  return HierarchyMask{eligible_negatives(positive), MaskSource::All, std::nullopt};
}

MaskQuality mask_quality(const HierarchyMask& mask, std::span<const int> superclass_labels,
                         const PositiveIndex& positive) {
  const HierarchyMask truth = supervised_mask(superclass_labels, positive);
  require(mask.membership.rows() == truth.membership.rows() && mask.membership.cols() == truth.membership.cols(),
          ErrorCode::ShapeMismatch, "mask shape does not match labels");
  const auto tp = static_cast<double>((mask.membership && truth.membership).count());
  const auto fp = static_cast<double>((mask.membership && !truth.membership).count());
  const auto fn = static_cast<double>((!mask.membership && truth.membership).count());
  MaskQuality q;
  // No predictions (or nothing to find) is reported as perfect precision (recall).
  q.precision = tp + fp > 0 ? tp / (tp + fp) : 1.0;
  q.recall = tp + fn > 0 ? tp / (tp + fn) : 1.0;
  q.mean_mask_size = mask.mean_size();
  return q;
}

PositiveIndex paired_views(Index n) {
  PositiveIndex p(static_cast<std::size_t>(2 * n));
  for (Index i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = i + n;
    p[static_cast<std::size_t>(i + n)] = i;
  }
  return p;
}

PositiveIndex no_positives(Index n) {
  PositiveIndex p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  return p;
}

}  // namespace hierarchy
}  // namespace hexreg
