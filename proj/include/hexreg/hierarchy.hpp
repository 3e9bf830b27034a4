#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hexreg/linalg.hpp"

namespace hexreg {

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Paired-view index for every row. `positive[i] == i` marks a row without a
/// positive (for example a clean evaluation pass with a single view).
using PositiveIndex = std::vector<Index>;

enum class MaskSource { Adaptive, Step, Cos, Fixed, Supervised, All };

std::string_view to_string(MaskSource source) noexcept;

/// Per-anchor membership of candidate negatives in the anchor's hierarchical group H(i).
struct HierarchyMask {
  BoolGrid membership;
  MaskSource source = MaskSource::Fixed;
  std::optional<double> threshold_used;

  Index anchors() const { return membership.rows(); }
  Index size(Index anchor) const { return membership.row(anchor).count(); }
  double mean_size() const;
  bool empty() const { return membership.count() == 0; }

  /// 0/1 matrix form, for use as a tape constant.
  Matrix as_matrix() const { return membership.cast<double>().matrix(); }

  static HierarchyMask none(Index n, MaskSource source = MaskSource::Fixed);
};

struct MaskQuality {
  double precision = 1.0;
  double recall = 1.0;
  double mean_mask_size = 0.0;
};

namespace hierarchy {

/// Candidates that may ever be hierarchical negatives: everything but self and the positive.
BoolGrid eligible_negatives(const PositiveIndex& positive);

/// All similarities of eligible (anchor, negative) pairs, pooled row by row.
std::vector<double> pooled_negative_similarities(const SimilarityMatrix& sims, const PositiveIndex& positive);

HierarchyMask threshold_mask(const SimilarityMatrix& sims, double epsilon, const PositiveIndex& positive,
                             MaskSource source = MaskSource::Fixed);

HierarchyMask supervised_mask(std::span<const int> superclass_labels, const PositiveIndex& positive);

HierarchyMask whole_batch_mask(Index n, const PositiveIndex& positive);

MaskQuality mask_quality(const HierarchyMask& mask, std::span<const int> superclass_labels,
                         const PositiveIndex& positive);

/// i <-> i + n pairing for a batch of n anchors followed by their n second views.
PositiveIndex paired_views(Index n);

/// Every row is its own "positive": no pair is excluded beyond self.
PositiveIndex no_positives(Index n);

}  // namespace hierarchy
}  // namespace hexreg
