#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string_view>

#include "hexreg/autodiff.hpp"
#include "hexreg/hierarchy.hpp"

namespace hexreg {

/// 2N unit-norm projection rows: N anchors followed by their N second views.
///
/// If `positive_embeddings` is set (NNCLR), row i's positive is that row
/// instead of z[positive[i]]; the paired view still leaves the denominator so
/// the positive term is counted exactly once.
struct ContrastiveBatch {
  Matrix z;
  PositiveIndex positive;
  double tau = 0.1;
  std::optional<Matrix> positive_embeddings;

  Index rows() const { return z.rows(); }
  Index anchors() const { return z.rows() / 2; }
  void validate() const;
};

enum class QhiSign { PaperFormula, ProseAdd };

std::string_view to_string(QhiSign sign) noexcept;
QhiSign parse_qhi_sign(std::string_view name);

struct HexOptions {
  /// Temperature inside the reweighting, independent of the batch temperature.
  double qhi_tau = 0.1;
  QhiSign sign = QhiSign::PaperFormula;
  /// Batch size N in the reweighting; defaults to the anchor count.
  std::optional<double> qhi_batch_size;
  /// Floor for the hierarchical contribution to the denominator.
  double eps_den = 1e-6;

  double batch_size_for(const ContrastiveBatch& b) const {
    return qhi_batch_size ? *qhi_batch_size : static_cast<double>(b.anchors());
  }
};

struct LossBreakdown {
  double total = 0.0;
  double invariance_term = 0.0;
  double regularization_term = 0.0;
  std::optional<double> hex_term_mean;
  std::optional<double> mean_H_size;
  std::size_t clamp_events = 0;
};

/// FIFO ring of unit-norm embeddings used as the NNCLR support set.
class NNQueue {
 public:
  explicit NNQueue(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(const Eigen::Ref<const Vector>& row);
  void push_rows(const Matrix& rows);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Entry by age: 0 is the oldest.
  const Vector& entry(std::size_t i) const { return entries_.at(i); }
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Vector> entries_;
};

namespace losses {

inline constexpr double kTauOneTolerance = 1e-12;

LossBreakdown info_nce(const ContrastiveBatch& b);

/// Reweighted hierarchical term for one anchor:
///   ( sum_h e^{s_h/tau} (s_h/tau) / ((1/N) sum_h e^{s_h/tau})  -/+  N tau e^{pos/tau} ) / (1 - tau)
/// with minus under `PaperFormula` and plus under `ProseAdd`.
double hex_reweight(std::span<const double> anchor_sims_H, double pos_sim, double tau, double batch_size,
                    QhiSign sign = QhiSign::PaperFormula);

LossBreakdown hex_loss(const ContrastiveBatch& b, const HierarchyMask& mask, const HexOptions& options = {});

/// Queue entry with the highest cosine similarity to `z`; the oldest entry wins ties.
Vector nnclr_positive(const NNQueue& q, const Eigen::Ref<const Vector>& z);

double barlow_loss(const Matrix& za, const Matrix& zb, double lambda, double scale);

double vicreg_loss(const Matrix& za, const Matrix& zb, double sim_w, double var_w, double cov_w);

double combined_loss(double hex, double dim, double alpha, double hex_scale);

}  // namespace losses

/// The same objectives built on an autodiff tape.
namespace loss_graph {

struct ContrastiveNodes {
  ad::Var loss;
  ad::Var pos_sims;      ///< 2N x 1 positive similarities
  ad::Var denominators;  ///< 2N x 1 softmax denominators
  std::optional<ad::Var> qhi;  ///< 2N x 1 reweighted term before clamping
  Eigen::Array<bool, Eigen::Dynamic, 1> nonempty;
};

/// sqrt(x) as exp(0.5 log x); x must be positive.
ad::Var sqrt(ad::Tape& t, ad::Var x);

/// First (`second == false`) or second half of the rows of x.
ad::Var half_rows(ad::Tape& t, ad::Var x, Index rows, bool second);

ContrastiveNodes info_nce(ad::Tape& t, ad::Var z, const PositiveIndex& positive, double tau,
                          const Matrix* positive_embeddings = nullptr);

ContrastiveNodes hex_loss(ad::Tape& t, ad::Var z, const PositiveIndex& positive, double tau,
                          const HierarchyMask& mask, const HexOptions& options,
                          const Matrix* positive_embeddings = nullptr);

ad::Var barlow_loss(ad::Tape& t, ad::Var za, ad::Var zb, double lambda, double scale);

ad::Var vicreg_loss(ad::Tape& t, ad::Var za, ad::Var zb, double sim_w, double var_w, double cov_w);

ad::Var combined_loss(ad::Tape& t, ad::Var hex, ad::Var dim, double alpha, double hex_scale);

/// Summary of a contrastive graph's values after forward().
LossBreakdown breakdown(const ad::Tape& t, const ContrastiveNodes& nodes, double tau, double eps_den,
                        const HierarchyMask* mask);

}  // namespace loss_graph
}  // namespace hexreg
