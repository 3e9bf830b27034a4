#include "hexreg/losses.hpp"

#include <cmath>
#include <string>

namespace hexreg {

std::string_view to_string(QhiSign sign) noexcept {
  return sign == QhiSign::PaperFormula ? "paper_formula" : "prose_add";
}

QhiSign parse_qhi_sign(std::string_view name) {
  if (name == "paper_formula") return QhiSign::PaperFormula;
  if (name == "prose_add") return QhiSign::ProseAdd;
  fail(ErrorCode::BadConfig, "unknown qhi.sign '" + std::string(name) + "'");
}

void ContrastiveBatch::validate() const {
  require(std::isfinite(tau) && tau > 0, ErrorCode::BadTemperature, "tau must be > 0, got " + std::to_string(tau));
  require(z.rows() >= 4 && z.rows() % 2 == 0, ErrorCode::DegenerateBatch,
          "need 2N >= 4 rows, got " + std::to_string(z.rows()));
  require(static_cast<Index>(positive.size()) == z.rows(), ErrorCode::ShapeMismatch, "positive index size");
  for (Index i = 0; i < z.rows(); ++i) {
    const Index p = positive[static_cast<std::size_t>(i)];
    require(p >= 0 && p < z.rows() && p != i && positive[static_cast<std::size_t>(p)] == i,
            ErrorCode::ShapeMismatch, "positive pairing is not an involution at row " + std::to_string(i));
  }
  if (positive_embeddings)
    require(positive_embeddings->rows() == z.rows() && positive_embeddings->cols() == z.cols(),
            ErrorCode::ShapeMismatch, "positive embeddings shape");
}

void NNQueue::push(const Eigen::Ref<const Vector>& row) {
  if (capacity_ == 0) return;
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.emplace_back(row);
}

void NNQueue::push_rows(const Matrix& rows) {
  for (Index i = 0; i < rows.rows(); ++i) push(rows.row(i).transpose());
}

namespace losses {

namespace {

double positive_similarity(const ContrastiveBatch& b, Index i) {
  if (b.positive_embeddings) return b.z.row(i).dot(b.positive_embeddings->row(i));
  return b.z.row(i).dot(b.z.row(b.positive[static_cast<std::size_t>(i)]));
}

void check_qhi_tau(double tau) {
  require(std::isfinite(tau) && tau > 0, ErrorCode::BadTemperature, "qhi tau must be > 0");
  require(std::abs(1.0 - tau) > kTauOneTolerance, ErrorCode::TauOne, "reweighting is undefined at tau == 1");
}

}  // namespace

LossBreakdown info_nce(const ContrastiveBatch& b) {
  b.validate();
  const Index n = b.rows();
  LossBreakdown out;
  for (Index i = 0; i < n; ++i) {
    const Index p = b.positive[static_cast<std::size_t>(i)];
    const double pos = positive_similarity(b, i);
    double denom = std::exp(pos / b.tau);
    for (Index a = 0; a < n; ++a) {
      if (a == i || a == p) continue;
      denom += std::exp(b.z.row(i).dot(b.z.row(a)) / b.tau);
    }
    out.invariance_term += -pos / b.tau;
    out.regularization_term += std::log(denom);
  }
  out.invariance_term /= static_cast<double>(n);
  out.regularization_term /= static_cast<double>(n);
  out.total = out.invariance_term + out.regularization_term;
  return out;
}

double hex_reweight(std::span<const double> anchor_sims_H, double pos_sim, double tau, double batch_size,
                    QhiSign sign) {
  check_qhi_tau(tau);
  require(!anchor_sims_H.empty(), ErrorCode::EmptyH, "hierarchical set is empty");
  double weighted = 0.0;
  double mass = 0.0;
  for (double s : anchor_sims_H) {
    const double e = std::exp(s / tau);
    weighted += e * (s / tau);
    mass += e;
  }
  const double ratio = weighted / (mass / batch_size);
  const double pos_term = batch_size * tau * std::exp(pos_sim / tau);
  const double numerator = sign == QhiSign::PaperFormula ? ratio - pos_term : ratio + pos_term;
  return numerator / (1.0 - tau);
}

LossBreakdown hex_loss(const ContrastiveBatch& b, const HierarchyMask& mask, const HexOptions& options) {
  b.validate();
  check_qhi_tau(options.qhi_tau);
  const Index n = b.rows();
  require(mask.membership.rows() == n && mask.membership.cols() == n, ErrorCode::ShapeMismatch,
          "mask shape does not match batch");
  const double qn = options.batch_size_for(b);

  LossBreakdown out;
  double hex_sum = 0.0;
  std::size_t hex_count = 0;
  std::vector<double> sims_h;
  for (Index i = 0; i < n; ++i) {
    const Index p = b.positive[static_cast<std::size_t>(i)];
    const double pos = positive_similarity(b, i);

    sims_h.clear();
    double regular = 0.0;
    for (Index a = 0; a < n; ++a) {
      if (a == i || a == p) continue;
      const double s = b.z.row(i).dot(b.z.row(a));
      if (mask.membership(i, a)) sims_h.push_back(s);
      else regular += std::exp(s / b.tau);
    }

    double hier = 0.0;
    if (!sims_h.empty()) {
      const double q = hex_reweight(sims_h, pos, options.qhi_tau, qn, options.sign);
      if (!(q > options.eps_den)) ++out.clamp_events;
      hier = std::max(q, options.eps_den);
      hex_sum += hier;
      ++hex_count;
    }
    const double denom = hier + std::exp(pos / b.tau) + regular;
    require(denom > 0, ErrorCode::NonPositiveDenominator, "denominator of row " + std::to_string(i));
    out.invariance_term += -pos / b.tau;
    out.regularization_term += std::log(denom);
  }
  out.invariance_term /= static_cast<double>(n);
  out.regularization_term /= static_cast<double>(n);
  out.total = out.invariance_term + out.regularization_term;
  if (hex_count > 0) out.hex_term_mean = hex_sum / static_cast<double>(hex_count);
  out.mean_H_size = mask.mean_size();
  return out;
}

Vector nnclr_positive(const NNQueue& q, const Eigen::Ref<const Vector>& z) {
  require(!q.empty(), ErrorCode::EmptyQueue, "nearest-neighbour queue is empty");
  std::size_t best = 0;
  double best_sim = -INFINITY;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double s = q.entry(k).dot(z);
    if (s > best_sim) {
      best_sim = s;
      best = k;
    }
  }
  return q.entry(best);
}

double barlow_loss(const Matrix& za, const Matrix& zb, double lambda, double scale) {
  require(za.rows() == zb.rows() && za.cols() == zb.cols(), ErrorCode::ShapeMismatch, "view shapes differ");
  require(za.rows() >= 2, ErrorCode::DegenerateBatch, "barlow needs a batch of at least 2");
  const auto n = static_cast<double>(za.rows());
  auto standardize = [&](const Matrix& z, const char* view) {
    Matrix out = z.rowwise() - z.colwise().mean();
    for (Index k = 0; k < out.cols(); ++k) {
      const double sd = std::sqrt(out.col(k).squaredNorm() / n);
      require(sd > 1e-12, ErrorCode::ZeroVariance,
              std::string("view ") + view + " column " + std::to_string(k) + " is constant");
      out.col(k) /= sd;
    }
    return out;
  };
  const Matrix c = standardize(za, "A").transpose() * standardize(zb, "B") / n;
  double on = 0.0;
  double off = 0.0;
  for (Index k = 0; k < c.rows(); ++k)
    for (Index l = 0; l < c.cols(); ++l) {
      if (k == l) on += (1.0 - c(k, k)) * (1.0 - c(k, k));
      else off += c(k, l) * c(k, l);
    }
  return scale * (on + lambda * off);
}

double vicreg_loss(const Matrix& za, const Matrix& zb, double sim_w, double var_w, double cov_w) {
  require(za.rows() == zb.rows() && za.cols() == zb.cols(), ErrorCode::ShapeMismatch, "view shapes differ");
  require(za.rows() >= 2, ErrorCode::DegenerateBatch, "vicreg needs a batch of at least 2");
  const auto n = static_cast<double>(za.rows());
  const auto d = static_cast<double>(za.cols());
  const double sim = (za - zb).squaredNorm() / (n * d);

  auto var_cov = [&](const Matrix& z, double& hinge, double& cov_pen) {
    const Matrix centered = z.rowwise() - z.colwise().mean();
    const Matrix cov = centered.transpose() * centered / (n - 1.0);
    hinge = 0.0;
    cov_pen = 0.0;
    for (Index k = 0; k < cov.rows(); ++k) {
      hinge += std::max(0.0, 1.0 - std::sqrt(cov(k, k)));
      for (Index l = 0; l < cov.cols(); ++l)
        if (k != l) cov_pen += cov(k, l) * cov(k, l);
    }
    hinge /= d;
    cov_pen /= d;
  };
  double ha = 0, ca = 0, hb = 0, cb = 0;
  var_cov(za, ha, ca);
  var_cov(zb, hb, cb);
  return sim_w * sim + var_w * (ha + hb) / 2.0 + cov_w * (ca + cb);
}

double combined_loss(double hex, double dim, double alpha, double hex_scale) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::BadAlpha, "alpha must lie in [0, 1]");
  require(hex_scale > 0.0, ErrorCode::BadAlpha, "hex_scale must be > 0");
  return alpha * hex_scale * hex + (1.0 - alpha) * dim;
}

}  // namespace losses
}  // namespace hexreg
