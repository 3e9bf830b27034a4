#include <cmath>

#include "hexreg/losses.hpp"

namespace hexreg::loss_graph {

namespace {

using ad::Tape;
using ad::Var;

Matrix eligible_matrix(const PositiveIndex& positive) {
  return hierarchy::eligible_negatives(positive).cast<double>().matrix();
}

Matrix selector(const PositiveIndex& positive) {
  const auto n = static_cast<Index>(positive.size());
  Matrix s = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) s(i, positive[static_cast<std::size_t>(i)]) = 1.0;
  return s;
}

Matrix off_diagonal(Index d) { return Matrix::Ones(d, d) - Matrix::Identity(d, d); }

void check_batch(Index rows, const PositiveIndex& positive, double tau, const Matrix* positive_embeddings,
                 Index cols) {
  require(std::isfinite(tau) && tau > 0, ErrorCode::BadTemperature, "tau must be > 0");
  require(rows >= 4 && rows % 2 == 0, ErrorCode::DegenerateBatch, "need 2N >= 4 rows");
  require(static_cast<Index>(positive.size()) == rows, ErrorCode::ShapeMismatch, "positive index size");
  if (positive_embeddings)
    require(positive_embeddings->rows() == rows && positive_embeddings->cols() == cols, ErrorCode::ShapeMismatch,
            "positive embeddings shape");
}

struct Shared {
  Var sims;
  Var pos;
  Var exp_sims;
  Var exp_pos;
};

Shared shared_terms(Tape& t, Var z, const PositiveIndex& positive, double tau, const Matrix* positive_embeddings) {
  Shared s;
  s.sims = t.matmul(z, t.transpose(z));
  if (positive_embeddings) {
    const Var nn = t.constant(*positive_embeddings);
    s.pos = t.masked_sum(t.mul(z, nn), t.constant(Matrix::Ones(positive_embeddings->rows(),
                                                                positive_embeddings->cols())));
  } else {
    s.pos = t.masked_sum(s.sims, t.constant(selector(positive)));
  }
  s.exp_sims = t.exp(t.scale(s.sims, 1.0 / tau));
  s.exp_pos = t.exp(t.scale(s.pos, 1.0 / tau));
  return s;
}

Var mean_anchor_loss(Tape& t, Var denominators, Var pos, double tau) {
  return t.mean(t.sub(t.log(denominators), t.scale(pos, 1.0 / tau)));
}

}  // namespace

Var sqrt(Tape& t, Var x) { return t.exp(t.scale(t.log(x), 0.5)); }

Var half_rows(Tape& t, Var x, Index rows, bool second) {
  require(rows % 2 == 0, ErrorCode::ShapeMismatch, "half_rows needs an even row count");
  const Index h = rows / 2;
  Matrix sel = Matrix::Zero(h, rows);
  for (Index i = 0; i < h; ++i) sel(i, second ? i + h : i) = 1.0;
  return t.matmul(t.constant(std::move(sel)), x);
}

ContrastiveNodes info_nce(Tape& t, Var z, const PositiveIndex& positive, double tau,
                          const Matrix* positive_embeddings) {
  const Index n = t.rows(z);
  check_batch(n, positive, tau, positive_embeddings, t.cols(z));
  const Shared s = shared_terms(t, z, positive, tau, positive_embeddings);
  const Var regular = t.masked_sum(s.exp_sims, t.constant(eligible_matrix(positive)));
  const Var denom = t.add(s.exp_pos, regular);
  ContrastiveNodes out;
  out.loss = mean_anchor_loss(t, denom, s.pos, tau);
  out.pos_sims = s.pos;
  out.denominators = denom;
  out.nonempty = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false);
  return out;
}

ContrastiveNodes hex_loss(Tape& t, Var z, const PositiveIndex& positive, double tau, const HierarchyMask& mask,
                          const HexOptions& options, const Matrix* positive_embeddings) {
  const Index n = t.rows(z);
  check_batch(n, positive, tau, positive_embeddings, t.cols(z));
  const double qtau = options.qhi_tau;
  require(std::isfinite(qtau) && qtau > 0, ErrorCode::BadTemperature, "qhi tau must be > 0");
  require(std::abs(1.0 - qtau) > losses::kTauOneTolerance, ErrorCode::TauOne, "reweighting is undefined at tau == 1");
  require(mask.membership.rows() == n && mask.membership.cols() == n, ErrorCode::ShapeMismatch,
          "mask shape does not match batch");
  const double qn = options.qhi_batch_size ? *options.qhi_batch_size : static_cast<double>(n / 2);

  const Shared s = shared_terms(t, z, positive, tau, positive_embeddings);

  // Membership restricted to eligible negatives so self/positive can never enter H(i).
  const BoolGrid eligible = hierarchy::eligible_negatives(positive);
  const BoolGrid h = mask.membership && eligible;
  const Eigen::Array<bool, Eigen::Dynamic, 1> nonempty = h.rowwise().any();

  ContrastiveNodes out;
  out.pos_sims = s.pos;
  out.nonempty = nonempty;

  const Var regular = t.masked_sum(s.exp_sims, t.constant((eligible && !h).cast<double>().matrix()));
  Var denom{};
  if (!nonempty.any()) {
    denom = t.add(s.exp_pos, regular);
  } else {
    const Var hmask = t.constant(h.cast<double>().matrix());
    const Var scaled = t.scale(s.sims, 1.0 / qtau);
    const Var exp_q = qtau == tau ? s.exp_sims : t.exp(scaled);
    const Var weighted = t.masked_sum(t.mul(exp_q, scaled), hmask);
    const Var mass = t.masked_sum(exp_q, hmask);
    // Empty rows divide 0 by 1 and are zeroed below.
    const Matrix empty_rows = (!nonempty).cast<double>().matrix();
    const Var ratio = t.div(weighted, t.add(t.scale(mass, 1.0 / qn), t.constant(empty_rows)));
    const Var exp_pos_q = qtau == tau ? s.exp_pos : t.exp(t.scale(s.pos, 1.0 / qtau));
    const Var pos_term = t.scale(exp_pos_q, qn * qtau);
    const Var numer = options.sign == QhiSign::PaperFormula ? t.sub(ratio, pos_term) : t.add(ratio, pos_term);
    const Var q = t.scale(numer, 1.0 / (1.0 - qtau));
    const Var hier =
        t.mul(t.clamp_min(q, options.eps_den), t.constant(nonempty.cast<double>().matrix()));
    denom = t.add(t.add(hier, s.exp_pos), regular);
    out.qhi = q;
  }
  out.denominators = denom;
  out.loss = mean_anchor_loss(t, denom, s.pos, tau);
  return out;
}

Var barlow_loss(Tape& t, Var za, Var zb, double lambda, double scale) {
  const Index n = t.rows(za);
  const Index d = t.cols(za);
  require(t.rows(zb) == n && t.cols(zb) == d, ErrorCode::ShapeMismatch, "view shapes differ");
  require(n >= 2, ErrorCode::DegenerateBatch, "barlow needs a batch of at least 2");
  const double inv_n = 1.0 / static_cast<double>(n);
  const Var ones = t.constant(Matrix::Ones(1, n));

  auto standardize = [&](Var z) {
    const Var centered = t.sub(z, t.scale(t.matmul(ones, z), inv_n));
    const Var var = t.scale(t.matmul(ones, t.mul(centered, centered)), inv_n);
    return t.div(centered, sqrt(t, var));
  };
  const Var c = t.scale(t.matmul(t.transpose(standardize(za)), standardize(zb)), inv_n);
  const Var diag_gap = t.sub(t.constant(Matrix::Identity(d, d)), c);
  const Var on = t.sum(t.masked_sum(t.mul(diag_gap, diag_gap), t.constant(Matrix::Identity(d, d))));
  const Var off = t.sum(t.masked_sum(t.mul(c, c), t.constant(off_diagonal(d))));
  return t.scale(t.add(on, t.scale(off, lambda)), scale);
}

Var vicreg_loss(Tape& t, Var za, Var zb, double sim_w, double var_w, double cov_w) {
  const Index n = t.rows(za);
  const Index d = t.cols(za);
  require(t.rows(zb) == n && t.cols(zb) == d, ErrorCode::ShapeMismatch, "view shapes differ");
  require(n >= 2, ErrorCode::DegenerateBatch, "vicreg needs a batch of at least 2");
  const double inv_n1 = 1.0 / static_cast<double>(n - 1);
  const Var ones = t.constant(Matrix::Ones(1, n));

  const Var diff = t.sub(za, zb);
  const Var sim = t.mean(t.mul(diff, diff));

  auto view_terms = [&](Var z) {
    const Var centered = t.sub(z, t.scale(t.matmul(ones, z), 1.0 / static_cast<double>(n)));
    const Var var = t.scale(t.matmul(ones, t.mul(centered, centered)), inv_n1);
    const Var sd = sqrt(t, t.clamp_min(var, 1e-12));
    const Var hinge = t.mean(t.relu(t.sub(t.constant(Matrix::Ones(1, d)), sd)));
    const Var cov = t.scale(t.matmul(t.transpose(centered), centered), inv_n1);
    const Var cov_pen =
        t.scale(t.sum(t.masked_sum(t.mul(cov, cov), t.constant(off_diagonal(d)))), 1.0 / static_cast<double>(d));
    return std::pair{hinge, cov_pen};
  };
  const auto [ha, ca] = view_terms(za);
  const auto [hb, cb] = view_terms(zb);
  const Var var_term = t.scale(t.add(ha, hb), 0.5 * var_w);
  const Var cov_term = t.scale(t.add(ca, cb), cov_w);
  return t.add(t.add(t.scale(sim, sim_w), var_term), cov_term);
}

Var combined_loss(Tape& t, Var hex, Var dim, double alpha, double hex_scale) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::BadAlpha, "alpha must lie in [0, 1]");
  require(hex_scale > 0.0, ErrorCode::BadAlpha, "hex_scale must be > 0");
  return t.add(t.scale(hex, alpha * hex_scale), t.scale(dim, 1.0 - alpha));
}

LossBreakdown breakdown(const Tape& t, const ContrastiveNodes& nodes, double tau, double eps_den,
                        const HierarchyMask* mask) {
  LossBreakdown out;
  const Matrix& pos = t.value(nodes.pos_sims);
  const Matrix& den = t.value(nodes.denominators);
  out.invariance_term = -(pos.array() / tau).mean();
  out.regularization_term = den.array().log().mean();
  out.total = t.value(nodes.loss)(0, 0);
  if (nodes.qhi) {
    const Matrix& q = t.value(*nodes.qhi);
    double sum = 0.0;
    std::size_t count = 0;
    for (Index i = 0; i < q.rows(); ++i) {
      if (!nodes.nonempty(i)) continue;
      if (!(q(i, 0) > eps_den)) ++out.clamp_events;
      sum += std::max(q(i, 0), eps_den);
      ++count;
    }
    if (count > 0) out.hex_term_mean = sum / static_cast<double>(count);
  }
  if (mask) out.mean_H_size = mask->mean_size();
  return out;
}

}  // namespace hexreg::loss_graph
