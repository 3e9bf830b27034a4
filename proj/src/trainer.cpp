#include "hexreg/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hexreg/config.hpp"

namespace hexreg {

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::SimCLR: return "simclr";
    case LossKind::SimCLRHex: return "simclr_hex";
    case LossKind::NNCLR: return "nnclr";
    case LossKind::NNCLRHex: return "nnclr_hex";
    case LossKind::Barlow: return "barlow";
    case LossKind::BarlowHex: return "barlow_hex";
    case LossKind::VicReg: return "vicreg";
    case LossKind::VicRegHex: return "vicreg_hex";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::SimCLR, LossKind::SimCLRHex, LossKind::NNCLR, LossKind::NNCLRHex, LossKind::Barlow,
                     LossKind::BarlowHex, LossKind::VicReg, LossKind::VicRegHex})
    if (to_string(k) == name) return k;
  fail(ErrorCode::BadConfig, "unknown loss kind '" + std::string(name) + "'");
}

bool uses_hex(LossKind kind) noexcept {
  return kind == LossKind::SimCLRHex || kind == LossKind::NNCLRHex || kind == LossKind::BarlowHex ||
         kind == LossKind::VicRegHex;
}

bool uses_queue(LossKind kind) noexcept { return kind == LossKind::NNCLR || kind == LossKind::NNCLRHex; }

namespace {

bool dimension_contrastive(LossKind kind) noexcept {
  return kind == LossKind::Barlow || kind == LossKind::BarlowHex || kind == LossKind::VicReg ||
         kind == LossKind::VicRegHex;
}

bool contrastive_term(LossKind kind) noexcept { return !dimension_contrastive(kind) || uses_hex(kind); }

}  // namespace

std::string_view to_string(HexMaskMode mode) noexcept {
  switch (mode) {
    case HexMaskMode::Threshold: return "threshold";
    case HexMaskMode::Supervised: return "supervised";
    case HexMaskMode::All: return "all";
  }
  return "unknown";
}

HexMaskMode parse_hex_mask_mode(std::string_view name) {
  if (name == "threshold") return HexMaskMode::Threshold;
  if (name == "supervised") return HexMaskMode::Supervised;
  if (name == "all") return HexMaskMode::All;
  fail(ErrorCode::BadConfig, "unknown hex_mask '" + std::string(name) + "'");
}

double TrainConfig::effective_hex_scale() const {
  if (hex_scale) return *hex_scale;
  return loss == LossKind::VicReg || loss == LossKind::VicRegHex ? 5.0 : 1.0;
}

void TrainConfig::validate() const {
  require(repr_dim >= 1 && proj_hidden >= 1 && proj_dim >= 1, ErrorCode::BadDims, "model dims must be >= 1");
  for (int h : encoder_hidden) require(h >= 1, ErrorCode::BadDims, "encoder_hidden entries must be >= 1");
  require(batch_size >= 2, ErrorCode::BadConfig, "batch_size must be >= 2");
  require(epochs >= 1, ErrorCode::BadConfig, "epochs must be >= 1");
  require(lr > 0 && std::isfinite(lr), ErrorCode::BadConfig, "lr must be > 0");
  require(momentum >= 0 && momentum < 1, ErrorCode::BadConfig, "momentum must lie in [0, 1)");
  require(tau > 0, ErrorCode::BadTemperature, "tau must be > 0");
  require(alpha >= 0 && alpha <= 1, ErrorCode::BadAlpha, "alpha must lie in [0, 1]");
  require(effective_hex_scale() > 0, ErrorCode::BadConfig, "hex_scale must be > 0");
  require(hex.qhi_tau > 0, ErrorCode::BadTemperature, "qhi_tau must be > 0");
  require(std::abs(1.0 - hex.qhi_tau) > losses::kTauOneTolerance, ErrorCode::TauOne, "qhi_tau must differ from 1");
  require(hex.eps_den > 0, ErrorCode::BadConfig, "eps_den must be > 0");
  require(!uses_queue(loss) || queue_capacity >= 1, ErrorCode::BadConfig, "queue_capacity must be >= 1 for NNCLR");
  require(aug_noise >= 0 && aug_mask >= 0 && aug_mask < 1, ErrorCode::BadConfig,
          "augment.noise must be >= 0 and augment.mask_prob in [0, 1)");
  require(eval_every >= 1, ErrorCode::BadConfig, "eval.every must be >= 1");
  require(knn_k >= 1, ErrorCode::BadK, "knn_k must be >= 1");
  require(heldout_fraction > 0 && heldout_fraction < 1, ErrorCode::BadConfig, "heldout_fraction must lie in (0, 1)");
  require(rank_subsets >= 1 && rank_subset_size >= 1, ErrorCode::BadConfig, "rank subset options must be >= 1");
  schedule.validate();
}

bool ModelParams::operator==(const ModelParams& o) const {
  if (n_layers() != o.n_layers() || encoder.size() != o.encoder.size()) return false;
  for (std::size_t i = 0; i < n_layers(); ++i)
    if (layer(i).weight != o.layer(i).weight || layer(i).bias != o.layer(i).bias) return false;
  return true;
}

namespace trainer {

namespace {

// Stream tags below the run seed.
enum Tag : std::uint64_t { kInit = 10, kAugment = 20, kShuffle = 21, kRank = 30, kSplit = 40 };

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (std::size_t i = 0; i < z.n_layers(); ++i) {
    z.layer(i).weight.setZero();
    z.layer(i).bias.setZero();
  }
  return z;
}

Matrix forward_layer(const Matrix& h, const Layer& l) { return (h * l.weight).rowwise() + l.bias.row(0); }

double mean_or_missing(double sum, std::size_t n) { return n == 0 ? kMissing : sum / static_cast<double>(n); }

double value_or_missing(const std::optional<double>& v) { return v ? *v : kMissing; }

}  // namespace

ModelParams init_params(const TrainConfig& config, int input_dim, std::uint64_t seed) {
  require(input_dim >= 1, ErrorCode::BadDims, "input_dim must be >= 1");
  require(config.repr_dim >= 1 && config.proj_hidden >= 1 && config.proj_dim >= 1, ErrorCode::BadDims,
          "model dims must be >= 1");
  std::vector<int> enc{input_dim};
  for (int h : config.encoder_hidden) {
    require(h >= 1, ErrorCode::BadDims, "encoder_hidden entries must be >= 1");
    enc.push_back(h);
  }
  enc.push_back(config.repr_dim);
  const std::vector<int> proj{config.repr_dim, config.proj_hidden, config.proj_dim};

  ModelParams p;
  std::uint64_t index = 0;
  auto make = [&](int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    CounterRng rng = CounterRng::stream(seed, {kInit, index++});
    Layer l{Matrix(fan_in, fan_out), Matrix::Zero(1, fan_out)};
    for (Index r = 0; r < fan_in; ++r)
      for (Index c = 0; c < fan_out; ++c) l.weight(r, c) = rng.uniform(-a, a);
    return l;
  };
  for (std::size_t i = 0; i + 1 < enc.size(); ++i) p.encoder.push_back(make(enc[i], enc[i + 1]));
  for (std::size_t i = 0; i + 1 < proj.size(); ++i) p.projector.push_back(make(proj[i], proj[i + 1]));
  return p;
}

TrainState init_state(const TrainConfig& config, int input_dim) {
  config.validate();
  TrainState s;
  s.config = config;
  s.params = init_params(config, input_dim, config.seed);
  s.velocity = zeros_like(s.params);
  s.shuffle_rng = CounterRng::stream(config.seed, {kShuffle});
  s.queue = NNQueue(uses_queue(config.loss) ? config.queue_capacity : 0);
  return s;
}

Embeddings embed(const ModelParams& params, const Matrix& x) {
  Matrix h = x;
  for (const Layer& l : params.encoder) h = forward_layer(h, l).array().tanh().matrix();
  Embeddings e;
  e.representation = h;
  for (std::size_t i = 0; i < params.projector.size(); ++i) {
    h = forward_layer(h, params.projector[i]);
    if (i + 1 < params.projector.size()) h = h.array().tanh().matrix();
  }
  e.projection = h;
  e.z = linalg::l2_normalize_rows(h);
  return e;
}

std::pair<HierarchyMask, double> batch_mask(const TrainConfig& config, const Matrix& z,
                                            std::span<const int> superclass, int epoch) {
  const PositiveIndex positive = hierarchy::paired_views(z.rows() / 2);
  switch (config.hex_mask) {
    case HexMaskMode::Supervised: return {hierarchy::supervised_mask(superclass, positive), kMissing};
    case HexMaskMode::All: return {hierarchy::whole_batch_mask(z.rows(), positive), kMissing};
    case HexMaskMode::Threshold: break;
  }
  const SimilarityMatrix sims = linalg::cosine_sim_matrix(z);
  const double eps = config.schedule.data_dependent()
                         ? schedule::adaptive_threshold(hierarchy::pooled_negative_similarities(sims, positive),
                                                        config.schedule.sigma_multiplier)
                         : schedule::manual_threshold(config.schedule, epoch);
  return {hierarchy::threshold_mask(sims, eps, positive, mask_source(config.schedule.kind)), eps};
}

BatchGraph build_batch_graph(const TrainConfig& config, const ModelParams& params, const BatchContext& batch,
                             int epoch) {
  require(batch.x.rows() >= 4 && batch.x.rows() % 2 == 0, ErrorCode::DegenerateBatch,
          "a batch needs an even number (>= 4) of stacked view rows");
  BatchGraph g;
  ad::Tape& t = g.tape;
  for (std::size_t i = 0; i < params.n_layers(); ++i) {
    g.params.push_back(t.input(params.layer(i).weight, "w" + std::to_string(i)));
    g.params.push_back(t.input(params.layer(i).bias, "b" + std::to_string(i)));
  }
  auto dense = [&](ad::Var h, std::size_t layer) {
    return t.add(t.matmul(h, g.params[2 * layer]), g.params[2 * layer + 1]);
  };
  ad::Var h = t.constant(batch.x);
  std::size_t layer = 0;
  for (; layer < params.encoder.size(); ++layer) h = t.tanh(dense(h, layer));
  for (std::size_t k = 0; k < params.projector.size(); ++k, ++layer) {
    h = dense(h, layer);
    if (k + 1 < params.projector.size()) h = t.tanh(h);
  }
  const ad::Var projection = h;
  const Index rows = batch.x.rows();
  const PositiveIndex positive = hierarchy::paired_views(rows / 2);
  const Matrix* nn = batch.nn_positive ? &*batch.nn_positive : nullptr;

  if (uses_hex(config.loss)) {
    const Embeddings e = embed(params, batch.x);
    auto [mask, eps] = batch_mask(config, e.z, batch.superclass, epoch);
    g.mask = std::move(mask);
    g.threshold = eps;
    g.contrastive = loss_graph::hex_loss(t, t.row_l2_normalize(projection), positive, config.tau, g.mask, config.hex, nn);
  } else {
    g.mask = HierarchyMask::none(rows);
    if (contrastive_term(config.loss))
      g.contrastive = loss_graph::info_nce(t, t.row_l2_normalize(projection), positive, config.tau, nn);
  }

  if (!dimension_contrastive(config.loss)) {
    g.loss = g.contrastive->loss;
    return g;
  }
  const ad::Var za = loss_graph::half_rows(t, projection, rows, false);
  const ad::Var zb = loss_graph::half_rows(t, projection, rows, true);
  const bool barlow = config.loss == LossKind::Barlow || config.loss == LossKind::BarlowHex;
  const ad::Var dim = barlow ? loss_graph::barlow_loss(t, za, zb, config.barlow_lambda, config.barlow_scale)
                             : loss_graph::vicreg_loss(t, za, zb, config.vicreg_sim, config.vicreg_var,
                                                       config.vicreg_cov);
  g.loss = uses_hex(config.loss)
               ? loss_graph::combined_loss(t, g.contrastive->loss, dim, config.alpha, config.effective_hex_scale())
               : dim;
  return g;
}

std::vector<Index> shuffled_order(CounterRng& rng, Index n) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::pair<std::vector<Index>, std::vector<Index>> heldout_split(Index n, double fraction, std::uint64_t seed) {
  CounterRng rng = CounterRng::stream(seed, {kSplit});
  std::vector<Index> order = shuffled_order(rng, n);
  const auto n_query = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<Index> query(order.end() - static_cast<std::ptrdiff_t>(n_query), order.end());
  order.resize(order.size() - n_query);
  return {order, query};
}

MetricsRow train_epoch(TrainState& state, const HierarchicalDataset& dataset) {
  const TrainConfig& cfg = state.config;
  require(dataset.dim() == state.params.encoder.front().weight.rows(), ErrorCode::BadDims,
          "dataset dimension does not match the encoder input");
  require(static_cast<Index>(dataset.superclass_labels.size()) == dataset.size(), ErrorCode::MissingLabels,
          "dataset labels missing");
  const int epoch = state.epoch;
  const double lr = cfg.cosine_lr
                        ? cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(cfg.epochs)))
                        : cfg.lr;
  const std::vector<Index> order = shuffled_order(state.shuffle_rng, dataset.size());

  double loss_sum = 0.0, inv_sum = 0.0, reg_sum = 0.0, eps_sum = 0.0, h_sum = 0.0;
  std::size_t n_batches = 0, n_contrastive = 0, n_eps = 0, n_h = 0, clamps = 0;

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t b = std::min(bs, order.size() - start);
    if (b < 2) break;
    const auto B = static_cast<Index>(b);
    BatchContext batch;
    batch.x.resize(2 * B, dataset.dim());
    batch.superclass.resize(2 * b);
    for (std::size_t r = 0; r < b; ++r) {
      const Index sample = order[start + r];
      const Vector row = dataset.x.row(sample).transpose();
      for (std::uint64_t view = 0; view < 2; ++view) {
        const std::uint64_t seed = CounterRng::derive(
            cfg.seed, {kAugment, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(sample), view});
        batch.x.row(static_cast<Index>(r + view * b)) =
            data::augment(row, cfg.aug_noise, cfg.aug_mask, seed).transpose();
        batch.superclass[r + view * b] = dataset.superclass_labels[static_cast<std::size_t>(sample)];
      }
    }

    Matrix fresh;
    if (uses_queue(cfg.loss)) {
      fresh = embed(state.params, batch.x).z;
      if (!state.queue.empty()) {
        const PositiveIndex positive = hierarchy::paired_views(B);
        Matrix nn(fresh.rows(), fresh.cols());
        for (Index i = 0; i < fresh.rows(); ++i)
          nn.row(i) = losses::nnclr_positive(state.queue, fresh.row(positive[static_cast<std::size_t>(i)]).transpose())
                          .transpose();
        batch.nn_positive = std::move(nn);
      }
    }

    BatchGraph g = build_batch_graph(cfg, state.params, batch, epoch);
    try {
      g.tape.forward();
    } catch (const Error& e) {
      fail(e.code(), "batch " + std::to_string(n_batches) + " of epoch " + std::to_string(epoch) + ": " + e.what());
    }
    g.tape.backward();

    for (std::size_t i = 0; i < state.params.n_layers(); ++i) {
      Layer& p = state.params.layer(i);
      Layer& v = state.velocity.layer(i);
      v.weight = cfg.momentum * v.weight + g.tape.grad(g.params[2 * i]);
      v.bias = cfg.momentum * v.bias + g.tape.grad(g.params[2 * i + 1]);
      p.weight -= lr * v.weight;
      p.bias -= lr * v.bias;
    }
    if (uses_queue(cfg.loss)) state.queue.push_rows(fresh.bottomRows(B));

    loss_sum += g.tape.value(g.loss)(0, 0);
    ++n_batches;
    if (g.contrastive) {
      const LossBreakdown br =
          loss_graph::breakdown(g.tape, *g.contrastive, cfg.tau, cfg.hex.eps_den, uses_hex(cfg.loss) ? &g.mask : nullptr);
      inv_sum += br.invariance_term;
      reg_sum += br.regularization_term;
      ++n_contrastive;
      clamps += br.clamp_events;
    }
    if (uses_hex(cfg.loss)) {
      h_sum += g.mask.mean_size();
      ++n_h;
    }
    if (!std::isnan(g.threshold)) {
      eps_sum += g.threshold;
      ++n_eps;
    }
  }
  require(n_batches > 0, ErrorCode::EmptyBatch, "dataset too small for a single batch");

  ++state.epoch;
  MetricsRow row;
  row.epoch = state.epoch;
  row.loss = loss_sum / static_cast<double>(n_batches);
  row.invariance = mean_or_missing(inv_sum, n_contrastive);
  row.regularization = mean_or_missing(reg_sum, n_contrastive);
  row.threshold = mean_or_missing(eps_sum, n_eps);
  row.mean_H_size = mean_or_missing(h_sum, n_h);
  row.clamp_events = static_cast<double>(clamps);
  if (state.epoch % cfg.eval_every == 0 || state.epoch == cfg.epochs) evaluate_into(state, dataset, row);
  state.history.push_back(row);
  return row;
}

void evaluate_into(const TrainState& state, const HierarchicalDataset& dataset, MetricsRow& row) {
  const TrainConfig& cfg = state.config;
  const Embeddings e = embed(state.params, dataset.x);
  const std::span<const int> supers(dataset.superclass_labels);

  diagnostics::SubsetOptions opts;
  opts.n_subsets = cfg.rank_subsets;
  opts.subset_size = cfg.rank_subset_size;
  opts.seed = CounterRng::derive(cfg.seed, {kRank});
  const RankCurvePoint rank = diagnostics::subset_rank_curve(e.representation, supers, opts);
  row.rankme_super = rank.mean_rankme_superclass;
  row.rankme_random = rank.mean_rankme_random;

  const PositiveIndex none = hierarchy::no_positives(dataset.size());
  const SimilarityMatrix proj_sims = linalg::cosine_sim_matrix(e.z);
  const SimilarityMatrix repr_sims = linalg::cosine_sim_matrix(linalg::l2_normalize_rows(e.representation));
  const DistributionStats proj = diagnostics::distribution_stats(proj_sims, supers, none, EmbeddingSpace::Projection);
  const DistributionStats repr =
      diagnostics::distribution_stats(repr_sims, supers, none, EmbeddingSpace::Representation);
  row.mean_super = value_or_missing(proj.mean_super);
  row.mean_regular = value_or_missing(proj.mean_regular);
  row.skew_super = value_or_missing(proj.skew_super);
  row.skew_regular = value_or_missing(proj.skew_regular);
  row.ratio_projection = value_or_missing(proj.ratio);
  row.ratio_representation = value_or_missing(repr.ratio);

  const double eps = schedule::adaptive_threshold(hierarchy::pooled_negative_similarities(proj_sims, none),
                                                  cfg.schedule.sigma_multiplier);
  const HierarchyMask mask = hierarchy::threshold_mask(proj_sims, eps, none, MaskSource::Adaptive);
  const MaskQuality q = hierarchy::mask_quality(mask, supers, none);
  row.eval_threshold = eps;
  row.eval_mask_size = q.mean_mask_size;
  row.mask_precision = q.precision;
  row.mask_recall = q.recall;

  row.knn_class = evaluate(state, dataset, Probe::KnnClass, cfg.knn_k);
  row.knn_super = evaluate(state, dataset, Probe::KnnSuper, cfg.knn_k);
}

double evaluate(const TrainState& state, const HierarchicalDataset& dataset, Probe probe, int k) {
  const std::vector<int>& labels = probe == Probe::KnnClass ? dataset.class_labels : dataset.superclass_labels;
  require(static_cast<Index>(labels.size()) == dataset.size(), ErrorCode::MissingLabels, "dataset labels missing");
  const Matrix r = embed(state.params, dataset.x).representation;
  const auto [train, query] = heldout_split(dataset.size(), state.config.heldout_fraction, state.config.seed);
  auto gather = [&](const std::vector<Index>& idx, Matrix& m, std::vector<int>& l) {
    m.resize(static_cast<Index>(idx.size()), r.cols());
    l.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      m.row(static_cast<Index>(i)) = r.row(idx[i]);
      l[i] = labels[static_cast<std::size_t>(idx[i])];
    }
  };
  Matrix train_r, query_r;
  std::vector<int> train_l, query_l;
  gather(train, train_r, train_l);
  gather(query, query_r, query_l);
  return diagnostics::knn_accuracy(train_r, train_l, query_r, query_l, k);
}

// Metrics table: column name and member, in CSV order. The first fourteen
// columns are the public diagnostics schema; the rest are trainer extras.
namespace {

struct Column {
  const char* name;
  double MetricsRow::*member;
};

constexpr Column kColumns[] = {
    {"rankme_super", &MetricsRow::rankme_super},
    {"rankme_random", &MetricsRow::rankme_random},
    {"mean_super", &MetricsRow::mean_super},
    {"mean_regular", &MetricsRow::mean_regular},
    {"ratio_projection", &MetricsRow::ratio_projection},
    {"ratio_representation", &MetricsRow::ratio_representation},
    {"skew_super", &MetricsRow::skew_super},
    {"skew_regular", &MetricsRow::skew_regular},
    {"knn_class", &MetricsRow::knn_class},
    {"knn_super", &MetricsRow::knn_super},
    {"threshold", &MetricsRow::threshold},
    {"mean_H_size", &MetricsRow::mean_H_size},
    {"clamp_events", &MetricsRow::clamp_events},
    {"loss", &MetricsRow::loss},
    {"invariance", &MetricsRow::invariance},
    {"regularization", &MetricsRow::regularization},
    {"eval_threshold", &MetricsRow::eval_threshold},
    {"eval_mask_size", &MetricsRow::eval_mask_size},
    {"mask_precision", &MetricsRow::mask_precision},
    {"mask_recall", &MetricsRow::mask_recall},
};

}  // namespace

std::vector<std::string> metrics_columns() {
  std::vector<std::string> out{"epoch"};
  for (const Column& c : kColumns) out.emplace_back(c.name);
  return out;
}

std::vector<double> metrics_values(const MetricsRow& row) {
  std::vector<double> out{static_cast<double>(row.epoch)};
  for (const Column& c : kColumns) out.push_back(row.*c.member);
  return out;
}

MetricsRow metrics_from_values(std::span<const double> values) {
  require(values.size() == std::size(kColumns) + 1, ErrorCode::SchemaError, "metrics row has the wrong width");
  MetricsRow row;
  row.epoch = static_cast<int>(values[0]);
  for (std::size_t i = 0; i < std::size(kColumns); ++i) row.*kColumns[i].member = values[i + 1];
  return row;
}

void write_metrics_csv(const std::vector<MetricsRow>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  const auto cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  char buf[32];
  for (const MetricsRow& row : history) {
    out << row.epoch;
    for (const Column& c : kColumns) {
      const double v = row.*c.member;
      if (std::isnan(v)) {
        out << ",nan";
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
    }
    out << '\n';
  }
  require(out.good(), ErrorCode::IoError, "write to " + path.string() + " failed");
}

// Checkpoint layout:
//   8 bytes   magic "HEXRCKPT"
//   u32 LE    format version
//   u64 LE    header length H
//   H bytes   JSON header: config, epoch, rng, and an array table [{name, rows, cols}]
//   then every table entry in order as rows*cols row-major little-endian float64.
namespace {

constexpr char kMagic[8] = {'H', 'E', 'X', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof b);
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof b);
  require(in.gcount() == sizeof b, ErrorCode::IoError, "checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    const double v = m.data()[i];
    std::memcpy(&bits, &v, sizeof bits);
    put_le(out, bits);
  }
}

Matrix get_matrix(std::istream& in, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    const auto bits = get_le<std::uint64_t>(in);
    std::memcpy(m.data() + i, &bits, sizeof bits);
  }
  return m;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, const Matrix*>> arrays;
  for (std::size_t i = 0; i < state.params.n_layers(); ++i) {
    arrays.emplace_back("param.w" + std::to_string(i), &state.params.layer(i).weight);
    arrays.emplace_back("param.b" + std::to_string(i), &state.params.layer(i).bias);
  }
  for (std::size_t i = 0; i < state.velocity.n_layers(); ++i) {
    arrays.emplace_back("velocity.w" + std::to_string(i), &state.velocity.layer(i).weight);
    arrays.emplace_back("velocity.b" + std::to_string(i), &state.velocity.layer(i).bias);
  }
  const Index qdim = state.queue.empty() ? 0 : state.queue.entry(0).size();
  Matrix queue(static_cast<Index>(state.queue.size()), qdim);
  for (std::size_t i = 0; i < state.queue.size(); ++i) queue.row(static_cast<Index>(i)) = state.queue.entry(i);
  arrays.emplace_back("queue", &queue);
  Matrix history(static_cast<Index>(state.history.size()), static_cast<Index>(std::size(kColumns) + 1));
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto v = metrics_values(state.history[i]);
    for (std::size_t c = 0; c < v.size(); ++c) history(static_cast<Index>(i), static_cast<Index>(c)) = v[c];
  }
  arrays.emplace_back("history", &history);

  nlohmann::json header;
  header["config"] = config::to_json(state.config);
  header["epoch"] = state.epoch;
  header["rng"] = {{"shuffle_key", state.shuffle_rng.key()}, {"shuffle_counter", state.shuffle_rng.counter()}};
  header["encoder_layers"] = state.params.encoder.size();
  header["queue_capacity"] = state.queue.capacity();
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, m] : arrays) header["arrays"].push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : arrays) put_matrix(out, *m);
    require(out.good(), ErrorCode::IoError, "write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorCode::IoError, "cannot move checkpoint into place: " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  require(in.gcount() == sizeof magic && std::memcmp(magic, kMagic, sizeof magic) == 0, ErrorCode::VersionMismatch,
          path.string() + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(in);
  require(version == kCheckpointVersion, ErrorCode::VersionMismatch,
          "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  const auto length = get_le<std::uint64_t>(in);
  require(length < (1ULL << 30), ErrorCode::IoError, "checkpoint header too large");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  require(static_cast<std::uint64_t>(in.gcount()) == length, ErrorCode::IoError, "checkpoint truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("corrupt checkpoint header: ") + e.what());
  }
  TrainState s;
  try {
    s.config = config::from_json(header.at("config"));
    s.epoch = header.at("epoch").get<int>();
    s.shuffle_rng = CounterRng(header.at("rng").at("shuffle_key").get<std::uint64_t>(),
                               header.at("rng").at("shuffle_counter").get<std::uint64_t>());
    const auto encoder_layers = header.at("encoder_layers").get<std::size_t>();
    s.queue = NNQueue(header.at("queue_capacity").get<std::size_t>());

    std::vector<Layer> params, velocity;
    for (const auto& entry : header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("rows").get<Index>();
      const auto cols = entry.at("cols").get<Index>();
      require(rows >= 0 && cols >= 0 && rows * cols < (1LL << 28), ErrorCode::IoError, "bad array shape");
      Matrix m = get_matrix(in, rows, cols);
      auto& target = name.rfind("param.", 0) == 0 ? params : velocity;
      if (name.rfind("param.w", 0) == 0 || name.rfind("velocity.w", 0) == 0) {
        target.push_back(Layer{std::move(m), Matrix()});
      } else if (name.rfind("param.b", 0) == 0 || name.rfind("velocity.b", 0) == 0) {
        require(!target.empty(), ErrorCode::IoError, "bias before weight in checkpoint");
        target.back().bias = std::move(m);
      } else if (name == "queue") {
        for (Index i = 0; i < m.rows(); ++i) s.queue.push(m.row(i).transpose());
      } else if (name == "history") {
        for (Index i = 0; i < m.rows(); ++i) {
          const Vector row = m.row(i).transpose();
          s.history.push_back(metrics_from_values(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))));
        }
      } else {
        fail(ErrorCode::IoError, "unknown checkpoint array '" + name + "'");
      }
    }
    require(params.size() == velocity.size() && encoder_layers <= params.size(), ErrorCode::IoError,
            "checkpoint layer table inconsistent");
    auto split = [&](std::vector<Layer>& layers, ModelParams& out) {
      out.encoder.assign(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(encoder_layers));
      out.projector.assign(layers.begin() + static_cast<std::ptrdiff_t>(encoder_layers), layers.end());
    };
    split(params, s.params);
    split(velocity, s.velocity);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("corrupt checkpoint header: ") + e.what());
  }
  in.peek();
  require(in.eof(), ErrorCode::IoError, "trailing bytes in checkpoint");
  return s;
}

void run(TrainState& state, const HierarchicalDataset& dataset, const RunOptions& options) {
  while (state.epoch < state.config.epochs) {
    const MetricsRow row = train_epoch(state, dataset);
    if (options.on_epoch) options.on_epoch(row);
    if (options.checkpoint_every > 0 && state.epoch % options.checkpoint_every == 0)
      save_checkpoint(state, options.checkpoint_dir / ("checkpoint_" + std::to_string(state.epoch) + ".bin"));
  }
}

HierarchicalDataset load_dataset(const TrainConfig& config) {
  return config.data_path ? data::load_csv(*config.data_path) : data::generate(config.data);
}

}  // namespace trainer
}  // namespace hexreg
