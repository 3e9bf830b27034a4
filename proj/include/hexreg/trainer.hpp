#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

#include "hexreg/data.hpp"
#include "hexreg/diagnostics.hpp"
#include "hexreg/losses.hpp"
#include "hexreg/rng.hpp"
#include "hexreg/schedule.hpp"

namespace hexreg {

enum class LossKind { SimCLR, SimCLRHex, NNCLR, NNCLRHex, Barlow, BarlowHex, VicReg, VicRegHex };

std::string_view to_string(LossKind kind) noexcept;
LossKind parse_loss_kind(std::string_view name);
bool uses_hex(LossKind kind) noexcept;
bool uses_queue(LossKind kind) noexcept;

/// How H(i) is chosen for the HEX variants.
enum class HexMaskMode { Threshold, Supervised, All };

std::string_view to_string(HexMaskMode mode) noexcept;
HexMaskMode parse_hex_mask_mode(std::string_view name);

enum class Probe { KnnClass, KnnSuper };

struct TrainConfig {
  GenParams data;
  std::optional<std::string> data_path;

  std::vector<int> encoder_hidden{64};
  int repr_dim = 32;
  int proj_hidden = 32;
  int proj_dim = 16;

  LossKind loss = LossKind::SimCLR;
  double tau = 0.1;
  double alpha = 0.5;
  /// Unset: 5 for the VicReg variants, 1 otherwise.
  std::optional<double> hex_scale;
  HexOptions hex;
  HexMaskMode hex_mask = HexMaskMode::Threshold;
  ThresholdSchedule schedule;

  double barlow_lambda = 0.0051;
  double barlow_scale = 0.1;
  double vicreg_sim = 25.0;
  double vicreg_var = 25.0;
  double vicreg_cov = 1.0;

  double lr = 0.01;
  double momentum = 0.9;
  bool cosine_lr = false;
  int epochs = 200;
  int batch_size = 64;
  std::size_t queue_capacity = 1024;

  double aug_noise = 1.5;
  double aug_mask = 0.2;

  int eval_every = 10;
  int knn_k = 5;
  double heldout_fraction = 0.2;
  int rank_subsets = 20;
  int rank_subset_size = 100;

  std::uint64_t seed = 0;

  double effective_hex_scale() const;
  void validate() const;
};

struct Layer {
  Matrix weight;  ///< fan_in x fan_out
  Matrix bias;    ///< 1 x fan_out
};

/// Encoder f (tanh after every layer) and projector g (tanh hidden, linear output).
struct ModelParams {
  std::vector<Layer> encoder;
  std::vector<Layer> projector;

  std::size_t n_layers() const { return encoder.size() + projector.size(); }
  const Layer& layer(std::size_t i) const { return i < encoder.size() ? encoder[i] : projector[i - encoder.size()]; }
  Layer& layer(std::size_t i) { return i < encoder.size() ? encoder[i] : projector[i - encoder.size()]; }
  bool operator==(const ModelParams& o) const;
};

/// Encoder output, projector output and its row normalization for a batch of inputs.
struct Embeddings {
  Matrix representation;
  Matrix projection;
  Matrix z;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// One row of the metrics log. Diagnostic columns are NaN on epochs without evaluation.
struct MetricsRow {
  int epoch = 0;
  double loss = kMissing;
  double invariance = kMissing;
  double regularization = kMissing;
  double threshold = kMissing;
  double mean_H_size = kMissing;
  double clamp_events = 0.0;

  double rankme_super = kMissing;
  double rankme_random = kMissing;
  double mean_super = kMissing;
  double mean_regular = kMissing;
  double ratio_projection = kMissing;
  double ratio_representation = kMissing;
  double skew_super = kMissing;
  double skew_regular = kMissing;
  double knn_class = kMissing;
  double knn_super = kMissing;
  double eval_threshold = kMissing;
  double eval_mask_size = kMissing;
  double mask_precision = kMissing;
  double mask_recall = kMissing;

  bool evaluated() const { return !(rankme_super != rankme_super); }
};

struct TrainState {
  TrainConfig config;
  ModelParams params;
  ModelParams velocity;
  int epoch = 0;  ///< completed epochs
  CounterRng shuffle_rng;
  NNQueue queue;
  std::vector<MetricsRow> history;
};

namespace trainer {

ModelParams init_params(const TrainConfig& config, int input_dim, std::uint64_t seed);

TrainState init_state(const TrainConfig& config, int input_dim);

Embeddings embed(const ModelParams& params, const Matrix& x);

/// f, g and the configured loss on one batch. `params` holds the tape input for
/// every weight and bias in layer order (weight, bias, weight, ...).
struct BatchGraph {
  ad::Tape tape;
  std::vector<ad::Var> params;
  ad::Var loss{};
  std::optional<loss_graph::ContrastiveNodes> contrastive;
  HierarchyMask mask;
  double threshold = kMissing;
};

/// Everything about a batch that is frozen before differentiation.
struct BatchContext {
  Matrix x;                          ///< 2B stacked views
  std::vector<int> superclass;       ///< per row, for the supervised mask
  std::optional<Matrix> nn_positive; ///< NNCLR positives
};

/// Builds the graph for the two stacked views in `batch.x` (B anchors, then their B second views).
BatchGraph build_batch_graph(const TrainConfig& config, const ModelParams& params, const BatchContext& batch,
                             int epoch);

/// Threshold and mask for a batch of unit-norm projections, following the configured strategy.
std::pair<HierarchyMask, double> batch_mask(const TrainConfig& config, const Matrix& z,
                                            std::span<const int> superclass, int epoch);

/// Trains one epoch, evaluates if due, and appends the row to `state.history`.
MetricsRow train_epoch(TrainState& state, const HierarchicalDataset& dataset);

/// Sample order for the next epoch; advances `rng`.
std::vector<Index> shuffled_order(CounterRng& rng, Index n);

/// Deterministic held-out split: (train rows, query rows).
std::pair<std::vector<Index>, std::vector<Index>> heldout_split(Index n, double fraction, std::uint64_t seed);

/// Diagnostics on the clean dataset, written into `row`.
void evaluate_into(const TrainState& state, const HierarchicalDataset& dataset, MetricsRow& row);

double evaluate(const TrainState& state, const HierarchicalDataset& dataset, Probe probe, int k);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

struct RunOptions {
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::function<void(const MetricsRow&)> on_epoch;
};

/// Trains until `state.config.epochs`, appending to `state.history`.
void run(TrainState& state, const HierarchicalDataset& dataset, const RunOptions& options = {});

std::vector<std::string> metrics_columns();
std::vector<double> metrics_values(const MetricsRow& row);
MetricsRow metrics_from_values(std::span<const double> values);
/// Missing values are written as `nan`; 17 significant digits.
void write_metrics_csv(const std::vector<MetricsRow>& history, const std::filesystem::path& path);

/// Dataset named by the config: its CSV path if set, otherwise generated.
HierarchicalDataset load_dataset(const TrainConfig& config);

}  // namespace trainer
}  // namespace hexreg
