#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "hexreg/data.hpp"
#include "hexreg/trainer.hpp"
#include "support.hpp"

using namespace hexreg;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(LossKind loss = LossKind::SimCLRHex) {
  TrainConfig c;
  c.data.n_super = 2;
  c.data.classes_per_super = 2;
  c.data.samples_per_class = 8;
  c.data.input_dim = 6;
  c.encoder_hidden = {8};
  c.repr_dim = 5;
  c.proj_hidden = 4;
  c.proj_dim = 3;
  c.loss = loss;
  c.epochs = 4;
  c.schedule.total_epochs = 4;
  c.batch_size = 10;
  c.queue_capacity = 16;
  c.eval_every = 2;
  c.rank_subsets = 2;
  c.rank_subset_size = 5;
  c.knn_k = 3;
  c.seed = 7;
  c.validate();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hexreg_test_trainer";
  fs::create_directories(dir);
  return dir / name;
}

bool same_bits(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto va = trainer::metrics_values(a[i]), vb = trainer::metrics_values(b[i]);
    if (va.size() != vb.size() || std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

ErrorCode load_error(const fs::path& p) {
  try {
    trainer::load_checkpoint(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("corrupted checkpoint loaded");
  return ErrorCode::Usage;
}

}  // namespace

TEST_CASE("glorot init bounds and zero biases") {
  TrainConfig c;
  const ModelParams p = trainer::init_params(c, 32, 0);
  REQUIRE(p.encoder.size() == 2);
  REQUIRE(p.projector.size() == 2);
  CHECK(p.encoder[0].weight.rows() == 32);
  CHECK(p.encoder[0].weight.cols() == 64);
  CHECK(p.projector[1].weight.rows() == 32);
  CHECK(p.projector[1].weight.cols() == 16);
  for (std::size_t i = 0; i < p.n_layers(); ++i) {
    const Layer& l = p.layer(i);
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= bound);
    // Uniform on [-b, b] has variance b^2/3.
    const double var = l.weight.squaredNorm() / static_cast<double>(l.weight.size());
    CHECK(var == doctest::Approx(bound * bound / 3).epsilon(0.2));
    CHECK(l.bias.isZero(0.0));
  }
  CHECK(std::sqrt(6.0 / 48.0) == doctest::Approx(0.353553).epsilon(1e-6));
  CHECK(trainer::init_params(c, 32, 0) == p);
  CHECK_FALSE(trainer::init_params(c, 32, 1) == p);
}

TEST_CASE("embed produces unit-norm projections") {
  const TrainConfig c = small_config();
  const auto d = data::generate(c.data);
  const TrainState s = trainer::init_state(c, d.dim());
  const Embeddings e = trainer::embed(s.params, d.x);
  CHECK(e.representation.rows() == d.size());
  CHECK(e.representation.cols() == 5);
  CHECK(e.projection.cols() == 3);
  for (Index i = 0; i < e.z.rows(); ++i) CHECK(e.z.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves the parameters unchanged") {
  const TrainConfig c = small_config();
  const auto d = data::generate(c.data);
  TrainState s = trainer::init_state(c, d.dim());
  const ModelParams before = s.params;
  s.config.lr = 0.0;  // below the validated range on purpose
  trainer::train_epoch(s, d);
  CHECK(s.params == before);
  CHECK(s.epoch == 1);
}

TEST_CASE("one SGD step moves by -lr times the numeric gradient") {
  TrainConfig c = small_config(LossKind::SimCLR);
  c.data.samples_per_class = 3;
  c.batch_size = 12;  // the whole dataset in one batch
  c.validate();
  const auto d = data::generate(c.data);
  TrainState s = trainer::init_state(c, d.dim());
  const ModelParams before = s.params;

  // Rebuild the batch the trainer will see.
  CounterRng shuffle = s.shuffle_rng;
  const auto order = trainer::shuffled_order(shuffle, d.size());
  const Index b = d.size();
  trainer::BatchContext batch;
  batch.x.resize(2 * b, d.dim());
  batch.superclass.resize(static_cast<std::size_t>(2 * b));
  for (Index r = 0; r < b; ++r)
    for (std::uint64_t view = 0; view < 2; ++view) {
      const Index sample = order[static_cast<std::size_t>(r)];
      const auto seed =
          CounterRng::derive(c.seed, {20, 0, static_cast<std::uint64_t>(sample), view});
      batch.x.row(r + static_cast<Index>(view) * b) =
          data::augment(d.x.row(sample).transpose(), c.aug_noise, c.aug_mask, seed).transpose();
      batch.superclass[static_cast<std::size_t>(r + static_cast<Index>(view) * b)] =
          d.superclass_labels[static_cast<std::size_t>(sample)];
    }
  trainer::BatchGraph g = trainer::build_batch_graph(c, before, batch, 0);

  trainer::train_epoch(s, d);
  double worst = 0;
  for (std::size_t i = 0; i < before.n_layers(); ++i) {
    Matrix w = g.tape.value(g.params[2 * i]);
    const Matrix numeric = testing::numeric_gradient(w, [&] {
      g.tape.set_value(g.params[2 * i], w);
      return g.tape.forward();
    });
    g.tape.set_value(g.params[2 * i], w);
    const Matrix delta = s.params.layer(i).weight - before.layer(i).weight;
    const Matrix expected = -c.lr * numeric;
    for (Index k = 0; k < delta.size(); ++k)
      worst = std::max(worst, std::abs(delta.data()[k] - expected.data()[k]) /
                                  std::max(std::abs(expected.data()[k]), 1e-9));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("training is deterministic for every loss") {
  for (LossKind kind : {LossKind::SimCLR, LossKind::SimCLRHex, LossKind::NNCLR, LossKind::NNCLRHex,
                        LossKind::Barlow, LossKind::BarlowHex, LossKind::VicReg, LossKind::VicRegHex}) {
    CAPTURE(to_string(kind));
    TrainConfig c = small_config(kind);
    c.epochs = 2;
    const auto d = data::generate(c.data);
    TrainState a = trainer::init_state(c, d.dim());
    TrainState b = trainer::init_state(c, d.dim());
    trainer::run(a, d);
    trainer::run(b, d);
    CHECK(a.params == b.params);
    CHECK(same_bits(a.history, b.history));
    REQUIRE(a.history.size() == 2);
    CHECK(a.history[0].epoch == 1);
    CHECK_FALSE(a.history[0].evaluated());
    CHECK(a.history[1].evaluated());
    CHECK(std::isfinite(a.history[1].loss));
    CHECK(a.history[1].knn_class >= 0.0);
    CHECK(uses_queue(kind) == (a.queue.size() > 0));
  }
}

TEST_CASE("checkpoint resume is bitwise identical") {
  for (LossKind kind : {LossKind::SimCLRHex, LossKind::NNCLRHex}) {
    const TrainConfig c = small_config(kind);
    const auto d = data::generate(c.data);
    // The uninterrupted run writes checkpoints; a second run stops where the first one saved.
    trainer::RunOptions opts;
    opts.checkpoint_every = 2;
    opts.checkpoint_dir = scratch(std::string(to_string(kind)));
    fs::create_directories(opts.checkpoint_dir);
    TrainState straight = trainer::init_state(c, d.dim());
    trainer::run(straight, d, opts);

    TrainState first = trainer::init_state(c, d.dim());
    trainer::train_epoch(first, d);
    trainer::train_epoch(first, d);
    TrainState resumed = trainer::load_checkpoint(opts.checkpoint_dir / "checkpoint_2.bin");
    CHECK(resumed.config.epochs == c.epochs);
    CHECK(resumed.params == first.params);
    CHECK(resumed.epoch == 2);
    CHECK(resumed.shuffle_rng.key() == first.shuffle_rng.key());
    CHECK(resumed.shuffle_rng.counter() == first.shuffle_rng.counter());
    CHECK(resumed.queue.size() == first.queue.size());
    CHECK(same_bits(resumed.history, first.history));
    CounterRng r1 = resumed.shuffle_rng, r2 = first.shuffle_rng;
    CHECK(trainer::shuffled_order(r1, d.size()) == trainer::shuffled_order(r2, d.size()));

    trainer::run(resumed, d);
    CHECK(resumed.params == straight.params);
    CHECK(resumed.velocity == straight.velocity);
    CHECK(same_bits(resumed.history, straight.history));
  }
}

TEST_CASE("corrupted checkpoints are rejected") {
  const TrainConfig c = small_config();
  const TrainState s = trainer::init_state(c, 6);
  const fs::path good = scratch("good.bin");
  trainer::save_checkpoint(s, good);
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [](const fs::path& p, const std::string& b) {
    std::ofstream out(p, std::ios::binary);
    out << b;
  };
  const fs::path bad = scratch("bad.bin");
  write(bad, bytes.substr(0, bytes.size() - 9));
  CHECK(load_error(bad) == ErrorCode::IoError);
  write(bad, bytes + "x");
  CHECK(load_error(bad) == ErrorCode::IoError);
  std::string magic = bytes;
  magic[0] = 'X';
  write(bad, magic);
  CHECK(load_error(bad) == ErrorCode::VersionMismatch);
  std::string version = bytes;
  version[8] = 9;
  write(bad, version);
  CHECK(load_error(bad) == ErrorCode::VersionMismatch);
  CHECK(load_error(scratch("missing.bin")) == ErrorCode::IoError);
}

TEST_CASE("metrics rows round trip through values") {
  MetricsRow r;
  r.epoch = 3;
  r.loss = 1.25;
  r.rankme_super = 4.5;
  const auto v = trainer::metrics_values(r);
  CHECK(v.size() == trainer::metrics_columns().size());
  CHECK(trainer::metrics_columns().front() == "epoch");
  const MetricsRow back = trainer::metrics_from_values(v);
  CHECK(same_bits({back}, {r}));
}

TEST_CASE("heldout split is a deterministic partition") {
  const auto [train, query] = trainer::heldout_split(50, 0.2, 3);
  CHECK(query.size() == 10);
  CHECK(train.size() == 40);
  std::vector<Index> all = train;
  all.insert(all.end(), query.begin(), query.end());
  std::sort(all.begin(), all.end());
  for (Index i = 0; i < 50; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  CHECK(trainer::heldout_split(50, 0.2, 3).second == query);
}

TEST_CASE("evaluation probes") {
  const TrainConfig c = small_config();
  auto d = data::generate(c.data);
  const TrainState s = trainer::init_state(c, d.dim());
  CHECK_THROWS_AS(trainer::evaluate(s, d, Probe::KnnClass, 1000), Error);

  // Labels independent of the inputs: an untrained encoder is at chance.
  TrainConfig big = c;
  big.data.samples_per_class = 200;
  auto noise = data::generate(big.data);
  CounterRng rng(81);
  for (auto& l : noise.class_labels) l = static_cast<int>(rng.below(4));
  const TrainState u = trainer::init_state(big, noise.dim());
  CHECK(std::abs(trainer::evaluate(u, noise, Probe::KnnClass, 5) - 0.25) <= 0.06);
}

TEST_CASE("invalid configs are rejected") {
  auto code = [](TrainConfig c) {
    try {
      c.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Usage;
  };
  TrainConfig c = small_config();
  c.tau = 0;
  CHECK(code(c) == ErrorCode::BadTemperature);
  c = small_config();
  c.alpha = -0.1;
  CHECK(code(c) == ErrorCode::BadAlpha);
  c = small_config();
  c.proj_dim = 0;
  CHECK(code(c) == ErrorCode::BadDims);
  c = small_config();
  c.knn_k = 0;
  CHECK(code(c) == ErrorCode::BadK);
  c = small_config();
  c.lr = 0;
  CHECK(code(c) == ErrorCode::BadConfig);

  const TrainState s = trainer::init_state(small_config(), 6);
  TrainState wrong = s;
  GenParams p = small_config().data;
  p.input_dim = 7;
  CHECK_THROWS_AS(trainer::train_epoch(wrong, data::generate(p)), Error);
}
