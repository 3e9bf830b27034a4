// hexreg: data generation, training, evaluation, diagnostics and schedule tables.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hexreg/config.hpp"
#include "hexreg/trainer.hpp"

namespace fs = std::filesystem;
using namespace hexreg;

namespace {

TrainConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    TrainConfig c;
    c.schedule.total_epochs = c.epochs;
    return c;
  }
  return config::load(path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  const TrainConfig c = config_or_default(config_path);
  const HierarchicalDataset d = data::generate(c.data);
  data::save_csv(d, out);
  std::printf("rows=%lld classes=%d superclasses=%d dim=%lld\n", static_cast<long long>(d.size()), c.data.n_classes(),
              c.data.n_super, static_cast<long long>(d.dim()));
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> loss;
  int checkpoint_every = 0;
  std::string resume;
  bool quiet = false;
};

// One training run into `dir`; returns its summary.
nlohmann::json train_one(TrainConfig cfg, const fs::path& dir, const TrainArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  TrainState state;
  if (!args.resume.empty()) {
    state = trainer::load_checkpoint(args.resume);
    if (args.epochs) {
      state.config.epochs = *args.epochs;
      state.config.validate();
    }
  } else {
    const HierarchicalDataset probe = trainer::load_dataset(cfg);
    state = trainer::init_state(cfg, static_cast<int>(probe.dim()));
  }
  const HierarchicalDataset dataset = trainer::load_dataset(state.config);

  trainer::RunOptions opts;
  opts.checkpoint_every = args.checkpoint_every;
  opts.checkpoint_dir = dir;
  if (!args.quiet)
    opts.on_epoch = [](const MetricsRow& r) {
      if (r.evaluated())
        std::fprintf(stderr, "epoch %d loss %.5f rankme_super %.3f rankme_random %.3f knn_super %.3f\n", r.epoch,
                     r.loss, r.rankme_super, r.rankme_random, r.knn_super);
    };
  trainer::run(state, dataset, opts);
  trainer::write_metrics_csv(state.history, dir / "metrics.csv");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MetricsRow last = state.history.empty() ? MetricsRow{} : state.history.back();
  nlohmann::json summary{{"config_hash", config::hash(state.config)},
                         {"seed", state.config.seed},
                         {"loss", to_string(state.config.loss)},
                         {"epochs", state.epoch},
                         {"knn_class", number_or_null(last.knn_class)},
                         {"knn_super", number_or_null(last.knn_super)},
                         {"rankme_super", number_or_null(last.rankme_super)},
                         {"rankme_random", number_or_null(last.rankme_random)},
                         {"wall_time_s", wall},
                         {"metrics_csv", (dir / "metrics.csv").string()}};
  write_json(summary, dir / "summary.json");
  write_json(config::to_json(state.config), dir / "config.json");
  return summary;
}

int cmd_train(const TrainArgs& args, const std::string& seeds, const std::string& losses) {
  TrainConfig base = config_or_default(args.config);
  if (args.epochs) {
    base.epochs = *args.epochs;
    base.schedule.total_epochs = *args.epochs;
  }
  if (args.seed) base.seed = *args.seed;
  if (args.loss) base.loss = parse_loss_kind(*args.loss);
  base.validate();

  if (seeds.empty() && losses.empty()) {
    const nlohmann::json s = train_one(base, args.out, args);
    std::cout << s.dump() << '\n';
    return 0;
  }
  require(args.resume.empty(), ErrorCode::Usage, "--resume cannot be combined with a run matrix");

  struct Cell {
    TrainConfig cfg;
    fs::path dir;
  };
  std::vector<Cell> cells;
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split_list(seeds)) seed_list.push_back(std::stoull(s));
  if (seed_list.empty()) seed_list.push_back(base.seed);
  std::vector<LossKind> loss_list;
  for (const auto& l : split_list(losses)) loss_list.push_back(parse_loss_kind(l));
  if (loss_list.empty()) loss_list.push_back(base.loss);
  for (LossKind l : loss_list)
    for (std::uint64_t s : seed_list) {
      Cell c{base, fs::path(args.out) / (std::string(to_string(l)) + "_seed" + std::to_string(s))};
      c.cfg.loss = l;
      c.cfg.seed = s;
      c.cfg.validate();
      cells.push_back(std::move(c));
    }

  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HEXREG_THREADS")) {
    const int cap = std::atoi(env);
    require(cap >= 1, ErrorCode::Usage, "HEXREG_THREADS must be a positive integer");
    threads = std::min(threads, static_cast<unsigned>(cap));
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cells.size()));

  std::atomic<std::size_t> next{0};
  std::vector<nlohmann::json> summaries(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  TrainArgs cell_args = args;
  cell_args.quiet = true;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        summaries[i] = train_one(cells[i].cfg, cells[i].dir, cell_args);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    summaries[i]["dir"] = cells[i].dir.string();
    index.push_back(summaries[i]);
  }
  write_json(index, fs::path(args.out) / "matrix.json");
  std::cout << index.dump() << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& probe, int k) {
  const TrainState state = trainer::load_checkpoint(checkpoint);
  const HierarchicalDataset dataset = trainer::load_dataset(state.config);
  const int kk = k > 0 ? k : state.config.knn_k;
  nlohmann::json out{{"epoch", state.epoch}, {"k", kk}};
  if (probe.empty() || probe == "knn_class") out["knn_class"] = trainer::evaluate(state, dataset, Probe::KnnClass, kk);
  if (probe.empty() || probe == "knn_super") out["knn_super"] = trainer::evaluate(state, dataset, Probe::KnnSuper, kk);
  require(out.size() > 2, ErrorCode::Usage, "unknown probe '" + probe + "'");
  std::cout << out.dump() << '\n';
  return 0;
}

struct DiagnoseArgs {
  std::string embeddings;
  std::string out;
  int subsets = 20;
  int subset_size = 100;
  int knn_k = 5;
  double heldout = 0.2;
  std::uint64_t seed = 0;
  bool allow_replacement = false;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const HierarchicalDataset d = data::load_csv(a.embeddings);
  std::vector<std::pair<std::string, double>> rows;

  diagnostics::SubsetOptions opts;
  opts.n_subsets = a.subsets;
  opts.subset_size = a.subset_size;
  opts.seed = a.seed;
  opts.allow_replacement = a.allow_replacement;
  const RankCurvePoint rank = diagnostics::subset_rank_curve(d.x, d.superclass_labels, opts);
  rows.emplace_back("rankme_super", rank.mean_rankme_superclass);
  rows.emplace_back("rankme_random", rank.mean_rankme_random);
  rows.emplace_back("n_subsets", rank.n_subsets);
  rows.emplace_back("subset_size", rank.subset_size);

  const SimilarityMatrix sims = linalg::cosine_sim_matrix(linalg::l2_normalize_rows(d.x));
  const DistributionStats stats = diagnostics::distribution_stats(sims, d.superclass_labels,
                                                                  hierarchy::no_positives(d.size()),
                                                                  EmbeddingSpace::Representation);
  auto opt = [](const std::optional<double>& v) { return v ? *v : kMissing; };
  rows.emplace_back("mean_super", opt(stats.mean_super));
  rows.emplace_back("mean_regular", opt(stats.mean_regular));
  rows.emplace_back("skew_super", opt(stats.skew_super));
  rows.emplace_back("skew_regular", opt(stats.skew_regular));
  rows.emplace_back("ratio", opt(stats.ratio));
  rows.emplace_back("n_super_pairs", static_cast<double>(stats.n_super));
  rows.emplace_back("n_regular_pairs", static_cast<double>(stats.n_regular));

  const auto [train, query] = trainer::heldout_split(d.size(), a.heldout, a.seed);
  for (const bool super : {false, true}) {
    const auto& labels = super ? d.superclass_labels : d.class_labels;
    Matrix tr(static_cast<Index>(train.size()), d.dim()), qr(static_cast<Index>(query.size()), d.dim());
    std::vector<int> tl, ql;
    for (std::size_t i = 0; i < train.size(); ++i) {
      tr.row(static_cast<Index>(i)) = d.x.row(train[i]);
      tl.push_back(labels[static_cast<std::size_t>(train[i])]);
    }
    for (std::size_t i = 0; i < query.size(); ++i) {
      qr.row(static_cast<Index>(i)) = d.x.row(query[i]);
      ql.push_back(labels[static_cast<std::size_t>(query[i])]);
    }
    rows.emplace_back(super ? "knn_super" : "knn_class", diagnostics::knn_accuracy(tr, tl, qr, ql, a.knn_k));
  }

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    require(file.good(), ErrorCode::IoError, "cannot open " + a.out + " for writing");
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "metric,value\n";
  char buf[32];
  for (const auto& [name, v] : rows) {
    if (std::isnan(v)) {
      out << name << ",nan\n";
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << name << ',' << buf << '\n';
    }
  }
  return 0;
}

int cmd_schedule(const std::string& config_path, std::optional<int> epochs) {
  TrainConfig c = config_or_default(config_path);
  if (epochs) c.schedule.total_epochs = *epochs;
  const int n = epochs.value_or(c.schedule.total_epochs);
  if (c.schedule.data_dependent()) {
    std::printf("adaptive schedule is data-dependent: epsilon = batch mean + %g * std of negative similarities\n",
                c.schedule.sigma_multiplier);
    return 0;
  }
  std::printf("epoch,epsilon\n");
  for (int e = 0; e < n; ++e) std::printf("%d,%.17g\n", e, schedule::manual_threshold(c.schedule, e));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical contrastive regularization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic hierarchical dataset CSV");
  gen->add_option("-c,--config", config_path, "Config JSON");
  gen->add_option("-o,--out", out_path, "Output CSV")->required();

  TrainArgs targs;
  std::string seeds, losses;
  auto* train = app.add_subcommand("train", "Train one run, or a seeds x losses matrix");
  train->add_option("-c,--config", targs.config, "Config JSON");
  train->add_option("-o,--out", targs.out, "Output directory")->required();
  train->add_option("--seed", targs.seed, "Override the config seed");
  train->add_option("--epochs", targs.epochs, "Override the epoch count");
  train->add_option("--loss", targs.loss, "Override the loss kind");
  train->add_option("--checkpoint-every", targs.checkpoint_every, "Write a checkpoint every E epochs");
  train->add_option("--resume", targs.resume, "Continue from a checkpoint");
  train->add_option("--seeds", seeds, "Run matrix: comma-separated seeds");
  train->add_option("--losses", losses, "Run matrix: comma-separated loss kinds");
  train->add_flag("-q,--quiet", targs.quiet, "No per-epoch progress");

  std::string checkpoint, probe;
  int eval_k = 0;
  auto* eval = app.add_subcommand("eval", "k-NN probes of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--probe", probe, "knn_class or knn_super (default both)");
  eval->add_option("-k,--k", eval_k, "Neighbours (default from config)");

  DiagnoseArgs dargs;
  auto* diag = app.add_subcommand("diagnose", "Collapse and hierarchy diagnostics of an embedding CSV");
  diag->add_option("embeddings", dargs.embeddings, "Embedding CSV (dataset schema)")->required();
  diag->add_option("-o,--out", dargs.out, "Output CSV (default stdout)");
  diag->add_option("--rankme-subsets", dargs.subsets);
  diag->add_option("--subset-size", dargs.subset_size);
  diag->add_option("--knn-k", dargs.knn_k);
  diag->add_option("--heldout", dargs.heldout);
  diag->add_option("--seed", dargs.seed);
  diag->add_flag("--allow-replacement", dargs.allow_replacement);

  std::optional<int> sched_epochs;
  auto* sched = app.add_subcommand("schedule", "Print the threshold schedule as CSV");
  sched->add_option("-c,--config", config_path, "Config JSON");
  sched->add_option("--epochs", sched_epochs, "Rows to print (default schedule.total_epochs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(config_path, out_path);
    if (*train) return cmd_train(targs, seeds, losses);
    if (*eval) return cmd_eval(checkpoint, probe, eval_k);
    if (*diag) return cmd_diagnose(dargs);
    if (*sched) return cmd_schedule(config_path, sched_epochs);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return exit_code(e.code());
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error [Usage]: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
