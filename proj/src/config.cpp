#include "hexreg/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace hexreg::config {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), ErrorCode::BadConfig, where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        require(it->is_boolean(), ErrorCode::BadConfig, where(key) + " must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        require(it->is_number_integer(), ErrorCode::BadConfig, where(key) + " must be an integer");
        if constexpr (std::is_unsigned_v<T>)
          require(it->is_number_unsigned() || it->template get<std::int64_t>() >= 0, ErrorCode::BadConfig,
                  where(key) + " must be non-negative");
      } else if constexpr (std::is_floating_point_v<T>) {
        require(it->is_number(), ErrorCode::BadConfig, where(key) + " must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        require(it->is_string(), ErrorCode::BadConfig, where(key) + " must be a string");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::BadConfig, where(key) + ": " + e.what());
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      seen_.insert(key);
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    return Section(*it, where(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      require(seen_.count(key) > 0, ErrorCode::BadConfig, "unknown key " + where(key.c_str()));
  }

  std::string where(const char* key = nullptr) const {
    std::string s = path_.empty() ? std::string("config") : path_;
    if (key) s += std::string(".") + key;
    return s;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace

TrainConfig from_json(const json& j) {
  TrainConfig c;
  Section root(j, "");
  std::optional<int> total_epochs;

  if (auto data = root.child("data")) {
    data->get("path", c.data_path);
    data->get("n_super", c.data.n_super);
    data->get("classes_per_super", c.data.classes_per_super);
    data->get("samples_per_class", c.data.samples_per_class);
    data->get("input_dim", c.data.input_dim);
    data->get("sigma_super", c.data.sigma_super);
    data->get("sigma_class", c.data.sigma_class);
    data->get("sigma_sample", c.data.sigma_sample);
    data->get("seed", c.data.seed);
    data->finish();
  }
  if (auto model = root.child("model")) {
    if (const json* hidden = model->raw("encoder_hidden")) {
      require(hidden->is_array(), ErrorCode::BadConfig, "config.model.encoder_hidden must be an array");
      c.encoder_hidden.clear();
      for (const auto& h : *hidden) {
        require(h.is_number_integer(), ErrorCode::BadConfig, "config.model.encoder_hidden entries must be integers");
        c.encoder_hidden.push_back(h.get<int>());
      }
    }
    model->get("repr_dim", c.repr_dim);
    model->get("proj_hidden", c.proj_hidden);
    model->get("proj_dim", c.proj_dim);
    model->finish();
  }
  if (auto loss = root.child("loss")) {
    std::string kind(to_string(c.loss));
    loss->get("kind", kind);
    c.loss = parse_loss_kind(kind);
    loss->get("tau", c.tau);
    loss->get("alpha", c.alpha);
    loss->get("hex_scale", c.hex_scale);
    std::string sign(to_string(c.hex.sign));
    loss->get("qhi_sign", sign);
    c.hex.sign = parse_qhi_sign(sign);
    loss->get("qhi_tau", c.hex.qhi_tau);
    loss->get("qhi_batch_size", c.hex.qhi_batch_size);
    loss->get("eps_den", c.hex.eps_den);
    std::string mask(to_string(c.hex_mask));
    loss->get("hex_mask", mask);
    c.hex_mask = parse_hex_mask_mode(mask);
    loss->get("barlow_lambda", c.barlow_lambda);
    loss->get("barlow_scale", c.barlow_scale);
    loss->get("vicreg_sim", c.vicreg_sim);
    loss->get("vicreg_var", c.vicreg_var);
    loss->get("vicreg_cov", c.vicreg_cov);
    loss->finish();
  }
  if (auto sched = root.child("schedule")) {
    std::string kind(to_string(c.schedule.kind));
    sched->get("kind", kind);
    c.schedule.kind = parse_schedule_kind(kind);
    sched->get("start", c.schedule.start);
    sched->get("floor", c.schedule.floor);
    sched->get("step_down", c.schedule.step_down);
    sched->get("period_epochs", c.schedule.period_epochs);
    sched->get("total_epochs", total_epochs);
    sched->get("sigma_multiplier", c.schedule.sigma_multiplier);
    sched->finish();
  }
  if (auto opt = root.child("optimizer")) {
    opt->get("lr", c.lr);
    opt->get("momentum", c.momentum);
    opt->get("cosine_lr", c.cosine_lr);
    opt->finish();
  }
  if (auto aug = root.child("augment")) {
    aug->get("noise", c.aug_noise);
    aug->get("mask_prob", c.aug_mask);
    aug->finish();
  }
  if (auto eval = root.child("eval")) {
    eval->get("every", c.eval_every);
    eval->get("knn_k", c.knn_k);
    eval->get("heldout_fraction", c.heldout_fraction);
    eval->get("rank_subsets", c.rank_subsets);
    eval->get("rank_subset_size", c.rank_subset_size);
    eval->finish();
  }
  root.get("epochs", c.epochs);
  root.get("batch_size", c.batch_size);
  root.get("queue_capacity", c.queue_capacity);
  root.get("seed", c.seed);
  root.finish();

  c.schedule.total_epochs = total_epochs.value_or(c.epochs);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  json j;
  j["data"] = {{"n_super", c.data.n_super},
               {"classes_per_super", c.data.classes_per_super},
               {"samples_per_class", c.data.samples_per_class},
               {"input_dim", c.data.input_dim},
               {"sigma_super", c.data.sigma_super},
               {"sigma_class", c.data.sigma_class},
               {"sigma_sample", c.data.sigma_sample},
               {"seed", c.data.seed}};
  if (c.data_path) j["data"]["path"] = *c.data_path;
  j["model"] = {{"encoder_hidden", c.encoder_hidden},
                {"repr_dim", c.repr_dim},
                {"proj_hidden", c.proj_hidden},
                {"proj_dim", c.proj_dim}};
  j["loss"] = {{"kind", to_string(c.loss)},
               {"tau", c.tau},
               {"alpha", c.alpha},
               {"hex_scale", c.effective_hex_scale()},
               {"qhi_sign", to_string(c.hex.sign)},
               {"qhi_tau", c.hex.qhi_tau},
               {"eps_den", c.hex.eps_den},
               {"hex_mask", to_string(c.hex_mask)},
               {"barlow_lambda", c.barlow_lambda},
               {"barlow_scale", c.barlow_scale},
               {"vicreg_sim", c.vicreg_sim},
               {"vicreg_var", c.vicreg_var},
               {"vicreg_cov", c.vicreg_cov}};
  if (c.hex.qhi_batch_size) j["loss"]["qhi_batch_size"] = *c.hex.qhi_batch_size;
  j["schedule"] = {{"kind", to_string(c.schedule.kind)},
                   {"start", c.schedule.start},
                   {"floor", c.schedule.floor},
                   {"step_down", c.schedule.step_down},
                   {"period_epochs", c.schedule.period_epochs},
                   {"total_epochs", c.schedule.total_epochs},
                   {"sigma_multiplier", c.schedule.sigma_multiplier}};
  j["optimizer"] = {{"lr", c.lr}, {"momentum", c.momentum}, {"cosine_lr", c.cosine_lr}};
  j["augment"] = {{"noise", c.aug_noise}, {"mask_prob", c.aug_mask}};
  j["eval"] = {{"every", c.eval_every},
               {"knn_k", c.knn_k},
               {"heldout_fraction", c.heldout_fraction},
               {"rank_subsets", c.rank_subsets},
               {"rank_subset_size", c.rank_subset_size}};
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["queue_capacity"] = c.queue_capacity;
  j["seed"] = c.seed;
  return j;
}

TrainConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::BadConfig, path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string hash(const TrainConfig& c) {
  // nlohmann objects are key-sorted, so the dump is canonical.
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hexreg::config
