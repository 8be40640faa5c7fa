#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "semisfl/architecture.hpp"
#include "semisfl/data.hpp"

namespace semisfl {

/// Every problem found while reading a configuration, each prefixed with its field path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::ostringstream os;
    os << "invalid configuration:";
    for (const auto& s : v) os << "\n  " << s;
    return os.str();
  }
  std::vector<std::string> issues_;
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "idx"
  std::size_t classes = 4;
  std::size_t dim = 16;
  double separation = 3.0;
  std::size_t train_per_class = 1050;
  std::size_t test_per_class = 500;
  std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
  std::size_t labeled = 200;
  double alpha = 0.3;
  std::size_t clients = 10;
  std::uint64_t seed = 1;
};

struct TrainingConfig {
  int rounds = 60;
  int ks_initial = 50;
  int ku = 20;
  std::size_t clients_per_round = 10;
  std::size_t labeled_batch = 32;
  std::size_t unlabeled_batch = 32;
  double lr = 0.02;
  double lr_floor = 0.0;
  double momentum = 0.9;
  double ema_decay = 0.99;
  double tau = 0.95;
  double kappa = 0.1;
  std::size_t projection_dim = 32;
  std::size_t hidden = 32;  // width of the built-in MLP
  std::size_t sup_capacity = 512;
  std::size_t unsup_capacity = 2048;
  std::size_t eviction_ratio = 4;
  double rho1 = 0.01;
  double rho2 = 0.05;
  int milestone_period = 10;
  int k_min = 1;
  int k_max = 0;  // 0 means 16 * ks_initial
  double loss_ema = 0.3;

  int effective_k_max() const { return k_max > 0 ? k_max : 16 * ks_initial; }
};

struct SimulationConfig {
  double compute_mean_min = 0.02;  // seconds per client iteration; client means spread linearly over this range
  double compute_mean_max = 0.20;
  double compute_std_ratio = 0.2;
  double uplink_min_mbps = 2.0;
  double uplink_max_mbps = 8.0;
  double downlink_min_mbps = 10.0;
  double downlink_max_mbps = 20.0;
  double server_sup_seconds = 0.005;   // per supervised iteration
  double server_semi_seconds = 0.002;  // per client batch in a semi-supervised iteration
  std::size_t wire_bytes = 4;
  std::size_t header_bytes = 64;
  bool client_streams_by_id = true;  // false: every client draws from the same sampling stream
};

struct AblationConfig {
  bool clustering_regularization = true;
  bool adaptive_frequency = true;
  bool supervised_contrastive = true;
  bool supervised_only = false;
};

struct ExperimentConfig {
  nlohmann::json architecture = "mlp";  // built-in name, path to a descriptor JSON, or an inline descriptor
  DataConfig data;
  TrainingConfig training;
  SimulationConfig simulation;
  AblationConfig ablation;
  AugmentationConfig augmentation;
};

namespace detail {

class Reader {
 public:
  explicit Reader(std::vector<std::string>& issues) : issues_(issues) {}

  template <class T>
  void field(const nlohmann::json& obj, const std::string& path, const char* key, T& out) {
    seen_.insert(path + "." + key);
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const std::exception&) {
      issues_.push_back(path + "." + key + ": wrong type");
    }
  }

  void unknown_keys(const nlohmann::json& obj, const std::string& path) {
    if (!obj.is_object()) {
      issues_.push_back(path + ": expected an object");
      return;
    }
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!seen_.count(path + "." + it.key())) issues_.push_back(path + "." + it.key() + ": unknown key");
  }

  void mark(const std::string& full) { seen_.insert(full); }

 private:
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Collects every constraint violation instead of stopping at the first.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> e;
  auto req = [&](bool ok, const std::string& msg) {
    if (!ok) e.push_back(msg);
  };
  const auto& d = c.data;
  req(d.source == "synthetic" || d.source == "idx", "data.source: must be \"synthetic\" or \"idx\"");
  if (d.source == "synthetic") {
    req(d.classes >= 2, "data.classes: must be >= 2");
    req(d.dim >= 1, "data.dim: must be >= 1");
    req(d.separation >= 0.0, "data.separation: must be >= 0");
    req(d.train_per_class >= 1, "data.train_per_class: must be >= 1");
    req(d.test_per_class >= 1, "data.test_per_class: must be >= 1");
    req(d.labeled < d.classes * d.train_per_class, "data.labeled: must be smaller than the training set");
  } else {
    req(!d.idx_train_images.empty() && !d.idx_train_labels.empty() && !d.idx_test_images.empty() &&
            !d.idx_test_labels.empty(),
        "data.idx_*: all four IDX paths are required");
  }
  req(d.labeled >= d.classes, "data.labeled: must be >= data.classes");
  req(d.alpha > 0.0, "data.alpha: must be > 0");
  req(d.clients >= 1, "data.clients: must be >= 1");

  const auto& t = c.training;
  req(t.rounds >= 1, "training.rounds: must be >= 1");
  req(t.ks_initial >= 1, "training.ks_initial: must be >= 1");
  req(t.ku >= 1, "training.ku: must be >= 1");
  req(t.clients_per_round >= 1 && t.clients_per_round <= d.clients,
      "training.clients_per_round: must lie in [1, data.clients]");
  req(t.labeled_batch >= 1, "training.labeled_batch: must be >= 1");
  req(t.unlabeled_batch >= 1, "training.unlabeled_batch: must be >= 1");
  req(t.lr > 0.0, "training.lr: must be > 0");
  req(t.lr_floor >= 0.0 && t.lr_floor <= t.lr, "training.lr_floor: must lie in [0, lr]");
  req(t.momentum >= 0.0 && t.momentum < 1.0, "training.momentum: must lie in [0, 1)");
  req(t.ema_decay > 0.0 && t.ema_decay <= 1.0, "training.ema_decay: must lie in (0, 1]");
  req(t.tau > 0.0 && t.tau < 1.0, "training.tau: must lie in (0, 1)");
  req(t.kappa > 0.0, "training.kappa: must be > 0");
  req(t.projection_dim >= 1, "training.projection_dim: must be >= 1");
  req(t.hidden >= 1, "training.hidden: must be >= 1");
  req(t.eviction_ratio >= 1, "training.eviction_ratio: must be >= 1");
  req(t.sup_capacity + t.unsup_capacity >= 1, "training.sup_capacity: queue capacity must be >= 1");
  req(t.rho1 > 0.0 && t.rho1 < t.rho2, "training.rho1: need 0 < rho1 < rho2");
  req(t.milestone_period >= 1, "training.milestone_period: must be >= 1");
  req(t.k_min >= 1, "training.k_min: must be >= 1");
  req(t.k_min <= t.ks_initial && t.ks_initial <= t.effective_k_max(),
      "training.k_max: need k_min <= ks_initial <= k_max");
  req(t.loss_ema > 0.0 && t.loss_ema <= 1.0, "training.loss_ema: must lie in (0, 1]");

  const auto& s = c.simulation;
  req(s.compute_mean_min > 0.0 && s.compute_mean_min <= s.compute_mean_max,
      "simulation.compute_mean_min: need 0 < min <= max");
  req(s.compute_std_ratio >= 0.0, "simulation.compute_std_ratio: must be >= 0");
  req(s.uplink_min_mbps > 0.0 && s.uplink_min_mbps <= s.uplink_max_mbps,
      "simulation.uplink_min_mbps: need 0 < min <= max");
  req(s.downlink_min_mbps > 0.0 && s.downlink_min_mbps <= s.downlink_max_mbps,
      "simulation.downlink_min_mbps: need 0 < min <= max");
  req(s.server_sup_seconds >= 0.0 && s.server_semi_seconds >= 0.0, "simulation.server_*_seconds: must be >= 0");
  req(s.wire_bytes >= 1, "simulation.wire_bytes: must be >= 1");

  const auto& a = c.augmentation;
  req(a.weak_noise >= 0.0 && a.strong_noise > a.weak_noise, "augmentation.strong_noise: need 0 <= weak < strong");
  req(a.flip_prob >= 0.0 && a.flip_prob <= 1.0, "augmentation.flip_prob: must lie in [0, 1]");
  req(a.dropout >= 0.0 && a.dropout < 1.0, "augmentation.dropout: must lie in [0, 1)");

  if (c.architecture.is_object()) {
    try {
      descriptor_from_json(c.architecture);
    } catch (const std::exception& ex) {
      e.push_back(std::string("architecture: ") + ex.what());
    }
  } else if (!c.architecture.is_string()) {
    e.push_back("architecture: expected a name, a path or an object");
  }
  return e;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  std::vector<std::string> issues;
  detail::Reader r(issues);
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError({"<root>: expected an object"});
  for (const char* k : {"architecture", "data", "training", "simulation", "ablation", "augmentation"})
    r.mark(std::string("<root>.") + k);
  r.unknown_keys(j, "<root>");
  if (j.contains("architecture")) c.architecture = j.at("architecture");

  if (j.contains("data")) {
    const auto& o = j.at("data");
    auto& d = c.data;
    r.field(o, "data", "source", d.source);
    r.field(o, "data", "classes", d.classes);
    r.field(o, "data", "dim", d.dim);
    r.field(o, "data", "separation", d.separation);
    r.field(o, "data", "train_per_class", d.train_per_class);
    r.field(o, "data", "test_per_class", d.test_per_class);
    r.field(o, "data", "idx_train_images", d.idx_train_images);
    r.field(o, "data", "idx_train_labels", d.idx_train_labels);
    r.field(o, "data", "idx_test_images", d.idx_test_images);
    r.field(o, "data", "idx_test_labels", d.idx_test_labels);
    r.field(o, "data", "labeled", d.labeled);
    r.field(o, "data", "alpha", d.alpha);
    r.field(o, "data", "clients", d.clients);
    r.field(o, "data", "seed", d.seed);
    r.unknown_keys(o, "data");
  }
  if (j.contains("training")) {
    const auto& o = j.at("training");
    auto& t = c.training;
    r.field(o, "training", "rounds", t.rounds);
    r.field(o, "training", "ks_initial", t.ks_initial);
    r.field(o, "training", "ku", t.ku);
    r.field(o, "training", "clients_per_round", t.clients_per_round);
    r.field(o, "training", "labeled_batch", t.labeled_batch);
    r.field(o, "training", "unlabeled_batch", t.unlabeled_batch);
    r.field(o, "training", "lr", t.lr);
    r.field(o, "training", "lr_floor", t.lr_floor);
    r.field(o, "training", "momentum", t.momentum);
    r.field(o, "training", "ema_decay", t.ema_decay);
    r.field(o, "training", "tau", t.tau);
    r.field(o, "training", "kappa", t.kappa);
    r.field(o, "training", "projection_dim", t.projection_dim);
    r.field(o, "training", "hidden", t.hidden);
    r.field(o, "training", "sup_capacity", t.sup_capacity);
    r.field(o, "training", "unsup_capacity", t.unsup_capacity);
    r.field(o, "training", "eviction_ratio", t.eviction_ratio);
    r.field(o, "training", "rho1", t.rho1);
    r.field(o, "training", "rho2", t.rho2);
    r.field(o, "training", "milestone_period", t.milestone_period);
    r.field(o, "training", "k_min", t.k_min);
    r.field(o, "training", "k_max", t.k_max);
    r.field(o, "training", "loss_ema", t.loss_ema);
    r.unknown_keys(o, "training");
  }
  if (j.contains("simulation")) {
    const auto& o = j.at("simulation");
    auto& s = c.simulation;
    r.field(o, "simulation", "compute_mean_min", s.compute_mean_min);
    r.field(o, "simulation", "compute_mean_max", s.compute_mean_max);
    r.field(o, "simulation", "compute_std_ratio", s.compute_std_ratio);
    r.field(o, "simulation", "uplink_min_mbps", s.uplink_min_mbps);
    r.field(o, "simulation", "uplink_max_mbps", s.uplink_max_mbps);
    r.field(o, "simulation", "downlink_min_mbps", s.downlink_min_mbps);
    r.field(o, "simulation", "downlink_max_mbps", s.downlink_max_mbps);
    r.field(o, "simulation", "server_sup_seconds", s.server_sup_seconds);
    r.field(o, "simulation", "server_semi_seconds", s.server_semi_seconds);
    r.field(o, "simulation", "wire_bytes", s.wire_bytes);
    r.field(o, "simulation", "header_bytes", s.header_bytes);
    r.field(o, "simulation", "client_streams_by_id", s.client_streams_by_id);
    r.unknown_keys(o, "simulation");
  }
  if (j.contains("ablation")) {
    const auto& o = j.at("ablation");
    auto& a = c.ablation;
    r.field(o, "ablation", "clustering_regularization", a.clustering_regularization);
    r.field(o, "ablation", "adaptive_frequency", a.adaptive_frequency);
    r.field(o, "ablation", "supervised_contrastive", a.supervised_contrastive);
    r.field(o, "ablation", "supervised_only", a.supervised_only);
    r.unknown_keys(o, "ablation");
  }
  if (j.contains("augmentation")) {
    const auto& o = j.at("augmentation");
    auto& a = c.augmentation;
    r.field(o, "augmentation", "weak_noise", a.weak_noise);
    r.field(o, "augmentation", "flip_prob", a.flip_prob);
    r.field(o, "augmentation", "crop_padding", a.crop_padding);
    r.field(o, "augmentation", "strong_noise", a.strong_noise);
    r.field(o, "augmentation", "dropout", a.dropout);
    r.field(o, "augmentation", "scale_jitter", a.scale_jitter);
    r.field(o, "augmentation", "shift", a.shift);
    r.field(o, "augmentation", "cutout", a.cutout);
    r.field(o, "augmentation", "brightness", a.brightness);
    r.field(o, "augmentation", "contrast", a.contrast);
    r.field(o, "augmentation", "strong_ops", a.strong_ops);
    r.unknown_keys(o, "augmentation");
  }
  auto more = validate(c);
  issues.insert(issues.end(), more.begin(), more.end());
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& d = c.data;
  const auto& t = c.training;
  const auto& s = c.simulation;
  const auto& a = c.ablation;
  const auto& g = c.augmentation;
  return {
      {"architecture", c.architecture},
      {"data",
       {{"source", d.source}, {"classes", d.classes}, {"dim", d.dim}, {"separation", d.separation},
        {"train_per_class", d.train_per_class}, {"test_per_class", d.test_per_class},
        {"idx_train_images", d.idx_train_images}, {"idx_train_labels", d.idx_train_labels},
        {"idx_test_images", d.idx_test_images}, {"idx_test_labels", d.idx_test_labels}, {"labeled", d.labeled},
        {"alpha", d.alpha}, {"clients", d.clients}, {"seed", d.seed}}},
      {"training",
       {{"rounds", t.rounds}, {"ks_initial", t.ks_initial}, {"ku", t.ku}, {"clients_per_round", t.clients_per_round},
        {"labeled_batch", t.labeled_batch}, {"unlabeled_batch", t.unlabeled_batch}, {"lr", t.lr},
        {"lr_floor", t.lr_floor}, {"momentum", t.momentum}, {"ema_decay", t.ema_decay}, {"tau", t.tau},
        {"kappa", t.kappa}, {"projection_dim", t.projection_dim}, {"hidden", t.hidden},
        {"sup_capacity", t.sup_capacity}, {"unsup_capacity", t.unsup_capacity},
        {"eviction_ratio", t.eviction_ratio}, {"rho1", t.rho1}, {"rho2", t.rho2},
        {"milestone_period", t.milestone_period}, {"k_min", t.k_min}, {"k_max", t.k_max}, {"loss_ema", t.loss_ema}}},
      {"simulation",
       {{"compute_mean_min", s.compute_mean_min}, {"compute_mean_max", s.compute_mean_max},
        {"compute_std_ratio", s.compute_std_ratio}, {"uplink_min_mbps", s.uplink_min_mbps},
        {"uplink_max_mbps", s.uplink_max_mbps}, {"downlink_min_mbps", s.downlink_min_mbps},
        {"downlink_max_mbps", s.downlink_max_mbps}, {"server_sup_seconds", s.server_sup_seconds},
        {"server_semi_seconds", s.server_semi_seconds}, {"wire_bytes", s.wire_bytes},
        {"header_bytes", s.header_bytes}, {"client_streams_by_id", s.client_streams_by_id}}},
      {"ablation",
       {{"clustering_regularization", a.clustering_regularization}, {"adaptive_frequency", a.adaptive_frequency},
        {"supervised_contrastive", a.supervised_contrastive}, {"supervised_only", a.supervised_only}}},
      {"augmentation",
       {{"weak_noise", g.weak_noise}, {"flip_prob", g.flip_prob}, {"crop_padding", g.crop_padding},
        {"strong_noise", g.strong_noise}, {"dropout", g.dropout}, {"scale_jitter", g.scale_jitter},
        {"shift", g.shift}, {"cutout", g.cutout}, {"brightness", g.brightness}, {"contrast", g.contrast},
        {"strong_ops", g.strong_ops}}},
  };
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({path + ": cannot open"});
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError({path + ": " + e.what()});
  }
  return config_from_json(j);
}

/// Resolves the architecture reference against the data shape.
inline ArchitectureDescriptor resolve_architecture(const ExperimentConfig& c, const Shape& sample_shape,
                                                   std::size_t classes) {
  if (c.architecture.is_object()) return descriptor_from_json(c.architecture);
  const auto name = c.architecture.get<std::string>();
  if (name == "mlp") {
    if (sample_shape.size() == 1) return architectures::mlp(sample_shape[0], c.training.hidden, classes);
    ArchitectureDescriptor d = architectures::mlp(shape_numel(sample_shape), c.training.hidden, classes);
    d.input_shape = sample_shape;
    d.layers.insert(d.layers.begin(), Flatten{});
    d.split_index += 1;
    return d;
  }
  if (name.size() > 5 && name.substr(name.size() - 5) == ".json") {
    std::ifstream f(name);
    if (!f) throw ConfigError({"architecture: cannot open " + name});
    return descriptor_from_json(nlohmann::json::parse(f));
  }
  return architectures::by_name(name);
}

}  // namespace semisfl
