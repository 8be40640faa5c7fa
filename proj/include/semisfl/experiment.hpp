#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "semisfl/checkpoint.hpp"
#include "semisfl/config.hpp"
#include "semisfl/protocol.hpp"

namespace semisfl {

class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kMetricsColumns =
    "round,K_s,eta,sup_loss,unsup_loss,ce_term,cr_term,acc_teacher,mask_rate,impurity,bytes_up,bytes_down,sim_seconds";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_row(const RoundMetrics& m) {
  std::ostringstream os;
  os << m.round << ',' << m.ks << ',' << format_double(m.lr) << ',' << format_double(m.sup_loss) << ','
     << format_double(m.unsup_loss) << ',' << format_double(m.ce_term) << ',' << format_double(m.cr_term) << ','
     << format_double(m.accuracy) << ',' << format_double(m.mask_rate) << ',' << format_double(m.impurity) << ','
     << m.bytes_up << ',' << m.bytes_down << ',' << format_double(m.sim_seconds);
  return os.str();
}

inline bool metrics_finite(const RoundMetrics& m) {
  for (double v : {m.lr, m.sup_loss, m.unsup_loss, m.ce_term, m.cr_term, m.accuracy, m.mask_rate, m.impurity,
                   m.sim_seconds})
    if (!std::isfinite(v)) return false;
  return true;
}

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::vector<int> ks_schedule;  // overrides the controller per round when non-empty
  bool write_checkpoint = true;
};

struct RunResult {
  std::vector<RoundMetrics> rounds;
  nlohmann::json summary;
};

inline ExperimentConfig apply_overrides(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.seed) cfg.data.seed = *opt.seed;
  if (opt.rounds) cfg.training.rounds = *opt.rounds;
  if (auto issues = validate(cfg); !issues.empty()) throw ConfigError(issues);
  return cfg;
}

inline nlohmann::json summarize(const World& w, const std::vector<RoundMetrics>& rounds) {
  nlohmann::json s;
  double best = 0.0;
  int best_round = 0;
  std::uint64_t up = 0, down = 0;
  long sup_iters = 0;
  for (const auto& m : rounds) {
    if (m.accuracy > best) {
      best = m.accuracy;
      best_round = m.round;
    }
    up += m.bytes_up;
    down += m.bytes_down;
    sup_iters += m.ks;
  }
  s["rounds"] = rounds.size();
  s["seed"] = w.config.data.seed;
  s["final_accuracy"] = rounds.empty() ? 0.0 : rounds.back().accuracy;
  s["best_accuracy"] = best;
  s["best_round"] = best_round;
  s["total_bytes_up"] = up;
  s["total_bytes_down"] = down;
  s["total_bytes"] = up + down;
  s["total_sim_seconds"] = rounds.empty() ? 0.0 : rounds.back().sim_seconds;
  s["supervised_iterations"] = sup_iters;
  s["ks_trajectory"] = w.ks_history;
  return s;
}

inline std::vector<NamedTensor> checkpoint_tensors(const World& w) {
  std::vector<NamedTensor> out;
  auto add = [&](const std::string& prefix, const Network& n) {
    for (std::size_t i = 0; i < n.params.size(); ++i) out.push_back({prefix + "." + std::to_string(i), n.params[i]});
  };
  add("student.bottom", w.model.bottom);
  add("student.top", w.model.top);
  add("student.head", w.model.head);
  add("teacher.bottom", w.teacher.model.bottom);
  add("teacher.top", w.teacher.model.top);
  add("teacher.head", w.teacher.model.head);
  return out;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f.write(bytes.data(), std::streamsize(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

/// Runs every round in memory; `sink` (if given) sees each row as soon as it exists.
template <class Sink>
RunResult run_world(World& w, const RunOptions& opt, Sink&& sink) {
  RunResult r;
  const int rounds = w.config.training.rounds;
  for (int h = 1; h <= rounds; ++h) {
    RoundPlan plan = make_plan(w, h);
    if (!opt.ks_schedule.empty()) plan.ks = opt.ks_schedule.at(std::size_t(h - 1));
    RoundMetrics m = simulate_round(w, plan);
    if (!metrics_finite(m)) throw NumericFailure("non-finite metrics in round " + std::to_string(h));
    sink(m);
    r.rounds.push_back(m);
  }
  r.summary = summarize(w, r.rounds);
  return r;
}

inline RunResult run_in_memory(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  World w = build_world(apply_overrides(cfg, opt));
  return run_world(w, opt, [](const RoundMetrics&) {});
}

/// Supervised-only reference: same data and labelled set, same per-round server
/// iteration counts, no clients.
inline RunResult run_supervised_baseline(ExperimentConfig cfg, const std::vector<int>& ks_schedule,
                                         const RunOptions& opt = {}) {
  cfg.ablation.supervised_only = true;
  RunOptions o = opt;
  o.ks_schedule = ks_schedule;
  if (!ks_schedule.empty()) o.rounds = int(ks_schedule.size());
  return run_in_memory(cfg, o);
}

/// Writes metrics.csv (one flushed row per round), summary.json and checkpoint.bin
/// under `out_dir`. On a numeric failure the partial CSV stays and error.json is written.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                const RunOptions& opt = {}) {
  std::filesystem::create_directories(out_dir);
  World w = build_world(apply_overrides(cfg, opt));
  write_atomic(out_dir / "config.json", config_to_json(w.config).dump(2) + "\n");
  std::ofstream csv(out_dir / "metrics.csv", std::ios::trunc);
  csv << kMetricsColumns << '\n' << std::flush;
  try {
    RunResult r = run_world(w, opt, [&](const RoundMetrics& m) { csv << csv_row(m) << '\n' << std::flush; });
    write_atomic(out_dir / "summary.json", r.summary.dump(2) + "\n");
    if (opt.write_checkpoint) write_atomic(out_dir / "checkpoint.bin", encode_checkpoint(checkpoint_tensors(w)));
    return r;
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"round", w.round}};
    write_atomic(out_dir / "error.json", err.dump(2) + "\n");
    throw;
  }
}

// ---------------------------------------------------------------------------
// Run comparison

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ContractError("metrics table has no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline MetricsTable read_metrics(const std::filesystem::path& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw ContractError("cannot open " + csv_path.string());
  MetricsTable t;
  std::string line;
  if (!std::getline(f, line)) throw ContractError(csv_path.string() + ": empty metrics file");
  t.columns = split_csv_line(line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size()) throw ContractError(csv_path.string() + ": ragged row");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// First cumulative simulated time at which accuracy reaches `target`; nullopt if never.
inline std::optional<double> time_to_target(const MetricsTable& t, double target) {
  const auto acc = t.column("acc_teacher"), sec = t.column("sim_seconds");
  for (const auto& r : t.rows)
    if (r[acc] >= target) return r[sec];
  return std::nullopt;
}

/// Per-round and final deltas (B - A) of accuracy, total bytes and simulated time.
inline nlohmann::json compare_runs(const MetricsTable& a, const MetricsTable& b, std::optional<double> target) {
  if (a.columns != b.columns) throw ContractError("compare: metrics schemas differ");
  if (a.rows.size() != b.rows.size()) throw ContractError("compare: runs have different round counts");
  const auto acc = a.column("acc_teacher"), up = a.column("bytes_up"), down = a.column("bytes_down"),
             sec = a.column("sim_seconds"), round = a.column("round");
  nlohmann::json report{{"rounds", a.rows.size()}, {"per_round", nlohmann::json::array()}};
  double bytes_a = 0, bytes_b = 0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& ra = a.rows[i];
    const auto& rb = b.rows[i];
    bytes_a += ra[up] + ra[down];
    bytes_b += rb[up] + rb[down];
    report["per_round"].push_back({{"round", ra[round]},
                                   {"accuracy_delta", rb[acc] - ra[acc]},
                                   {"bytes_delta", (rb[up] + rb[down]) - (ra[up] + ra[down])},
                                   {"sim_seconds_delta", rb[sec] - ra[sec]}});
  }
  if (!a.rows.empty()) {
    report["final"] = {{"accuracy_a", a.rows.back()[acc]},
                       {"accuracy_b", b.rows.back()[acc]},
                       {"accuracy_delta", b.rows.back()[acc] - a.rows.back()[acc]},
                       {"total_bytes_delta", bytes_b - bytes_a},
                       {"sim_seconds_delta", b.rows.back()[sec] - a.rows.back()[sec]}};
  }
  if (target) {
    auto ta = time_to_target(a, *target), tb = time_to_target(b, *target);
    report["target_accuracy"] = *target;
    report["time_to_target_a"] = ta ? nlohmann::json(*ta) : nlohmann::json(nullptr);
    report["time_to_target_b"] = tb ? nlohmann::json(*tb) : nlohmann::json(nullptr);
  }
  return report;
}

inline std::string compare_text(const nlohmann::json& report) {
  std::ostringstream os;
  os << "rounds: " << report["rounds"] << '\n';
  if (report.contains("final")) {
    const auto& f = report["final"];
    os << "final accuracy: A=" << f["accuracy_a"] << " B=" << f["accuracy_b"] << " delta=" << f["accuracy_delta"] << '\n'
       << "total bytes delta: " << f["total_bytes_delta"] << '\n'
       << "simulated seconds delta: " << f["sim_seconds_delta"] << '\n';
  }
  if (report.contains("target_accuracy")) {
    auto show = [](const nlohmann::json& v) { return v.is_null() ? std::string("unreached") : v.dump(); };
    os << "time to " << report["target_accuracy"] << ": A=" << show(report["time_to_target_a"])
       << " B=" << show(report["time_to_target_b"]) << '\n';
  }
  return os.str();
}

}  // namespace semisfl
