// semisfl: run experiments, evaluate the convergence bound, plan split points,
// inspect partitions and compare runs.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "semisfl/analysis.hpp"
#include "semisfl/experiment.hpp"

using namespace semisfl;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

void print_issues(const ConfigError& e) {
  std::cerr << "invalid configuration:\n";
  for (const auto& i : e.issues()) std::cerr << "  " << i << '\n';
}

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

int cmd_run(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<int> rounds) {
  RunOptions opt;
  opt.seed = seed;
  opt.rounds = rounds;
  const auto result = run_experiment(config_or_default(config), out, opt);
  std::cout << "rounds " << result.rounds.size() << "  final accuracy "
            << format_double(result.summary["final_accuracy"].get<double>()) << "  bytes "
            << result.summary["total_bytes"].get<std::uint64_t>() << "  simulated seconds "
            << format_double(result.summary["total_sim_seconds"].get<double>()) << '\n';
  return kOk;
}

int cmd_plan(const std::string& config, std::size_t batch, int ku, std::size_t clients, std::size_t wire,
             const std::string& arch) {
  ArchitectureDescriptor desc;
  if (!arch.empty()) {
    ExperimentConfig c;
    c.architecture = arch;
    desc = resolve_architecture(c, {c.data.dim}, c.data.classes);
  } else {
    const auto cfg = config_or_default(config);
    if (auto issues = validate(cfg); !issues.empty()) throw ConfigError(issues);
    const auto data = load_data(cfg.data);
    desc = resolve_architecture(cfg, data.train.sample_shape, data.train.classes);
    if (batch == 0) batch = cfg.training.unlabeled_batch;
    if (ku == 0) ku = cfg.training.ku;
    if (clients == 0) clients = cfg.training.clients_per_round;
    if (wire == 0) wire = cfg.simulation.wire_bytes;
  }
  if (batch == 0) batch = 32;
  if (ku == 0) ku = 20;
  if (clients == 0) clients = 10;
  if (wire == 0) wire = 4;
  const auto plan = split_plan(desc, batch, ku, clients, wire);
  std::printf("%-6s %-10s %14s %14s %16s %16s\n", "split", "layer", "bottom_bytes", "feature_bytes", "client_bytes",
              "round_bytes");
  for (const auto& r : plan.rows)
    std::printf("%-6zu %-10s %14zu %14zu %16llu %16llu%s\n", r.split_index, r.layer.c_str(), r.bottom_bytes,
                r.feature_bytes, (unsigned long long)r.per_client_bytes, (unsigned long long)r.per_round_bytes,
                r.split_index == plan.recommended ? "  *" : "");
  std::printf("recommended split: %zu\n", plan.recommended);
  return kOk;
}

int cmd_phi(const BoundParams& p) {
  std::printf("phi %.15g\nbound %.15g\n", phi(p), bound_rhs(p));
  return kOk;
}

int cmd_partition_stats(const std::string& config, std::optional<std::uint64_t> seed, bool json) {
  auto cfg = config_or_default(config);
  if (seed) cfg.data.seed = *seed;
  const World w = build_world(cfg);
  if (json) {
    std::cout << partition_manifest(w.partition, cfg.data.alpha, cfg.data.seed).dump(2) << '\n';
    return kOk;
  }
  std::printf("alpha %g  clients %zu  pool %zu  labeled %zu\n", cfg.data.alpha, w.partition.size(), w.pool.size(),
              w.labeled.size());
  std::printf("%-7s %7s %9s  class counts\n", "client", "size", "entropy");
  for (std::size_t i = 0; i < w.client_data.size(); ++i) {
    const auto& ds = w.client_data[i];
    std::printf("%-7zu %7zu %9.4f ", i, ds.size(), label_entropy(ds.labels, ds.classes));
    for (auto c : ds.class_counts()) std::printf(" %zu", c);
    std::printf("\n");
  }
  return kOk;
}

int cmd_compare(const std::string& a, const std::string& b, std::optional<double> target, bool json) {
  const auto report = compare_runs(read_metrics(std::filesystem::path(a) / "metrics.csv"),
                                   read_metrics(std::filesystem::path(b) / "metrics.csv"), target);
  if (json)
    std::cout << report.dump(2) << '\n';
  else
    std::cout << compare_text(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised split federated learning simulator"};
  app.require_subcommand(1);

  std::string config, out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;

  auto* run = app.add_subcommand("run", "train for H rounds and write metrics.csv, summary.json, checkpoint.bin");
  run->add_option("--config", config, "experiment config JSON");
  run->add_option("--out", out, "output directory");
  run->add_option("--seed", seed, "override data.seed");
  run->add_option("--rounds", rounds, "override training.rounds");

  std::size_t batch = 0, clients = 0, wire = 0;
  int ku = 0;
  std::string arch;
  auto* plan = app.add_subcommand("plan", "per-split communication cost table");
  plan->add_option("--config", config, "experiment config JSON");
  plan->add_option("--arch", arch, "built-in architecture name or descriptor JSON path");
  plan->add_option("--batch", batch, "unsupervised batch size");
  plan->add_option("--ku", ku, "client iterations per round");
  plan->add_option("--clients", clients, "clients per round");
  plan->add_option("--wire", wire, "bytes per scalar");

  BoundParams bp;
  auto* phi_cmd = app.add_subcommand("phi", "evaluate the convergence bound");
  phi_cmd->add_option("--L", bp.lipschitz);
  phi_cmd->add_option("--Gs", bp.sup_grad_bound);
  phi_cmd->add_option("--Gu", bp.unsup_grad_bound);
  phi_cmd->add_option("--eta", bp.lr);
  phi_cmd->add_option("--H", bp.rounds);
  phi_cmd->add_option("--Ks", bp.ks);
  phi_cmd->add_option("--Ku", bp.ku);
  phi_cmd->add_option("--gap", bp.loss_gap, "F(w0) - F(w*)");

  bool json = false;
  auto* pstats = app.add_subcommand("partition-stats", "per-client sizes, label entropy and class counts");
  pstats->add_option("--config", config, "experiment config JSON");
  pstats->add_option("--seed", seed, "override data.seed");
  pstats->add_flag("--json", json, "emit the partition manifest");

  std::string dir_a, dir_b;
  std::optional<double> target;
  auto* cmp = app.add_subcommand("compare", "per-round and final deltas between two runs (B - A)");
  cmp->add_option("run_a", dir_a)->required();
  cmp->add_option("run_b", dir_b)->required();
  cmp->add_option("--target", target, "accuracy for time-to-target");
  cmp->add_flag("--json", json, "emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config, out, seed, rounds);
    if (*plan) return cmd_plan(config, batch, ku, clients, wire, arch);
    if (*phi_cmd) return cmd_phi(bp);
    if (*pstats) return cmd_partition_stats(config, seed, json);
    if (*cmp) return cmd_compare(dir_a, dir_b, target, json);
  } catch (const ConfigError& e) {
    print_issues(e);
    return kConfigError;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
