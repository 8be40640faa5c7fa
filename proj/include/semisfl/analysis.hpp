#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "semisfl/architecture.hpp"
#include "semisfl/split_model.hpp"

namespace semisfl {

/// Constants of the alternating-training convergence bound.
struct BoundParams {
  double lipschitz = 1.0;       // L
  double sup_grad_bound = 1.0;  // G_s
  double unsup_grad_bound = 1.0;  // G_u
  double lr = 0.02;             // eta
  long rounds = 1;              // H
  long ks = 1;
  long ku = 1;
  double loss_gap = 0.0;        // F(w0) - F(w*)

  void validate() const {
    if (ks < 1) throw ContractError("K_s must be >= 1");
    if (ku < 1) throw ContractError("K_u must be >= 1");
    if (rounds < 1) throw ContractError("H must be >= 1");
    if (!(lr > 0.0)) throw ContractError("eta must be positive");
    if (lipschitz < 0.0 || sup_grad_bound < 0.0 || unsup_grad_bound < 0.0 || loss_gap < 0.0)
      throw ContractError("bound constants must be non-negative");
  }
};

/// (L^2 (K_u-1)(2K_u-1) eta^2 / (3 K_s) + L K_u^2 eta^3 / K_s + 1) G_u^2 + (L eta + 2 K_u / K_s) G_s^2
inline double phi(const BoundParams& p) {
  p.validate();
  const double L = p.lipschitz, eta = p.lr, ks = double(p.ks), ku = double(p.ku);
  const double drift = L * L * (ku - 1.0) * (2.0 * ku - 1.0) * eta * eta / (3.0 * ks);
  const double unsup = drift + L * ku * ku * eta * eta * eta / ks + 1.0;
  const double sup = L * eta + 2.0 * ku / ks;
  return unsup * p.unsup_grad_bound * p.unsup_grad_bound + sup * p.sup_grad_bound * p.sup_grad_bound;
}

/// 2 (F(w0) - F(w*)) / (eta H K_s) + phi.
inline double bound_rhs(const BoundParams& p) {
  p.validate();
  const double denom = p.lr * double(p.rounds) * double(p.ks);
  if (!(denom > 0.0)) throw ContractError("bound denominator is zero");
  return 2.0 * p.loss_gap / denom + phi(p);
}

struct PlanRow {
  std::size_t split_index = 0;
  std::string layer;  // type of the last bottom layer
  std::size_t bottom_bytes = 0;
  std::size_t feature_bytes = 0;  // per sample
  std::uint64_t per_client_bytes = 0;
  std::uint64_t per_round_bytes = 0;
};

struct SplitPlan {
  std::vector<PlanRow> rows;
  std::size_t recommended = 0;
};

/// Per-round client traffic for every cut: the bottom model down and up once,
/// plus K_u batches of student features, teacher features and feature gradients.
/// The recommendation is the cheapest cut; ties go to the smaller index.
inline SplitPlan split_plan(const ArchitectureDescriptor& desc, std::size_t batch, int ku, std::size_t clients_per_round,
                            std::size_t wire_bytes) {
  if (desc.layers.size() < 2) {
    // A single layer admits no cut; report the whole model as the only row.
    SplitPlan plan;
    const auto shapes = desc.shapes();
    std::size_t params = 0;
    for (const auto& l : desc.layers) params += parameter_count(l);
    PlanRow row{desc.layers.size(), desc.layers.empty() ? "" : layer_name(desc.layers.back()), params * wire_bytes,
                shape_numel(shapes.back()) * wire_bytes, 0, 0};
    row.per_client_bytes = 2 * row.bottom_bytes + std::uint64_t(ku) * batch * 3 * row.feature_bytes;
    row.per_round_bytes = row.per_client_bytes * clients_per_round;
    plan.rows.push_back(row);
    plan.recommended = row.split_index;
    return plan;
  }
  const auto report = size_report(desc, 1, batch, wire_bytes);
  SplitPlan plan;
  for (const auto& c : report.candidates) {
    PlanRow row{c.split_index, layer_name(desc.layers[c.split_index - 1]), c.bottom_bytes, c.feature_bytes, 0, 0};
    row.per_client_bytes = 2 * std::uint64_t(c.bottom_bytes) + std::uint64_t(ku) * batch * 3 * c.feature_bytes;
    row.per_round_bytes = row.per_client_bytes * clients_per_round;
    plan.rows.push_back(row);
  }
  const auto best = std::min_element(plan.rows.begin(), plan.rows.end(), [](const PlanRow& a, const PlanRow& b) {
    return a.per_round_bytes < b.per_round_bytes;
  });
  plan.recommended = best->split_index;
  return plan;
}

}  // namespace semisfl
