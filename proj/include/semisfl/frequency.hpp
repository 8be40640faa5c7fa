#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>

#include "semisfl/tensor.hpp"

namespace semisfl {

/// Tracks a moving-average estimate of the supervised loss and adapts the number
/// of server-side supervised iterations per round at milestone rounds.
struct FrequencyController {
  double smoothing = 0.3;  // weight of the newest phase loss in the estimate
  double rho1 = 0.01;
  double rho2 = 0.05;
  int milestone_period = 10;
  int k_min = 1;
  int k_max = 800;
  int ks = 50;

  std::optional<double> estimate;
  std::deque<double> window;  // last 20 per-round estimates, oldest first

  static constexpr std::size_t kWindow = 20;

  void validate() const {
    if (!(rho1 > 0.0 && rho1 < rho2)) throw ContractError("need 0 < rho1 < rho2");
    if (k_min < 1 || k_min > k_max) throw ContractError("need 1 <= k_min <= k_max");
    if (milestone_period < 1) throw ContractError("milestone period must be >= 1");
  }

  bool is_milestone(int h) const { return h % milestone_period == 0; }

  void observe(double phase_loss) {
    estimate = estimate ? smoothing * phase_loss + (1.0 - smoothing) * *estimate : phase_loss;
    window.push_back(*estimate);
    if (window.size() > kWindow) window.pop_front();
  }

  /// |mean(last 10 estimates) - mean(previous 10)|, once 20 estimates exist.
  std::optional<double> delta() const {
    if (window.size() < kWindow) return std::nullopt;
    const double prev = std::accumulate(window.begin(), window.begin() + kWindow / 2, 0.0) / (kWindow / 2);
    const double last = std::accumulate(window.begin() + kWindow / 2, window.end(), 0.0) / (kWindow / 2);
    return std::abs(last - prev);
  }
};

/// The halve / double / hold rule with strict inequalities, clamped to [k_min, k_max].
inline int next_frequency(int ks, double delta, bool milestone, double rho1, double rho2, int k_min, int k_max) {
  int next = ks;
  if (milestone && delta < rho1) next = ks / 2;
  else if (milestone && delta > rho2) next = ks * 2;
  return std::clamp(next, k_min, k_max);
}

/// Records this round's supervised-phase loss and returns the frequency for round h + 1.
inline int update_frequency(FrequencyController& c, double phase_loss, int h) {
  c.observe(phase_loss);
  const auto d = c.delta();
  if (d) c.ks = next_frequency(c.ks, *d, c.is_milestone(h), c.rho1, c.rho2, c.k_min, c.k_max);
  return c.ks;
}

}  // namespace semisfl
