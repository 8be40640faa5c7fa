#pragma once

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <cstdint>

#include "semisfl/rng.hpp"
#include "semisfl/tensor.hpp"

namespace semisfl {

/// 1 Mbps = 1e6 bit/s.
inline double transfer_seconds(std::size_t bytes, double mbps) {
  if (!(mbps > 0.0)) throw ContractError("bandwidth must be positive");
  return double(bytes) * 8.0 / (mbps * 1e6);
}

/// Quantile u of N(mean, std) truncated to (0, inf). Monotone in both u and mean,
/// so common random numbers keep timelines comparable across profiles.
inline double truncated_normal_quantile(double mean, double std, double u) {
  if (!(mean > 0.0)) throw ContractError("compute mean must be positive");
  if (std <= 0.0) return mean;
  const double a = 0.5 * std::erfc(mean / (std * std::sqrt(2.0)));  // P(X <= 0)
  const double p = a + u * (1.0 - a);
  const double z = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
  return std::max(mean + std * z, 1e-12);
}

struct ClientProfile {
  double compute_mean = 0.05;  // seconds per iteration
  double compute_std = 0.01;
  double up_min_mbps = 2.0, up_max_mbps = 8.0;
  double down_min_mbps = 10.0, down_max_mbps = 20.0;
};

enum class DrawKind : std::uint64_t { compute = 1, uplink = 2, downlink = 3 };

/// Every random quantity of the timeline is addressed by (seed, kind, client, round, step),
/// so changing one client's profile leaves every other draw untouched.
struct NetworkModel {
  std::uint64_t seed = 0;

  double uniform(DrawKind kind, std::size_t client, int round, std::uint64_t step) const {
    return addressed_uniform(seed, {std::uint64_t(kind), client, std::uint64_t(round), step});
  }

  double compute_seconds(const ClientProfile& p, std::size_t client, int round, std::uint64_t step) const {
    return truncated_normal_quantile(p.compute_mean, p.compute_std, uniform(DrawKind::compute, client, round, step));
  }

  double uplink_mbps(const ClientProfile& p, std::size_t client, int round, std::uint64_t step) const {
    return p.up_min_mbps + (p.up_max_mbps - p.up_min_mbps) * uniform(DrawKind::uplink, client, round, step);
  }

  double downlink_mbps(const ClientProfile& p, std::size_t client, int round, std::uint64_t step) const {
    return p.down_min_mbps + (p.down_max_mbps - p.down_min_mbps) * uniform(DrawKind::downlink, client, round, step);
  }
};

}  // namespace semisfl
