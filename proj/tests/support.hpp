#pragma once

// Shared fixtures and independent reference implementations for the test suite.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "semisfl/grad_check.hpp"
#include "semisfl/losses.hpp"

namespace testsupport {

using namespace semisfl;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(shape);
  std::normal_distribution<double> n01;
  for (double& v : t.values) v = scale * n01(rng);
  return t;
}

inline std::vector<double> unit_vector(std::size_t w, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> v(w);
  double n2 = 0.0;
  for (double& x : v) {
    x = n01(rng);
    n2 += x * x;
  }
  for (double& x : v) x /= std::sqrt(n2);
  return v;
}

/// n unit references with labels cycling over `classes` and confidences in [0.5, 1].
inline ReferenceSet random_refs(std::size_t n, std::size_t w, int classes, std::mt19937_64& rng,
                                std::ptrdiff_t owned_rows = 0) {
  ReferenceSet r;
  std::uniform_real_distribution<double> conf(0.5, 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    const auto v = unit_vector(w, rng);
    const std::ptrdiff_t owner = std::ptrdiff_t(a) < owned_rows ? std::ptrdiff_t(a) : -1;
    r.add(v.data(), w, int(a % std::size_t(classes)), conf(rng), owner);
  }
  return r;
}

/// Straight transcription of mean cross-entropy over unmasked rows.
inline double oracle_cross_entropy(const Tensor& logits, const std::vector<int>& y, const std::vector<bool>& mask = {}) {
  const std::size_t c = logits.row_size();
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < logits.batch(); ++b) {
    if (!mask.empty() && !mask[b]) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::exp(logits.row(b)[k]);
    total += -logits.row(b)[y[b]] + std::log(s);
    ++n;
  }
  return n ? total / double(n) : 0.0;
}

inline double dot(const double* a, const double* b, std::size_t w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w; ++i) s += a[i] * b[i];
  return s;
}

/// -(1/|P|) sum_p log( exp(z.r_p/k) / sum_a exp(z.r_a/k) ), averaged over anchors with |P| > 0.
inline double oracle_contrastive(const Tensor& z, const ReferenceSet& refs, double kappa,
                                 const std::function<bool(std::size_t)>& active,
                                 const std::function<bool(std::size_t, std::size_t)>& in_denom,
                                 const std::function<bool(std::size_t, std::size_t)>& is_pos) {
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < z.batch(); ++j) {
    if (!active(j)) continue;
    double denom = 0.0;
    std::vector<std::size_t> pos;
    for (std::size_t a = 0; a < refs.size(); ++a) {
      if (!in_denom(j, a)) continue;
      denom += std::exp(dot(z.row(j), refs.row(a), refs.width) / kappa);
      if (is_pos(j, a)) pos.push_back(a);
    }
    if (pos.empty()) continue;
    double lj = 0.0;
    for (auto p : pos) lj -= std::log(std::exp(dot(z.row(j), refs.row(p), refs.width) / kappa) / denom);
    total += lj / double(pos.size());
    ++used;
  }
  return used ? total / double(used) : 0.0;
}

inline double oracle_supcon(const Tensor& z, const std::vector<int>& labels, const ReferenceSet& refs, double kappa) {
  return oracle_contrastive(
      z, refs, kappa, [](std::size_t) { return true; },
      [&](std::size_t j, std::size_t a) { return refs.owner[a] != std::ptrdiff_t(j); },
      [&](std::size_t j, std::size_t a) { return refs.owner[a] != std::ptrdiff_t(j) && refs.labels[a] == labels[j]; });
}

inline double oracle_cluster(const Tensor& z, const std::vector<PseudoLabel>& pl, const ReferenceSet& refs, double kappa,
                             double tau, bool include_low = true) {
  return oracle_contrastive(
      z, refs, kappa, [&](std::size_t j) { return include_low || pl[j].mask; },
      [](std::size_t, std::size_t) { return true; },
      [&](std::size_t j, std::size_t a) { return refs.confidence[a] > tau && refs.labels[a] == pl[j].label; });
}

/// Worst central-difference relative error of `f` against `analytic` over every coordinate of `x`.
inline double tensor_grad_error(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& analytic,
                                double step = 1e-5) {
  return check_function_gradient([&](const std::vector<double>& v) { return f(Tensor(x.shape, v)); }, x.values,
                                 analytic.values, step);
}

/// Smooth scalar readout of a network output: sum c_i y_i + 0.5 sum y_i^2.
inline OutputLoss quadratic_readout(const Shape& out_shape, std::mt19937_64& rng) {
  const Tensor c = random_tensor(out_shape, rng);
  return [c](const Tensor& y) {
    double l = 0.0;
    Tensor g(y.shape);
    for (std::size_t i = 0; i < y.size(); ++i) {
      l += c[i] * y[i] + 0.5 * y[i] * y[i];
      g[i] = c[i] + y[i];
    }
    return std::pair<double, Tensor>{l, g};
  };
}

/// Worst relative error of d loss / d input against central differences.
inline double input_grad_error(const Network& net, const Tensor& x, const OutputLoss& loss, double step = 1e-5) {
  const Trace tr = forward(net, x);
  const Gradients g = backward(net, tr, loss(tr.output()).second);
  return tensor_grad_error([&](const Tensor& v) { return loss(predict(net, v)).first; }, x, g.input, step);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace testsupport
