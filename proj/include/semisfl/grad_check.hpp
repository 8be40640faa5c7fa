#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "semisfl/layers.hpp"

namespace semisfl {

/// Loss evaluated on a network output: returns the scalar and d loss / d output.
using OutputLoss = std::function<std::pair<double, Tensor>(const Tensor&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kink = 0;
  std::size_t frozen = 0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero coordinates from
/// being judged on rounding noise alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

/// True if the perturbation crossed (or came within `band` of) a ReLU or max-pool switch point.
inline bool crosses_kink(const Network& net, const Trace& base, const Trace& plus, const Trace& minus, double band) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Tensor& b = base.activations[i];
    const Tensor& p = plus.activations[i];
    const Tensor& m = minus.activations[i];
    if (std::holds_alternative<ReLU>(net.layers[i])) {
      for (std::size_t k = 0; k < b.size(); ++k) {
        if ((p[k] > 0.0) != (m[k] > 0.0) || (b[k] > 0.0) != (p[k] > 0.0)) return true;
        if (p[k] != m[k] && std::abs(b[k]) < band) return true;
      }
    } else if (const auto* pool = std::get_if<MaxPool2d>(&net.layers[i])) {
      const auto& in = net.shapes[i];
      const auto& out = net.shapes[i + 1];
      if (maxpool_argmax(*pool, in, out, p) != maxpool_argmax(*pool, in, out, m)) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Compares backward() against central differences for every parameter coordinate.
/// Coordinates whose perturbation touches a ReLU kink (within 10 * step) are excluded;
/// tensors flagged in `frozen` are reported with zero error and not perturbed.
inline GradCheckReport grad_check(const Network& net, const Tensor& input, const OutputLoss& loss, double step,
                                  double tolerance, const std::vector<bool>& frozen = {}) {
  Network work = net;
  const Trace base = forward(work, input);
  auto [base_loss, dout] = loss(base.output());
  if (!std::isfinite(base_loss)) throw ContractError("grad_check: non-finite loss");
  const Gradients analytic = backward(work, base, dout);

  GradCheckReport report;
  const double band = 10.0 * step;
  for (std::size_t t = 0; t < work.params.size(); ++t) {
    if (t < frozen.size() && frozen[t]) {
      report.frozen += work.params[t].size();
      continue;
    }
    for (std::size_t i = 0; i < work.params[t].size(); ++i) {
      const double saved = work.params[t][i];
      work.params[t][i] = saved + step;
      const Trace plus = forward(work, input);
      const double lp = loss(plus.output()).first;
      work.params[t][i] = saved - step;
      const Trace minus = forward(work, input);
      const double lm = loss(minus.output()).first;
      work.params[t][i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) throw ContractError("grad_check: non-finite loss");
      if (detail::crosses_kink(work, base, plus, minus, band)) {
        ++report.skipped_kink;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * step);
      report.max_rel_error = std::max(report.max_rel_error, relative_error(analytic.params[t][i], numeric));
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

/// Central-difference check of an arbitrary scalar function against a supplied gradient.
inline double check_function_gradient(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, const std::vector<double>& analytic, double step) {
  if (analytic.size() != x.size()) throw ContractError("check_function_gradient: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double lp = f(x);
    x[i] = saved - step;
    const double lm = f(x);
    x[i] = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm)) throw ContractError("check_function_gradient: non-finite loss");
    worst = std::max(worst, relative_error(analytic[i], (lp - lm) / (2.0 * step)));
  }
  return worst;
}

}  // namespace semisfl
