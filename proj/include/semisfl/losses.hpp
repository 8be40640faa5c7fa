#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "semisfl/tensor.hpp"

namespace semisfl {

struct PseudoLabel {
  int label = 0;
  double confidence = 0.0;
  bool mask = false;  // true when confidence > tau
};

struct LossConfig {
  double tau = 0.95;   // confidence threshold
  double kappa = 0.1;  // contrastive temperature
  double ce_weight = 1.0;
  double contrastive_weight = 1.0;
  // Low-confidence samples still join the clustering term under their argmax label.
  bool cluster_low_confidence = true;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ContractError("tau must lie in (0, 1)");
    if (!(kappa > 0.0)) throw ContractError("kappa must be positive");
    if (ce_weight < 0.0 || contrastive_weight < 0.0) throw ContractError("loss weights must be non-negative");
  }
};

/// Reference vectors for the contrastive terms. Rows are L2-normalized and treated as constants.
struct ReferenceSet {
  std::size_t width = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<double> confidence;
  std::vector<std::ptrdiff_t> owner;  // batch row that produced the entry, -1 if none

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  const double* row(std::size_t r) const { return features.data() + r * width; }

  void add(const double* z, std::size_t w, int label, double conf, std::ptrdiff_t from = -1) {
    if (width == 0) width = w;
    if (w != width) throw ContractError("reference width mismatch");
    features.insert(features.end(), z, z + w);
    labels.push_back(label);
    confidence.push_back(conf);
    owner.push_back(from);
  }
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;                 // d loss / d input, same shape as the scored tensor
  std::size_t contributing = 0;
  std::size_t skipped = 0;     // samples with no positives or masked out
  bool empty = false;          // nothing contributed; loss and grad are zero
};

inline std::vector<double> softmax_row(const double* logits, std::size_t m) {
  const double mx = *std::max_element(logits, logits + m);
  std::vector<double> p(m);
  double z = 0.0;
  for (std::size_t k = 0; k < m; ++k) z += (p[k] = std::exp(logits[k] - mx));
  for (double& v : p) v /= z;
  return p;
}

/// Mean cross-entropy over samples whose mask entry is set (all samples when `mask` is empty).
inline LossResult cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                const std::vector<bool>& mask = {}) {
  if (logits.rank() != 2) throw ContractError("cross_entropy expects (batch, classes) logits");
  const std::size_t batch = logits.batch(), m = logits.row_size();
  if (targets.size() != batch) throw ContractError("cross_entropy: target count does not match batch");
  if (!mask.empty() && mask.size() != batch) throw ContractError("cross_entropy: mask size does not match batch");

  LossResult r{0.0, logits.zeros_like()};
  for (std::size_t b = 0; b < batch; ++b)
    if (mask.empty() || mask[b]) ++r.contributing;
  r.skipped = batch - r.contributing;
  if (r.contributing == 0) {
    r.empty = true;
    return r;
  }
  const double inv = 1.0 / double(r.contributing);
  for (std::size_t b = 0; b < batch; ++b) {
    if (!mask.empty() && !mask[b]) continue;
    const int t = targets[b];
    if (t < 0 || std::size_t(t) >= m) throw ContractError("cross_entropy: target out of range");
    const double* row = logits.row(b);
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) z += std::exp(row[k] - mx);
    r.loss += (std::log(z) + mx - row[t]) * inv;
    double* g = r.grad.row(b);
    for (std::size_t k = 0; k < m; ++k) g[k] = std::exp(row[k] - mx) / z * inv;
    g[t] -= inv;
  }
  return r;
}

/// Argmax label, its softmax probability, and mask = probability > tau (strict).
inline std::vector<PseudoLabel> pseudo_label(const Tensor& logits, double tau) {
  if (logits.rank() != 2) throw ContractError("pseudo_label expects (batch, classes) logits");
  std::vector<PseudoLabel> out(logits.batch());
  for (std::size_t b = 0; b < logits.batch(); ++b) {
    const auto p = softmax_row(logits.row(b), logits.row_size());
    const auto it = std::max_element(p.begin(), p.end());
    out[b] = {int(it - p.begin()), *it, *it > tau};
  }
  return out;
}

namespace detail {

/// One anchor's term: LSE_{a in denom} s_a - mean_{p in pos} s_p with s = z . r / kappa.
/// `scores` holds z . r for every reference; on success `weights` is the softmax over the denominator.
template <class InDenominator, class IsPositive>
bool contrastive_anchor(const std::vector<double>& scores, double kappa, InDenominator in_denom, IsPositive is_pos,
                        double& loss_out, std::vector<double>& weights, std::vector<std::size_t>& denom_idx,
                        std::vector<std::size_t>& pos_idx) {
  denom_idx.clear();
  pos_idx.clear();
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (!in_denom(a)) continue;
    denom_idx.push_back(a);
    if (is_pos(a)) pos_idx.push_back(a);
  }
  if (pos_idx.empty()) return false;
  weights.resize(denom_idx.size());
  const double inv_kappa = 1.0 / kappa;
  double mx = -INFINITY;
  for (std::size_t k = 0; k < denom_idx.size(); ++k) {
    weights[k] = scores[denom_idx[k]] * inv_kappa;
    mx = std::max(mx, weights[k]);
  }
  double pos_sum = 0.0;
  for (std::size_t p : pos_idx) pos_sum += scores[p] * inv_kappa;
  double sum = 0.0;
  for (double& s : weights) sum += (s = std::exp(s - mx));
  loss_out = mx + std::log(sum) - pos_sum / double(pos_idx.size());
  const double inv_sum = 1.0 / sum;
  for (double& s : weights) s *= inv_sum;
  return true;
}

/// scores[a] = z . refs[a], accumulated feature by feature over a transposed copy of the references.
inline void reference_scores(const double* z, const std::vector<double>& refs_t, std::size_t n, std::size_t w,
                             std::vector<double>& scores) {
  scores.assign(n, 0.0);
  for (std::size_t i = 0; i < w; ++i) {
    const double zi = z[i];
    const double* col = refs_t.data() + i * n;
    for (std::size_t a = 0; a < n; ++a) scores[a] += zi * col[a];
  }
}

template <class InDenominator, class IsPositive, class Active>
LossResult contrastive(const Tensor& z, const ReferenceSet& refs, double kappa, Active active, InDenominator in_denom,
                       IsPositive is_pos) {
  if (z.rank() != 2) throw ContractError("contrastive loss expects (batch, width) projections");
  LossResult r{0.0, z.zeros_like()};
  if (refs.empty()) {
    r.empty = true;
    r.skipped = z.batch();
    return r;
  }
  if (refs.width != z.row_size()) throw ContractError("reference width does not match projection width");
  const std::size_t w = refs.width;
  const std::size_t n = refs.size();
  std::vector<double> refs_t(n * w);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t i = 0; i < w; ++i) refs_t[i * n + a] = refs.row(a)[i];
  std::vector<double> weights, scores;
  std::vector<std::size_t> denom_idx, pos_idx;
  std::vector<double> per_loss(z.batch(), 0.0);
  std::vector<bool> used(z.batch(), false);
  for (std::size_t j = 0; j < z.batch(); ++j) {
    if (!active(j)) continue;
    const double* zj = z.row(j);
    double lj = 0.0;
    reference_scores(zj, refs_t, n, w, scores);
    if (!contrastive_anchor(
            scores, kappa, [&](std::size_t a) { return in_denom(j, a); }, [&](std::size_t a) { return is_pos(j, a); },
            lj, weights, denom_idx, pos_idx))
      continue;
    used[j] = true;
    per_loss[j] = lj;
    ++r.contributing;
    double* g = r.grad.row(j);
    for (std::size_t k = 0; k < denom_idx.size(); ++k) {
      const double* ra = refs.row(denom_idx[k]);
      const double c = weights[k] / kappa;
      for (std::size_t i = 0; i < w; ++i) g[i] += c * ra[i];
    }
    const double c = 1.0 / (double(pos_idx.size()) * kappa);
    for (std::size_t p : pos_idx) {
      const double* rp = refs.row(p);
      for (std::size_t i = 0; i < w; ++i) g[i] -= c * rp[i];
    }
  }
  r.skipped = z.batch() - r.contributing;
  if (r.contributing == 0) {
    r.empty = true;
    r.grad = z.zeros_like();
    return r;
  }
  const double inv = 1.0 / double(r.contributing);
  for (std::size_t j = 0; j < z.batch(); ++j)
    if (used[j]) r.loss += per_loss[j] * inv;
  scale_inplace(r.grad, inv);
  return r;
}

}  // namespace detail

/// Supervised-contrastive term over labelled projections. Each anchor j uses every
/// reference not owned by j as its denominator and the same-label ones as positives.
inline LossResult supcon_loss(const Tensor& z, const std::vector<int>& labels, const ReferenceSet& refs,
                              double kappa) {
  if (labels.size() != z.batch()) throw ContractError("supcon_loss: label count does not match batch");
  return detail::contrastive(
      z, refs, kappa, [](std::size_t) { return true; },
      [&](std::size_t j, std::size_t a) { return refs.owner[a] != std::ptrdiff_t(j); },
      [&](std::size_t j, std::size_t a) { return refs.owner[a] != std::ptrdiff_t(j) && refs.labels[a] == labels[j]; });
}

/// Clustering-regularization term: pulls student projections toward confident
/// queue entries carrying the same pseudo-label; the denominator spans the whole queue.
inline LossResult clustering_reg_loss(const Tensor& z, const std::vector<PseudoLabel>& pseudo, const ReferenceSet& refs,
                                      double kappa, double tau, bool include_low_confidence = true) {
  if (pseudo.size() != z.batch()) throw ContractError("clustering_reg_loss: pseudo-label count does not match batch");
  return detail::contrastive(
      z, refs, kappa, [&](std::size_t j) { return include_low_confidence || pseudo[j].mask; },
      [](std::size_t, std::size_t) { return true; },
      [&](std::size_t j, std::size_t a) { return refs.confidence[a] > tau && refs.labels[a] == pseudo[j].label; });
}

struct CompositeLoss {
  double total = 0.0;
  double ce = 0.0;
  double contrastive = 0.0;
  Tensor grad_logits;
  Tensor grad_projection;
  std::size_t ce_samples = 0;
  std::size_t contrastive_samples = 0;
};

/// Cross-entropy on ground truth plus the supervised-contrastive term.
inline CompositeLoss supervised_loss(const Tensor& logits, const std::vector<int>& labels, const Tensor& z,
                                     const ReferenceSet& refs, const LossConfig& cfg) {
  CompositeLoss out;
  auto ce = cross_entropy(logits, labels);
  out.ce = ce.loss;
  out.ce_samples = ce.contributing;
  out.grad_logits = std::move(ce.grad);
  scale_inplace(out.grad_logits, cfg.ce_weight);
  if (cfg.contrastive_weight > 0.0) {
    auto t = supcon_loss(z, labels, refs, cfg.kappa);
    out.contrastive = t.loss;
    out.contrastive_samples = t.contributing;
    out.grad_projection = std::move(t.grad);
    scale_inplace(out.grad_projection, cfg.contrastive_weight);
  } else {
    out.grad_projection = z.zeros_like();
  }
  out.total = cfg.ce_weight * out.ce + cfg.contrastive_weight * out.contrastive;
  return out;
}

/// Masked consistency cross-entropy against pseudo-labels plus the clustering term.
inline CompositeLoss unsupervised_loss(const Tensor& logits, const std::vector<PseudoLabel>& pseudo, const Tensor& z,
                                       const ReferenceSet& refs, const LossConfig& cfg) {
  CompositeLoss out;
  std::vector<int> targets(pseudo.size());
  std::vector<bool> mask(pseudo.size());
  for (std::size_t b = 0; b < pseudo.size(); ++b) {
    targets[b] = pseudo[b].label;
    mask[b] = pseudo[b].mask;
  }
  auto ce = cross_entropy(logits, targets, mask);
  out.ce = ce.loss;
  out.ce_samples = ce.contributing;
  out.grad_logits = std::move(ce.grad);
  scale_inplace(out.grad_logits, cfg.ce_weight);
  if (cfg.contrastive_weight > 0.0) {
    auto c = clustering_reg_loss(z, pseudo, refs, cfg.kappa, cfg.tau, cfg.cluster_low_confidence);
    out.contrastive = c.loss;
    out.contrastive_samples = c.contributing;
    out.grad_projection = std::move(c.grad);
    scale_inplace(out.grad_projection, cfg.contrastive_weight);
  } else {
    out.grad_projection = z.zeros_like();
  }
  out.total = cfg.ce_weight * out.ce + cfg.contrastive_weight * out.contrastive;
  return out;
}

}  // namespace semisfl
