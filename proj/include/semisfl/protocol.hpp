#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "semisfl/config.hpp"
#include "semisfl/data.hpp"
#include "semisfl/frequency.hpp"
#include "semisfl/losses.hpp"
#include "semisfl/memory_queue.hpp"
#include "semisfl/network_model.hpp"
#include "semisfl/optim.hpp"
#include "semisfl/rng.hpp"
#include "semisfl/split_model.hpp"

namespace semisfl {

class BarrierTimeout : public std::runtime_error {
 public:
  explicit BarrierTimeout(std::size_t client)
      : std::runtime_error("barrier timeout: no feature batch from client " + std::to_string(client)), client_(client) {}
  std::size_t client() const { return client_; }

 private:
  std::size_t client_;
};

// ---------------------------------------------------------------------------
// Messages

enum class MessageKind { bottom_down, feature_up, grad_down, bottom_up };

struct WireFormat {
  std::size_t scalar_bytes = 4;
  std::size_t header_bytes = 64;
  std::size_t bytes(std::size_t scalars) const { return scalars * scalar_bytes + header_bytes; }
};

/// Global bottom and its teacher counterpart, sent to each active client.
struct BottomDown {
  std::vector<Tensor> bottom;
  std::vector<Tensor> teacher_bottom;
  std::size_t scalars() const;
};

/// Student features from the strong view and teacher features from the weak view.
struct FeatureUp {
  std::size_t client = 0;
  std::uint64_t iteration = 0;
  Tensor student;
  Tensor teacher;
  std::vector<std::size_t> indices;  // offsets into the client's dataset
  std::size_t scalars() const { return student.size() + teacher.size(); }
};

struct GradDown {
  std::size_t client = 0;
  std::uint64_t iteration = 0;
  Tensor grad;
  std::size_t scalars() const { return grad.size(); }
};

/// Only the student bottom travels up; teacher bottoms stay on the client.
struct BottomUp {
  std::size_t client = 0;
  std::vector<Tensor> bottom;
  std::size_t scalars() const;
};

inline std::size_t count_scalars(const std::vector<Tensor>& ts) {
  std::size_t n = 0;
  for (const auto& t : ts) n += t.size();
  return n;
}
inline std::size_t BottomDown::scalars() const { return count_scalars(bottom) + count_scalars(teacher_bottom); }
inline std::size_t BottomUp::scalars() const { return count_scalars(bottom); }

// ---------------------------------------------------------------------------
// Forward/backward through the split model

struct HeadPass {
  Trace top;
  Trace head;
  Tensor z;  // normalized projections
};

inline HeadPass top_forward(const Network& top, const Network& head, const Tensor& features) {
  HeadPass p{forward(top, features), forward(head, features), {}};
  p.z = l2_normalize_rows(p.head.output());
  return p;
}

struct TopGrads {
  std::vector<Tensor> top;
  std::vector<Tensor> head;
  Tensor features;
};

inline TopGrads top_backward(const Network& top, const Network& head, const HeadPass& pass, const Tensor& dlogits,
                             const Tensor& dz) {
  auto gt = backward(top, pass.top, dlogits);
  auto gh = backward(head, pass.head, l2_normalize_rows_backward(pass.head.output(), dz));
  add_inplace(gt.input, gh.input);
  return {std::move(gt.params), std::move(gh.params), std::move(gt.input)};
}

inline Tensor normalized_projection(const Network& head, const Tensor& features) {
  return l2_normalize_rows(predict(head, features));
}

// ---------------------------------------------------------------------------
// Server-side supervised phase

struct ServerOptimizers {
  OptimizerState bottom, top, head;
};

struct SupervisedContext {
  LossConfig loss;
  double ema_decay = 0.99;
  std::size_t batch = 32;
  bool supervised_contrastive = true;
  AugmentationConfig augmentation;
};

struct SupervisedPhaseResult {
  int iterations = 0;
  double mean_loss = 0.0;
  double mean_ce = 0.0;
  double mean_contrastive = 0.0;
};

inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

inline Tensor augmented_batch(const Dataset& d, const std::vector<std::size_t>& idx, const AugmentationConfig& aug,
                              bool strong, std::mt19937_64& rng) {
  Tensor t = d.batch(idx);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::vector<double> x(t.row(b), t.row(b) + t.row_size());
    x = strong ? augment_strong(std::move(x), d.sample_shape, aug, rng) : augment_weak(std::move(x), d.sample_shape, aug, rng);
    std::copy(x.begin(), x.end(), t.row(b));
  }
  return t;
}

/// K_s iterations of: weak-augmented labelled batch, H + T on the student,
/// momentum SGD on bottom/top/head, teacher EMA, and supervised-level enqueue
/// of the teacher projections.
inline SupervisedPhaseResult supervised_phase(SplitModel& model, TeacherModel& teacher, const Dataset& labeled, int ks,
                                              double lr, MemoryQueue& queue, ServerOptimizers& opt,
                                              const SupervisedContext& ctx, std::mt19937_64& rng) {
  if (labeled.size() == 0) throw ContractError("supervised phase needs a non-empty labelled set");
  SupervisedPhaseResult r;
  opt.bottom.lr = opt.top.lr = opt.head.lr = lr;
  for (int k = 0; k < ks; ++k) {
    const auto idx = sample_without_replacement(labeled.size(), ctx.batch, rng);
    const Tensor x = augmented_batch(labeled, idx, ctx.augmentation, false, rng);
    std::vector<int> y(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) y[b] = labeled.labels[idx[b]];

    const Tensor teacher_z =
        normalized_projection(teacher.model.head, predict(teacher.model.bottom, x));

    ReferenceSet refs;
    if (ctx.supervised_contrastive) {
      refs = to_references(*queue.snapshot());
      for (std::size_t b = 0; b < idx.size(); ++b)
        refs.add(teacher_z.row(b), teacher_z.row_size(), y[b], 1.0, std::ptrdiff_t(b));
    }

    const Trace bottom_trace = forward(model.bottom, x);
    const HeadPass pass = top_forward(model.top, model.head, bottom_trace.output());
    LossConfig lc = ctx.loss;
    if (!ctx.supervised_contrastive) lc.contrastive_weight = 0.0;
    const CompositeLoss loss = supervised_loss(pass.top.output(), y, pass.z, refs, lc);
    TopGrads g = top_backward(model.top, model.head, pass, loss.grad_logits, loss.grad_projection);
    auto gb = backward(model.bottom, bottom_trace, g.features);

    sgd_step(model.bottom.params, gb.params, opt.bottom);
    sgd_step(model.top.params, g.top, opt.top);
    sgd_step(model.head.params, g.head, opt.head);
    ema_update(teacher, model, ctx.ema_decay);

    std::vector<QueueEntry> entries(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b)
      entries[b] = {{teacher_z.row(b), teacher_z.row(b) + teacher_z.row_size()}, y[b], 1.0, QueueLevel::supervised, 0};
    queue.enqueue(entries, QueueLevel::supervised);

    r.mean_loss += loss.total;
    r.mean_ce += loss.ce;
    r.mean_contrastive += loss.contrastive;
    ++r.iterations;
  }
  if (r.iterations) {
    r.mean_loss /= r.iterations;
    r.mean_ce /= r.iterations;
    r.mean_contrastive /= r.iterations;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cross-entity semi-supervised phase

struct ClientState {
  std::size_t id = 0;
  Network bottom;
  Network teacher_bottom;
  OptimizerState opt;
  std::optional<Trace> pending;
  std::uint64_t pending_iteration = 0;

  /// Replaces both local models with the broadcast ones and resets momentum.
  void receive(const BottomDown& msg, const Network& shape_source, double momentum) {
    bottom = shape_source;
    teacher_bottom = shape_source;
    bottom.params = msg.bottom;
    teacher_bottom.params = msg.teacher_bottom;
    opt = OptimizerState(bottom.params, momentum, opt.lr);
    pending.reset();
  }
};

/// Strong view through the student bottom (trace kept for backward), weak view through the teacher bottom.
inline FeatureUp client_forward(ClientState& client, const Dataset& data, const std::vector<std::size_t>& idx,
                                const AugmentationConfig& aug, std::mt19937_64& rng, std::uint64_t iteration) {
  const Tensor weak = augmented_batch(data, idx, aug, false, rng);
  const Tensor strong = augmented_batch(data, idx, aug, true, rng);
  client.pending = forward(client.bottom, strong);
  client.pending_iteration = iteration;
  FeatureUp up;
  up.client = client.id;
  up.iteration = iteration;
  up.student = client.pending->output();
  up.teacher = predict(client.teacher_bottom, weak);
  up.indices = idx;
  return up;
}

struct ClientLoss {
  double total = 0.0, ce = 0.0, cr = 0.0;
  std::size_t masked_in = 0, samples = 0;
};

struct SemiStepResult {
  std::vector<GradDown> grads;                     // one per FeatureUp, in ascending client order
  std::vector<std::vector<QueueEntry>> insertions;  // unsupervised-level teacher projections per client
  std::vector<ClientLoss> losses;
};

/// Pseudo-labels from the teacher top, consistency + clustering loss on the student
/// top/head, one averaged update of the server models over the participating clients,
/// and the per-client feature gradients.
inline SemiStepResult server_semi_step(std::vector<FeatureUp> batches, const std::vector<std::size_t>& expected,
                                       SplitModel& model, const TeacherModel& teacher, const ReferenceSet& refs,
                                       const LossConfig& loss_cfg, bool clustering, double lr, ServerOptimizers& opt) {
  std::sort(batches.begin(), batches.end(), [](const FeatureUp& a, const FeatureUp& b) { return a.client < b.client; });
  for (auto id : expected)
    if (std::none_of(batches.begin(), batches.end(), [&](const FeatureUp& f) { return f.client == id; }))
      throw BarrierTimeout(id);
  if (batches.empty()) throw ContractError("server_semi_step: no participating clients");

  LossConfig lc = loss_cfg;
  if (!clustering) lc.contrastive_weight = 0.0;

  SemiStepResult out;
  std::vector<Tensor> sum_top, sum_head;
  for (const auto& p : model.top.params) sum_top.push_back(p.zeros_like());
  for (const auto& p : model.head.params) sum_head.push_back(p.zeros_like());

  for (const auto& fb : batches) {
    if (fb.student.shape != fb.teacher.shape) throw ContractError("feature batch: student/teacher shape mismatch");
    const Tensor teacher_logits = predict(teacher.model.top, fb.teacher);
    const auto pseudo = pseudo_label(teacher_logits, lc.tau);
    const Tensor teacher_z = normalized_projection(teacher.model.head, fb.teacher);

    const HeadPass pass = top_forward(model.top, model.head, fb.student);
    const CompositeLoss loss = unsupervised_loss(pass.top.output(), pseudo, pass.z, refs, lc);
    TopGrads g = top_backward(model.top, model.head, pass, loss.grad_logits, loss.grad_projection);
    for (std::size_t t = 0; t < sum_top.size(); ++t) add_inplace(sum_top[t], g.top[t]);
    for (std::size_t t = 0; t < sum_head.size(); ++t) add_inplace(sum_head[t], g.head[t]);

    out.grads.push_back({fb.client, fb.iteration, std::move(g.features)});
    std::vector<QueueEntry> entries(pseudo.size());
    for (std::size_t b = 0; b < pseudo.size(); ++b)
      entries[b] = {{teacher_z.row(b), teacher_z.row(b) + teacher_z.row_size()}, pseudo[b].label,
                    pseudo[b].confidence, QueueLevel::unsupervised, 0};
    out.insertions.push_back(std::move(entries));
    ClientLoss cl{loss.total, loss.ce, loss.contrastive, loss.ce_samples, pseudo.size()};
    out.losses.push_back(cl);
  }

  const double inv = 1.0 / double(batches.size());
  for (auto& t : sum_top) scale_inplace(t, inv);
  for (auto& t : sum_head) scale_inplace(t, inv);
  opt.top.lr = opt.head.lr = lr;
  sgd_step(model.top.params, sum_top, opt.top);
  sgd_step(model.head.params, sum_head, opt.head);
  return out;
}

/// Continues backward through the bottom, steps it, then moves the teacher bottom toward it.
inline void client_backward(ClientState& client, const GradDown& msg, double lr, double gamma) {
  if (!client.pending || client.pending_iteration != msg.iteration || msg.client != client.id)
    throw ContractError("client " + std::to_string(client.id) + ": gradient does not match a pending forward pass");
  check_decay(gamma);
  const auto g = backward(client.bottom, *client.pending, msg.grad);
  client.pending.reset();
  client.opt.lr = lr;
  sgd_step(client.bottom.params, g.params, client.opt);
  ema_into(client.teacher_bottom.params, client.bottom.params, gamma);
}

/// Unweighted element-wise mean of the uploaded bottoms, accumulated in ascending client order.
inline std::vector<Tensor> aggregate_bottoms(std::vector<BottomUp> uploads) {
  if (uploads.empty()) throw ContractError("aggregate_bottoms: no uploads");
  std::sort(uploads.begin(), uploads.end(), [](const BottomUp& a, const BottomUp& b) { return a.client < b.client; });
  std::vector<Tensor> mean;
  for (const auto& t : uploads.front().bottom) mean.push_back(t.zeros_like());
  for (const auto& u : uploads) {
    if (u.bottom.size() != mean.size()) throw ContractError("aggregate_bottoms: upload layout mismatch");
    for (std::size_t t = 0; t < mean.size(); ++t) add_inplace(mean[t], u.bottom[t]);
  }
  for (auto& t : mean) scale_inplace(t, 1.0 / double(uploads.size()));
  return mean;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
  double accuracy = 0.0;
  double mask_rate = 0.0;
  double impurity = 0.0;
};

inline Tensor full_logits(const Network& bottom, const Network& top, const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  return predict(top, predict(bottom, d.batch(idx)));
}

/// Test accuracy of the teacher; mask rate (confidence <= tau) and impurity
/// (wrong pseudo-labels among the confident ones) over the unlabelled pool.
inline Evaluation evaluate(const TeacherModel& teacher, const Dataset& test, const Dataset& pool, double tau) {
  Evaluation e;
  if (test.size()) {
    const auto labels = pseudo_label(full_logits(teacher.model.bottom, teacher.model.top, test), 1.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i].label == test.labels[i];
    e.accuracy = double(correct) / double(test.size());
  }
  if (pool.size()) {
    const auto pl = pseudo_label(full_logits(teacher.model.bottom, teacher.model.top, pool), tau);
    std::size_t in = 0, wrong = 0;
    for (std::size_t i = 0; i < pl.size(); ++i)
      if (pl[i].mask) {
        ++in;
        wrong += pl[i].label != pool.labels[i];
      }
    e.mask_rate = double(pool.size() - in) / double(pool.size());
    e.impurity = in ? double(wrong) / double(in) : 0.0;
  }
  return e;
}

// ---------------------------------------------------------------------------
// World and rounds

struct RoundPlan {
  int round = 1;
  std::vector<std::size_t> active;
  int ks = 1;
  int ku = 1;
  double lr = 0.02;
};

struct RoundMetrics {
  int round = 0;
  int ks = 0;
  double lr = 0.0;
  double sup_loss = 0.0;
  double unsup_loss = 0.0;
  double ce_term = 0.0;
  double cr_term = 0.0;
  double accuracy = 0.0;
  double mask_rate = 0.0;
  double impurity = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double round_seconds = 0.0;
  double sim_seconds = 0.0;  // cumulative
};

struct World {
  ExperimentConfig config;
  ArchitectureDescriptor architecture;
  Dataset labeled;
  Dataset pool;
  Dataset test;
  std::vector<std::vector<std::size_t>> partition;  // pool offsets per client
  std::vector<Dataset> client_data;
  std::vector<ClientProfile> profiles;
  std::vector<ClientState> clients;

  SplitModel model;
  TeacherModel teacher;
  MemoryQueue queue;
  FrequencyController controller;
  ServerOptimizers optimizers;
  NetworkModel network;
  LossConfig loss;
  WireFormat wire;
  std::mt19937_64 server_rng;
  int round = 0;
  double sim_time = 0.0;
  std::vector<int> ks_history;

  /// Ids of the clients whose BottomUp carried `bottom` in the last round.
  std::vector<std::size_t> last_uploaders;
  std::vector<std::vector<Tensor>> last_uploads;
};

struct WorldData {
  Dataset train;
  Dataset test;
};

inline WorldData load_data(const DataConfig& d) {
  if (d.source == "idx")
    return {load_idx_dataset(d.idx_train_images, d.idx_train_labels), load_idx_dataset(d.idx_test_images, d.idx_test_labels)};
  return {generate_synthetic(d.classes, d.train_per_class, d.dim, d.separation, derive_seed(d.seed, {1})),
          generate_synthetic(d.classes, d.test_per_class, d.dim, d.separation, derive_seed(d.seed, {2}))};
}

inline World build_world(const ExperimentConfig& cfg, const WorldData& data) {
  if (auto issues = validate(cfg); !issues.empty()) throw ConfigError(issues);
  const auto& d = cfg.data;
  const auto& t = cfg.training;
  const auto& s = cfg.simulation;

  World w;
  w.config = cfg;
  auto labeled_split = split_labeled(data.train, d.labeled, derive_seed(d.seed, {3}));
  w.labeled = std::move(labeled_split.labeled);
  w.pool = std::move(labeled_split.pool);
  w.test = data.test;
  w.partition = dirichlet_partition(w.pool.labels, w.pool.classes, d.clients, d.alpha, derive_seed(d.seed, {4}));
  for (const auto& part : w.partition) w.client_data.push_back(w.pool.subset(part));

  w.architecture = resolve_architecture(cfg, data.train.sample_shape, data.train.classes);
  w.architecture.validate();
  w.model = split(w.architecture, w.architecture.split_index, t.projection_dim, derive_seed(d.seed, {5}));
  w.teacher = make_teacher(w.model, t.ema_decay);
  w.queue = MemoryQueue(t.sup_capacity, t.unsup_capacity, t.eviction_ratio);

  w.controller.smoothing = t.loss_ema;
  w.controller.rho1 = t.rho1;
  w.controller.rho2 = t.rho2;
  w.controller.milestone_period = t.milestone_period;
  w.controller.k_min = t.k_min;
  w.controller.k_max = t.effective_k_max();
  w.controller.ks = t.ks_initial;
  w.controller.validate();

  w.optimizers = {OptimizerState(w.model.bottom.params, t.momentum, t.lr),
                  OptimizerState(w.model.top.params, t.momentum, t.lr),
                  OptimizerState(w.model.head.params, t.momentum, t.lr)};
  w.network.seed = derive_seed(d.seed, {6});
  w.loss.tau = t.tau;
  w.loss.kappa = t.kappa;
  w.loss.validate();
  w.wire = {s.wire_bytes, s.header_bytes};
  w.server_rng = make_stream(d.seed, {7});

  for (std::size_t i = 0; i < d.clients; ++i) {
    const double frac = d.clients > 1 ? double(i) / double(d.clients - 1) : 0.0;
    ClientProfile p;
    p.compute_mean = s.compute_mean_min + (s.compute_mean_max - s.compute_mean_min) * frac;
    p.compute_std = s.compute_std_ratio * p.compute_mean;
    p.up_min_mbps = s.uplink_min_mbps;
    p.up_max_mbps = s.uplink_max_mbps;
    p.down_min_mbps = s.downlink_min_mbps;
    p.down_max_mbps = s.downlink_max_mbps;
    w.profiles.push_back(p);
    ClientState c;
    c.id = i;
    c.opt.lr = t.lr;
    w.clients.push_back(std::move(c));
  }
  return w;
}

inline World build_world(const ExperimentConfig& cfg) { return build_world(cfg, load_data(cfg.data)); }

/// Uniform selection of N_h clients without replacement, returned in ascending order.
inline RoundPlan make_plan(World& w, int h) {
  const auto& t = w.config.training;
  RoundPlan p;
  p.round = h;
  p.active = sample_without_replacement(w.clients.size(), t.clients_per_round, w.server_rng);
  std::sort(p.active.begin(), p.active.end());
  p.ks = w.controller.ks;
  p.ku = t.ku;
  p.lr = cosine_lr(h - 1, {t.lr, t.rounds, t.lr_floor});
  return p;
}

/// One full round: supervised phase, broadcast, K_u feature/gradient exchanges
/// behind a barrier, bottom upload and aggregation, frequency update. Byte counters
/// and the event timeline are accumulated alongside.
inline RoundMetrics simulate_round(World& w, const RoundPlan& plan) {
  const auto& t = w.config.training;
  const auto& s = w.config.simulation;
  const auto& ab = w.config.ablation;
  RoundMetrics m;
  m.round = plan.round;
  m.ks = plan.ks;
  m.lr = plan.lr;
  w.round = plan.round;

  SupervisedContext sctx{w.loss, t.ema_decay, t.labeled_batch, ab.supervised_contrastive, w.config.augmentation};
  auto sup_rng = make_stream(w.config.data.seed, {8, std::uint64_t(plan.round)});
  const auto sup = supervised_phase(w.model, w.teacher, w.labeled, plan.ks, plan.lr, w.queue, w.optimizers, sctx, sup_rng);
  m.sup_loss = sup.mean_loss;
  double clock = double(plan.ks) * s.server_sup_seconds;

  w.last_uploaders.clear();
  w.last_uploads.clear();
  if (!ab.supervised_only && !plan.active.empty()) {
    // Broadcast.
    const BottomDown down{w.model.bottom.params, w.teacher.model.bottom.params};
    std::map<std::size_t, double> ready;
    for (auto i : plan.active) {
      w.clients[i].receive(down, w.model.bottom, t.momentum);
      m.bytes_down += w.wire.bytes(down.scalars());
      ready[i] = clock + transfer_seconds(w.wire.bytes(down.scalars()),
                                          w.network.downlink_mbps(w.profiles[i], i, plan.round, 0));
    }

    double ce_sum = 0.0, cr_sum = 0.0, total_sum = 0.0;
    std::size_t loss_count = 0;
    for (int k = 1; k <= plan.ku; ++k) {
      const std::uint64_t iteration = (std::uint64_t(plan.round) << 32) | std::uint64_t(k);
      const ReferenceSet refs = to_references(*w.queue.snapshot());
      std::vector<FeatureUp> ups;
      double barrier = 0.0;
      for (auto i : plan.active) {
        const Dataset& data = w.client_data[i];
        auto rng = make_stream(w.config.data.seed,
                               {9, s.client_streams_by_id ? i : 0, std::uint64_t(plan.round), std::uint64_t(k)});
        const auto idx = sample_without_replacement(data.size(), t.unlabeled_batch, rng);
        ups.push_back(client_forward(w.clients[i], data, idx, w.config.augmentation, rng, iteration));
        const std::size_t bytes = w.wire.bytes(ups.back().scalars());
        m.bytes_up += bytes;
        const double arrive = ready[i] + w.network.compute_seconds(w.profiles[i], i, plan.round, k) +
                              transfer_seconds(bytes, w.network.uplink_mbps(w.profiles[i], i, plan.round, k));
        barrier = std::max(barrier, arrive);
      }
      auto res = server_semi_step(std::move(ups), plan.active, w.model, w.teacher, refs, w.loss,
                                  ab.clustering_regularization, plan.lr, w.optimizers);
      const double server_done = barrier + double(plan.active.size()) * s.server_semi_seconds;
      for (std::size_t c = 0; c < res.grads.size(); ++c) {
        const auto i = res.grads[c].client;
        w.queue.enqueue(res.insertions[c], QueueLevel::unsupervised);
        const std::size_t bytes = w.wire.bytes(res.grads[c].scalars());
        m.bytes_down += bytes;
        ready[i] = server_done + transfer_seconds(bytes, w.network.downlink_mbps(w.profiles[i], i, plan.round, k));
        client_backward(w.clients[i], res.grads[c], plan.lr, t.ema_decay);
        ce_sum += res.losses[c].ce;
        cr_sum += res.losses[c].cr;
        total_sum += res.losses[c].total;
        ++loss_count;
      }
    }
    m.unsup_loss = total_sum / double(loss_count);
    m.ce_term = ce_sum / double(loss_count);
    m.cr_term = cr_sum / double(loss_count);

    std::vector<BottomUp> uploads;
    double barrier = 0.0;
    for (auto i : plan.active) {
      uploads.push_back({i, w.clients[i].bottom.params});
      const std::size_t bytes = w.wire.bytes(uploads.back().scalars());
      m.bytes_up += bytes;
      barrier = std::max(barrier, ready[i] + transfer_seconds(bytes, w.network.uplink_mbps(w.profiles[i], i, plan.round,
                                                                                             std::uint64_t(plan.ku) + 1)));
      w.last_uploaders.push_back(i);
      w.last_uploads.push_back(uploads.back().bottom);
    }
    w.model.bottom.params = aggregate_bottoms(std::move(uploads));
    clock = barrier;
  }

  if (sup.iterations > 0) {
    const bool adapt = w.config.ablation.adaptive_frequency;
    const int before = w.controller.ks;
    update_frequency(w.controller, sup.mean_loss, plan.round);
    if (!adapt) w.controller.ks = before;
  }
  w.ks_history.push_back(plan.ks);

  const auto ev = evaluate(w.teacher, w.test, w.pool, t.tau);
  m.accuracy = ev.accuracy;
  m.mask_rate = ev.mask_rate;
  m.impurity = ev.impurity;
  m.round_seconds = clock;
  w.sim_time += clock;
  m.sim_seconds = w.sim_time;
  return m;
}

/// Closed-form byte totals for a round: downlink = N_h (2|w_c|) + K_u sum_i |de_i|,
/// uplink = K_u sum_i (|e_i| + |e~_i|) + N_h |w_c|, every message carrying one header.
struct ByteFormula {
  std::uint64_t up = 0;
  std::uint64_t down = 0;
};

inline ByteFormula expected_round_bytes(std::size_t bottom_scalars, std::size_t feature_scalars,
                                        const std::vector<std::size_t>& batch_sizes, int ku, const WireFormat& wire) {
  ByteFormula f;
  for (auto d : batch_sizes) {
    f.down += wire.bytes(2 * bottom_scalars);
    f.down += std::uint64_t(ku) * wire.bytes(d * feature_scalars);
    f.up += std::uint64_t(ku) * wire.bytes(2 * d * feature_scalars);
    f.up += wire.bytes(bottom_scalars);
  }
  return f;
}

}  // namespace semisfl
