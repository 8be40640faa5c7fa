#include <gtest/gtest.h>

#include <set>

#include "semisfl/experiment.hpp"
#include "support.hpp"

using namespace semisfl;
using namespace testsupport;

namespace {

ExperimentConfig small_config(std::size_t clients = 3) {
  ExperimentConfig c;
  c.data.classes = 4;
  c.data.dim = 8;
  c.data.train_per_class = 60;
  c.data.test_per_class = 25;
  c.data.labeled = 24;
  c.data.clients = clients;
  c.data.alpha = 1.0;
  c.training.rounds = 3;
  c.training.clients_per_round = clients;
  c.training.ks_initial = 2;
  c.training.ku = 2;
  c.training.labeled_batch = 8;
  c.training.unlabeled_batch = 8;
  c.training.projection_dim = 8;
  c.training.hidden = 8;
  c.training.sup_capacity = 32;
  c.training.unsup_capacity = 64;
  return c;
}

AugmentationConfig identity_augmentation(AugmentationConfig a) {
  a.weak_noise = 0.0;
  a.strong_noise = 0.0;
  a.strong_ops = 0;
  return a;
}

std::size_t bytes(std::size_t scalars) { return scalars * 4 + 64; }

RoundMetrics one_round(World& w) { return simulate_round(w, make_plan(w, w.round + 1)); }

}  // namespace

TEST(Bytes, RoundTotalsMatchIndependentAccounting) {
  World w = build_world(small_config(3));
  for (int h = 0; h < 3; ++h) {
    const RoundPlan plan = make_plan(w, h + 1);
    const auto m = simulate_round(w, plan);
    const std::size_t wc = w.model.bottom.num_scalars(), f = w.model.feature_size();
    std::uint64_t up = 0, down = 0;
    for (auto i : plan.active) {
      const std::size_t d = std::min<std::size_t>(8, w.client_data[i].size());
      down += bytes(2 * wc) + 2 * bytes(d * f);
      up += 2 * bytes(2 * d * f) + bytes(wc);
    }
    EXPECT_EQ(m.bytes_up, up) << "round " << h + 1;
    EXPECT_EQ(m.bytes_down, down) << "round " << h + 1;
  }
}

TEST(Bytes, FeatureMessageSize) {
  World w = build_world(small_config(1));
  const auto aug = identity_augmentation(w.config.augmentation);
  w.clients[0].receive({w.model.bottom.params, w.teacher.model.bottom.params}, w.model.bottom, 0.9);
  std::mt19937_64 rng(1);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const auto up = client_forward(w.clients[0], w.client_data[0], idx, aug, rng, 7);
  EXPECT_EQ(up.student.batch(), 5u);
  EXPECT_EQ(up.teacher.batch(), 5u);
  EXPECT_EQ(w.wire.bytes(up.scalars()), 2 * 5 * w.model.feature_size() * 4 + 64);
  EXPECT_EQ(max_abs_diff(up.student, up.teacher), 0.0);
}

TEST(Timeline, TransferUnitConvention) {
  EXPECT_DOUBLE_EQ(transfer_seconds(1000000, 8.0), 1.0);
  EXPECT_DOUBLE_EQ(transfer_seconds(0, 3.0), 0.0);
  EXPECT_THROW(transfer_seconds(10, 0.0), ContractError);
}

TEST(Timeline, RoundDurationIsCriticalPath) {
  World w = build_world(small_config(2));
  const RoundPlan plan = make_plan(w, 1);
  const auto m = simulate_round(w, plan);
  const auto& s = w.config.simulation;
  const std::size_t wc = w.model.bottom.num_scalars(), f = w.model.feature_size();
  const double start = plan.ks * s.server_sup_seconds;
  std::vector<double> ready(2);
  for (auto i : plan.active)
    ready[i] = start + transfer_seconds(bytes(2 * wc), w.network.downlink_mbps(w.profiles[i], i, 1, 0));
  for (int k = 1; k <= plan.ku; ++k) {
    double barrier = 0.0;
    for (auto i : plan.active) {
      const double t = ready[i] + w.network.compute_seconds(w.profiles[i], i, 1, k) +
                       transfer_seconds(bytes(2 * 8 * f), w.network.uplink_mbps(w.profiles[i], i, 1, k));
      barrier = std::max(barrier, t);
    }
    for (auto i : plan.active)
      ready[i] = barrier + 2 * s.server_semi_seconds +
                 transfer_seconds(bytes(8 * f), w.network.downlink_mbps(w.profiles[i], i, 1, k));
  }
  double end = 0.0;
  for (auto i : plan.active)
    end = std::max(end, ready[i] + transfer_seconds(bytes(wc), w.network.uplink_mbps(w.profiles[i], i, 1, 3)));
  EXPECT_NEAR(m.round_seconds, end, 1e-12);
  EXPECT_NEAR(m.sim_seconds, end, 1e-12);
}

TEST(Timeline, BarrierWaitsForSlowerClient) {
  ClientProfile p;
  World w = build_world(small_config(2));
  w.config.simulation.server_sup_seconds = 0.0;
  w.config.simulation.server_semi_seconds = 0.0;
  w.profiles[0] = w.profiles[1] = p;
  w.config.training.ku = 1;
  const RoundPlan plan = make_plan(w, 1);
  const auto m = simulate_round(w, plan);
  EXPECT_GE(m.round_seconds, std::max(w.network.compute_seconds(p, 0, 1, 1), w.network.compute_seconds(p, 1, 1, 1)));
}

TEST(Timeline, MonotoneInComputeMean) {
  const auto cfg = small_config(3);
  double prev = 0.0;
  for (double mean : {0.01, 0.05, 0.2, 1.0, 5.0}) {
    World w = build_world(cfg);
    w.profiles[1].compute_mean = mean;
    w.profiles[1].compute_std = 0.2 * mean;
    const double t = one_round(w).round_seconds;
    EXPECT_GE(t, prev) << mean;
    prev = t;
  }
}

TEST(Timeline, TruncatedNormalQuantile) {
  EXPECT_NEAR(truncated_normal_quantile(1.0, 0.1, 0.5), 1.0, 1e-12);
  EXPECT_GT(truncated_normal_quantile(0.01, 1.0, 1e-9), 0.0);
  EXPECT_LT(truncated_normal_quantile(1.0, 0.2, 0.3), truncated_normal_quantile(1.5, 0.2, 0.3));
  EXPECT_EQ(truncated_normal_quantile(2.0, 0.0, 0.9), 2.0);
  EXPECT_THROW(truncated_normal_quantile(0.0, 1.0, 0.5), ContractError);
}

TEST(Round, IdenticalClientsGiveIdenticalBottoms) {
  auto cfg = small_config(2);
  cfg.simulation.client_streams_by_id = false;
  World w = build_world(cfg);
  w.client_data[1] = w.client_data[0];
  one_round(w);
  ASSERT_EQ(w.last_uploads.size(), 2u);
  for (std::size_t t = 0; t < w.last_uploads[0].size(); ++t) {
    EXPECT_EQ(w.last_uploads[0][t].values, w.last_uploads[1][t].values);
    EXPECT_EQ(w.model.bottom.params[t].values, w.last_uploads[0][t].values);
  }
}

TEST(Round, UploadsCarryOnlyStudentBottoms) {
  World w = build_world(small_config(3));
  one_round(w);
  ASSERT_EQ(w.last_uploaders.size(), 3u);
  for (std::size_t c = 0; c < w.last_uploaders.size(); ++c) {
    const auto& client = w.clients[w.last_uploaders[c]];
    double diff_teacher = 0.0;
    for (std::size_t t = 0; t < client.bottom.params.size(); ++t) {
      EXPECT_EQ(w.last_uploads[c][t].values, client.bottom.params[t].values);
      diff_teacher = std::max(diff_teacher, max_abs_diff(w.last_uploads[c][t], client.teacher_bottom.params[t]));
    }
    EXPECT_GT(diff_teacher, 0.0);
  }
  BottomUp up{0, w.model.bottom.params};
  EXPECT_EQ(up.scalars(), w.model.bottom.num_scalars());
}

TEST(Round, SameSeedSameMetrics) {
  auto run = [] {
    World w = build_world(small_config(3));
    std::string out;
    for (int h = 0; h < 3; ++h) out += csv_row(one_round(w)) + "\n";
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Round, ActiveSetSampledWithoutReplacement) {
  auto cfg = small_config(5);
  cfg.training.clients_per_round = 3;
  World w = build_world(cfg);
  std::set<std::size_t> seen;
  for (int h = 1; h <= 20; ++h) {
    const auto p = make_plan(w, 1);
    ASSERT_EQ(p.active.size(), 3u);
    EXPECT_TRUE(std::is_sorted(p.active.begin(), p.active.end()));
    EXPECT_EQ(std::set<std::size_t>(p.active.begin(), p.active.end()).size(), 3u);
    seen.insert(p.active.begin(), p.active.end());
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(SupervisedPhase, ZeroIterationsLeaveModelUnchanged) {
  World w = build_world(small_config());
  const auto model = w.model;
  const auto teacher = w.teacher.model;
  std::mt19937_64 rng(1);
  const auto r = supervised_phase(w.model, w.teacher, w.labeled, 0, 0.1, w.queue, w.optimizers, SupervisedContext{}, rng);
  EXPECT_EQ(r.iterations, 0);
  for (std::size_t t = 0; t < model.bottom.params.size(); ++t) {
    EXPECT_EQ(w.model.bottom.params[t].values, model.bottom.params[t].values);
    EXPECT_EQ(w.teacher.model.bottom.params[t].values, teacher.bottom.params[t].values);
  }
  EXPECT_EQ(w.queue.size(), 0u);
}

TEST(SupervisedPhase, UnitDecayKeepsTeacherConstant) {
  World w = build_world(small_config());
  w.teacher.decay = 1.0;
  const auto teacher = w.teacher.model;
  SupervisedContext ctx;
  ctx.ema_decay = 1.0;
  ctx.batch = 8;
  std::mt19937_64 rng(1);
  supervised_phase(w.model, w.teacher, w.labeled, 5, 0.1, w.queue, w.optimizers, ctx, rng);
  for (std::size_t t = 0; t < teacher.top.params.size(); ++t)
    EXPECT_EQ(w.teacher.model.top.params[t].values, teacher.top.params[t].values);
  EXPECT_EQ(w.queue.stats().supervised, 40u);
  EXPECT_THROW(supervised_phase(w.model, w.teacher, Dataset{{8}, {}, {}, 4}, 1, 0.1, w.queue, w.optimizers, ctx, rng),
               ContractError);
}

TEST(SupervisedPhase, SingleStepByHand) {
  Network bottom({1}, {Linear{1, 1, false}});
  bottom.params[0] = Tensor({1, 1}, {0.5});
  Network top({1}, {Linear{1, 2, false}});
  top.params[0] = Tensor({2, 1}, {1.0, -1.0});
  Network head = make_projection_head({1}, 2);
  std::mt19937_64 init(3);
  head.init(init);
  SplitModel m = assemble(bottom, top, head);
  TeacherModel t = make_teacher(m, 0.5);
  ServerOptimizers opt{OptimizerState(m.bottom.params, 0.9, 0.1), OptimizerState(m.top.params, 0.9, 0.1),
                       OptimizerState(m.head.params, 0.9, 0.1)};
  SupervisedContext ctx;
  ctx.supervised_contrastive = false;
  ctx.ema_decay = 0.5;
  ctx.augmentation.weak_noise = 0.0;
  MemoryQueue q;
  std::mt19937_64 rng(1);
  supervised_phase(m, t, Dataset{{1}, {2.0}, {0}, 2}, 1, 0.1, q, opt, ctx, rng);
  const double p0 = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(m.bottom.params[0][0], 0.5 - 0.1 * 4.0 * (p0 - 1.0), 1e-15);
  EXPECT_NEAR(m.top.params[0][0], 1.0 - 0.1 * (p0 - 1.0), 1e-15);
  EXPECT_NEAR(m.top.params[0][1], -1.0 - 0.1 * (1.0 - p0), 1e-15);
  EXPECT_NEAR(t.model.bottom.params[0][0], 0.5 * 0.5 + 0.5 * m.bottom.params[0][0], 1e-15);
}

namespace {

struct SemiFixture {
  World w = build_world(small_config(2));
  std::vector<FeatureUp> ups;

  explicit SemiFixture(std::size_t clients = 2) {
    const BottomDown down{w.model.bottom.params, w.teacher.model.bottom.params};
    for (std::size_t i = 0; i < clients; ++i) {
      w.clients[i].receive(down, w.model.bottom, 0.0);
      std::mt19937_64 rng(10 + i);
      ups.push_back(client_forward(w.clients[i], w.client_data[i], {0, 1, 2, 3}, w.config.augmentation, rng, 1));
    }
  }

  // d/d params of the per-client unsupervised loss, computed outside the server step.
  std::pair<std::vector<Tensor>, std::vector<Tensor>> client_grads(const FeatureUp& up, const ReferenceSet& refs,
                                                                   const LossConfig& lc) const {
    const auto pseudo = pseudo_label(predict(w.teacher.model.top, up.teacher), lc.tau);
    const auto pass = top_forward(w.model.top, w.model.head, up.student);
    const auto loss = unsupervised_loss(pass.top.output(), pseudo, pass.z, refs, lc);
    auto g = top_backward(w.model.top, w.model.head, pass, loss.grad_logits, loss.grad_projection);
    return {g.top, g.head};
  }
};

ServerOptimizers plain_sgd(const SplitModel& m, double lr) {
  return {OptimizerState(m.bottom.params, 0.0, lr), OptimizerState(m.top.params, 0.0, lr),
          OptimizerState(m.head.params, 0.0, lr)};
}

}  // namespace

TEST(SemiStep, SingleClientUpdateIsItsGradient) {
  SemiFixture f(1);
  LossConfig lc;
  lc.tau = 0.3;
  std::mt19937_64 rng(2);
  const auto refs = random_refs(20, 8, 4, rng);
  const auto [gt, gh] = f.client_grads(f.ups[0], refs, lc);
  const auto before = f.w.model;
  auto opt = plain_sgd(f.w.model, 0.1);
  server_semi_step({f.ups[0]}, {0}, f.w.model, f.w.teacher, refs, lc, true, 0.1, opt);
  for (std::size_t t = 0; t < gt.size(); ++t)
    for (std::size_t i = 0; i < gt[t].size(); ++i)
      EXPECT_NEAR(f.w.model.top.params[t][i], before.top.params[t][i] - 0.1 * gt[t][i], 1e-15);
  for (std::size_t t = 0; t < gh.size(); ++t)
    for (std::size_t i = 0; i < gh[t].size(); ++i)
      EXPECT_NEAR(f.w.model.head.params[t][i], before.head.params[t][i] - 0.1 * gh[t][i], 1e-15);
}

TEST(SemiStep, TwoClientUpdateIsMeanGradient) {
  SemiFixture f(2);
  LossConfig lc;
  lc.tau = 0.3;
  std::mt19937_64 rng(3);
  const auto refs = random_refs(20, 8, 4, rng);
  const auto g0 = f.client_grads(f.ups[0], refs, lc).first;
  const auto g1 = f.client_grads(f.ups[1], refs, lc).first;
  const auto before = f.w.model;
  auto opt = plain_sgd(f.w.model, 0.05);
  const auto res = server_semi_step({f.ups[1], f.ups[0]}, {0, 1}, f.w.model, f.w.teacher, refs, lc, true, 0.05, opt);
  for (std::size_t t = 0; t < g0.size(); ++t)
    for (std::size_t i = 0; i < g0[t].size(); ++i)
      EXPECT_NEAR(f.w.model.top.params[t][i], before.top.params[t][i] - 0.05 * 0.5 * (g0[t][i] + g1[t][i]), 1e-15);
  ASSERT_EQ(res.grads.size(), 2u);
  EXPECT_EQ(res.grads[0].client, 0u);
  EXPECT_EQ(res.grads[0].grad.shape, f.ups[0].student.shape);
  EXPECT_EQ(res.insertions[1].size(), 4u);
}

TEST(SemiStep, EverythingMaskedAndEmptyQueueIsInert) {
  SemiFixture f(2);
  LossConfig lc;
  lc.tau = 0.999999;
  const auto before = f.w.model;
  auto opt = plain_sgd(f.w.model, 0.1);
  const auto res = server_semi_step(f.ups, {0, 1}, f.w.model, f.w.teacher, ReferenceSet{}, lc, true, 0.1, opt);
  for (const auto& g : res.grads)
    for (double v : g.grad.values) EXPECT_EQ(v, 0.0);
  for (std::size_t t = 0; t < before.top.params.size(); ++t)
    EXPECT_EQ(f.w.model.top.params[t].values, before.top.params[t].values);
  for (std::size_t t = 0; t < before.head.params.size(); ++t)
    EXPECT_EQ(f.w.model.head.params[t].values, before.head.params[t].values);
}

TEST(SemiStep, MissingClientTimesOut) {
  SemiFixture f(2);
  auto opt = plain_sgd(f.w.model, 0.1);
  try {
    server_semi_step({f.ups[0]}, {0, 1}, f.w.model, f.w.teacher, ReferenceSet{}, LossConfig{}, true, 0.1, opt);
    FAIL() << "expected a barrier timeout";
  } catch (const BarrierTimeout& e) {
    EXPECT_EQ(e.client(), 1u);
  }
}

TEST(ClientBackward, RejectsStaleOrForeignGradients) {
  SemiFixture f(2);
  GradDown g{0, 2, f.ups[0].student.zeros_like()};
  EXPECT_THROW(client_backward(f.w.clients[0], g, 0.1, 0.9), ContractError);
  g.iteration = 1;
  g.client = 1;
  EXPECT_THROW(client_backward(f.w.clients[0], g, 0.1, 0.9), ContractError);
  g.client = 0;
  EXPECT_NO_THROW(client_backward(f.w.clients[0], g, 0.1, 0.9));
  EXPECT_THROW(client_backward(f.w.clients[0], g, 0.1, 0.9), ContractError);
}

TEST(ClientBackward, ZeroGradientOnlyMovesTeacher) {
  SemiFixture f(1);
  auto& c = f.w.clients[0];
  for (auto& p : c.teacher_bottom.params)
    for (double& v : p.values) v += 1.0;
  const auto bottom = c.bottom.params;
  const auto teacher = c.teacher_bottom.params;
  client_backward(c, {0, 1, f.ups[0].student.zeros_like()}, 0.1, 0.9);
  for (std::size_t t = 0; t < bottom.size(); ++t)
    for (std::size_t i = 0; i < bottom[t].size(); ++i) {
      EXPECT_EQ(c.bottom.params[t][i], bottom[t][i]);
      EXPECT_NEAR(c.teacher_bottom.params[t][i], teacher[t][i] - 0.1 * (teacher[t][i] - bottom[t][i]), 1e-15);
    }
}

TEST(ClientBackward, UnitDecayFreezesTeacher) {
  SemiFixture f(1);
  auto& c = f.w.clients[0];
  const auto teacher = c.teacher_bottom.params;
  std::mt19937_64 rng(5);
  client_backward(c, {0, 1, random_tensor(f.ups[0].student.shape, rng)}, 0.1, 1.0);
  for (std::size_t t = 0; t < teacher.size(); ++t) EXPECT_EQ(c.teacher_bottom.params[t].values, teacher[t].values);
}

TEST(ClientBackward, TransportedGradientMatchesFullModel) {
  SemiFixture f(1);
  auto& c = f.w.clients[0];
  const Network full = assemble_network(c.bottom, f.w.model.top);
  std::mt19937_64 rng(6);
  const auto readout = quadratic_readout({4, 4}, rng);
  const Trace top_trace = forward(f.w.model.top, f.ups[0].student);
  const Tensor dfeat = backward(f.w.model.top, top_trace, readout(top_trace.output()).second).input;
  const Trace& pending = *c.pending;
  const auto split_grads = backward(c.bottom, pending, dfeat);
  const auto full_grads = backward(full, forward(full, pending.activations.front()),
                                   readout(predict(full, pending.activations.front())).second);
  for (std::size_t t = 0; t < split_grads.params.size(); ++t)
    EXPECT_LE(max_abs_diff(split_grads.params[t], full_grads.params[t]), 1e-12);
}

TEST(Aggregate, Examples) {
  const std::vector<Tensor> zero{Tensor({2}, 0.0)}, two{Tensor({2}, 2.0)};
  const auto m = aggregate_bottoms({{0, zero}, {1, two}});
  EXPECT_EQ(m[0].values, (std::vector<double>{1.0, 1.0}));
  const auto same = aggregate_bottoms({{0, two}, {1, two}, {2, two}, {3, two}});
  EXPECT_EQ(same[0].values, two[0].values);
  EXPECT_THROW(aggregate_bottoms({}), ContractError);
  EXPECT_THROW(aggregate_bottoms({{0, zero}, {1, {}}}), ContractError);
}

TEST(Aggregate, MatchesIndependentMean) {
  std::mt19937_64 rng(7);
  std::vector<BottomUp> ups;
  for (std::size_t i = 0; i < 5; ++i) ups.push_back({4 - i, {random_tensor({3, 4}, rng), random_tensor({4}, rng)}});
  const auto m = aggregate_bottoms(ups);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < m[t].size(); ++k) {
      double s = 0.0;
      for (const auto& u : ups) s += u.bottom[t][k];
      EXPECT_NEAR(m[t][k], s / 5.0, 1e-12);
    }
}

TEST(Evaluate, UnitThresholdMasksEverything) {
  World w = build_world(small_config());
  const auto e = evaluate(w.teacher, w.test, w.pool, 1.0);
  EXPECT_EQ(e.mask_rate, 1.0);
  EXPECT_EQ(e.impurity, 0.0);
}

TEST(Evaluate, UntrainedTeacherIsChance) {
  std::vector<double> acc;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = small_config();
    cfg.data.seed = seed;
    cfg.data.test_per_class = 100;
    World w = build_world(cfg);
    acc.push_back(evaluate(w.teacher, w.test, w.pool, 0.95).accuracy);
  }
  EXPECT_NEAR(std::accumulate(acc.begin(), acc.end(), 0.0) / 10.0, 0.25, 0.05);
}

TEST(Evaluate, PerfectTeacher) {
  const auto test = generate_synthetic(4, 50, 4, 20.0, 3);
  Network bottom({4}, {Linear{4, 4, false}});
  bottom.params[0] = Tensor({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  Network top({4}, {Linear{4, 4, false}});
  top.params[0] = bottom.params[0];
  const auto m = assemble(bottom, top, make_projection_head({4}, 2));
  const auto e = evaluate(make_teacher(m, 0.9), test, test, 0.5);
  EXPECT_EQ(e.accuracy, 1.0);
  EXPECT_EQ(e.mask_rate, 0.0);
  EXPECT_EQ(e.impurity, 0.0);
}

TEST(Frequency, RuleTable) {
  EXPECT_EQ(next_frequency(50, 0.005, true, 0.01, 0.05, 1, 800), 25);
  EXPECT_EQ(next_frequency(50, 0.06, true, 0.01, 0.05, 1, 800), 100);
  EXPECT_EQ(next_frequency(50, 0.03, true, 0.01, 0.05, 1, 800), 50);
  EXPECT_EQ(next_frequency(50, 0.005, false, 0.01, 0.05, 1, 800), 50);
  EXPECT_EQ(next_frequency(50, 0.01, true, 0.01, 0.05, 1, 800), 50);
  EXPECT_EQ(next_frequency(50, 0.05, true, 0.01, 0.05, 1, 800), 50);
  EXPECT_EQ(next_frequency(1, 0.0, true, 0.01, 0.05, 1, 800), 1);
  EXPECT_EQ(next_frequency(600, 1.0, true, 0.01, 0.05, 1, 800), 800);
}

TEST(Frequency, DeltaNeedsTwentyEstimates) {
  FrequencyController c;
  for (int h = 1; h <= 19; ++h) {
    update_frequency(c, 10.0 / h, h);
    EXPECT_FALSE(c.delta().has_value());
    EXPECT_EQ(c.ks, 50);
  }
  update_frequency(c, 0.5, 20);
  ASSERT_TRUE(c.delta().has_value());
  // oracle: EMA with weight 0.3, then the two 10-round window means
  std::vector<double> est;
  double e = 0.0;
  for (int h = 1; h <= 20; ++h) {
    const double l = h < 20 ? 10.0 / h : 0.5;
    e = h == 1 ? l : 0.3 * l + 0.7 * e;
    est.push_back(e);
  }
  const double prev = std::accumulate(est.begin(), est.begin() + 10, 0.0) / 10.0;
  const double last = std::accumulate(est.begin() + 10, est.end(), 0.0) / 10.0;
  EXPECT_NEAR(*c.delta(), std::abs(last - prev), 1e-12);
}

TEST(Frequency, StaysOnPowerOfTwoLadder) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> jump(0.0, 0.2);
  for (int k0 : {1, 8, 64}) {
    std::set<int> ladder;
    for (int j = 0; j < 12; ++j) {
      ladder.insert(std::clamp(k0 << j, 1, 16 * k0));
      ladder.insert(std::max(1, k0 >> j));
    }
    FrequencyController c;
    c.ks = k0;
    c.k_max = 16 * k0;
    for (int h = 1; h <= 400; ++h) {
      const int ks = update_frequency(c, rng() % 3 == 0 ? jump(rng) : 1.0, h);
      EXPECT_TRUE(ladder.count(ks)) << k0 << " -> " << ks;
      EXPECT_GE(ks, 1);
      EXPECT_LE(ks, 16 * k0);
    }
  }
}
