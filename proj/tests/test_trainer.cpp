#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "tvl/trainer.hpp"

namespace tvl {
namespace {

// Labels are the argmax of a fixed random linear map of the features, so
// the task is learnable by a small network.
Dataset synthetic(std::uint64_t seed, std::size_t n, std::size_t width = 8) {
  SeededRng rng(seed);
  Matrix map(kNumClasses, width);
  SeededRng map_rng(99);
  for (double& v : map.data()) v = map_rng.uniform(-1, 1);
  Dataset d;
  d.name = "synthetic";
  d.features = Matrix(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : d.features.row(i)) v = rng.uniform(0, 1);
    d.labels.push_back(static_cast<std::uint8_t>(argmax(matvec(map, d.features.row(i)))));
  }
  return d;
}

TrainConfig small_config() {
  TrainConfig c;
  c.depth = 5;
  c.hidden_width = 12;
  c.epochs = 1;
  c.batch_size = 100;
  c.learning_rate = 0.1;
  c.seed = 3;
  return c;
}

TEST(Sampling, IterationsPerEpoch) {
  TrainConfig c;
  EXPECT_EQ(c.iterations_per_epoch(60000), 600u);
  EXPECT_EQ(c.iterations_per_epoch(50), 1u);
  c.batch_size = 64;
  EXPECT_EQ(c.iterations_per_epoch(1000), 15u);
}

TEST(Sampling, DistinctIndicesInRange) {
  SeededRng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto idx = sample_minibatch(rng, 50, 20);
    ASSERT_EQ(idx.size(), 20u);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
    for (auto i : idx) EXPECT_LT(i, 50u);
  }
  EXPECT_THROW(sample_minibatch(rng, 5, 6), std::invalid_argument);
  EXPECT_THROW(sample_minibatch(rng, 0, 0), std::invalid_argument);
}

TEST(Sampling, FullBatchIsPermutation) {
  SeededRng rng(2);
  auto idx = sample_minibatch(rng, 30, 30);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(idx[i], i);
}

TEST(Sampling, RoughlyUniformCoverage) {
  SeededRng rng(3);
  std::vector<int> hits(20, 0);
  for (int trial = 0; trial < 20000; ++trial)
    for (auto i : sample_minibatch(rng, 20, 5)) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h, 5000, 300);
}

TEST(Sampling, ReplayAndShuffleMode) {
  MinibatchSampler a(SeededRng(4), 100, 10, Sampling::Random);
  MinibatchSampler b(SeededRng(4), 100, 10, Sampling::Random);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.next(), b.next());

  MinibatchSampler s(SeededRng(5), 30, 10, Sampling::Shuffle);
  std::vector<std::size_t> epoch;
  for (int i = 0; i < 3; ++i) {
    const auto part = s.next();
    epoch.insert(epoch.end(), part.begin(), part.end());
  }
  std::sort(epoch.begin(), epoch.end());
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(epoch[i], i);
  EXPECT_THROW(MinibatchSampler(SeededRng(1), 10, 11, Sampling::Random), std::invalid_argument);
}

TEST(SgdStep, SubtractsScaledGradient) {
  SeededRng rng(6);
  NetworkParams p = testing::random_params(rng, ArchKind::ResNet, 3, 2, 2, 2);
  const NetworkParams before = p;
  GradientSet g = zeros_like(p);
  for_each_scalar(g, [](double& v) { v = 1.0; });
  sgd_step(p, g, 0.25);
  Vector a, b;
  for_each_scalar(p, [&](double v) { a.push_back(v); });
  for_each_scalar(before, [&](double v) { b.push_back(v); });
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i] - 0.25);
}

TEST(SgdStep, NonFiniteGradientAbortsWithoutTouchingParams) {
  SeededRng rng(7);
  NetworkParams p = testing::random_params(rng, ArchKind::ResNet, 3, 2, 2, 2);
  const NetworkParams before = p;
  GradientSet g = zeros_like(p);
  g.weights[1](0, 0) = std::nan("");
  EXPECT_THROW(sgd_step(p, g, 0.1), TrainingDiverged);
  EXPECT_EQ(p, before);
}

TEST(SgdStep, FinalTauStaysDependent) {
  SeededRng rng(8);
  NetworkParams p = testing::random_params(rng, ArchKind::ResNet, 4, 2, 2, 2);
  const auto mode = RegularizationMode::final_tau(1.0);
  p.tau = apply_final_tau_dependency(p.tau, 1.0);
  GradientSet g = zeros_like(p);
  g.tau = {1.0, -2.0, 0.0};
  sgd_step(p, g, 0.1, mode);
  EXPECT_NEAR(p.tau[0] + p.tau[1] + p.tau[2], 1.0, 1e-15);
}

TEST(Projection, ClampsAtFloor) {
  EXPECT_EQ(project_tau_positive(Vector{-1.0, 0.5, 1e-6}, 1e-4), (Vector{1e-4, 0.5, 1e-4}));
  EXPECT_EQ(project_tau_positive(Vector{0.3, 0.2}, 1e-4), (Vector{0.3, 0.2}));
  EXPECT_THROW(project_tau_positive(Vector{1.0}, 0.0), std::invalid_argument);
}

NetworkParams net_with_tau(Vector tau) {
  SeededRng rng(9);
  NetworkParams p = testing::random_params(rng, ArchKind::ResNet, tau.size() + 1, 4, 3, 3);
  p.tau = std::move(tau);
  return p;
}

TEST(Prune, RemovesSmallMiddleStep) {
  const NetworkParams p = net_with_tau({0.9, 0.0, 0.1});
  const PruneResult r = prune_check(p, 0.01);
  EXPECT_EQ(r.pruned, (std::vector<std::size_t>{1}));
  EXPECT_EQ(r.params.tau, (Vector{0.9, 0.1}));
  EXPECT_EQ(r.params.tau_ids, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(r.params.arch.depth, 3u);
  EXPECT_EQ(r.params.weights[1], p.weights[2]);
  EXPECT_EQ(r.params.weights[2], p.weights[3]);
}

TEST(Prune, NothingBelowThreshold) {
  const NetworkParams p = net_with_tau({0.25, 0.25, 0.25, 0.25});
  const PruneResult r = prune_check(p, 0.01);
  EXPECT_TRUE(r.pruned.empty());
  EXPECT_EQ(r.params, p);
}

TEST(Prune, FirstStepNeverAndLastOnlyWhenUnprotected) {
  const NetworkParams p = net_with_tau({1e-9, 0.5, 0.5, 1e-9});
  EXPECT_EQ(prune_check(p, 0.01).pruned, (std::vector<std::size_t>{3}));
  EXPECT_TRUE(prune_check(p, 0.01, true).pruned.empty());
  // Threshold is strict.
  EXPECT_TRUE(prune_check(net_with_tau({0.5, 0.25, 0.25}), 0.25).pruned.empty());
}

TEST(Prune, ZeroStepRemovalPreservesOutputsExactly) {
  SeededRng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkParams p = testing::random_params(rng, ArchKind::ResNet, 7, 5, 4, 3);
    const std::size_t k = 1 + rng.index(5);
    p.tau[k] = 0.0;
    const PruneResult r = prune_check(p, 1e-12);
    ASSERT_EQ(r.pruned, (std::vector<std::size_t>{k}));
    Vector x(5);
    for (double& v : x) v = rng.uniform(-1, 1);
    EXPECT_EQ(forward(r.params, x).logits(), forward(p, x).logits());
    EXPECT_EQ(count_params(p) - count_params(r.params), 4u * 4 + 4 + 1);
  }
}

TEST(Prune, DepthNeverFallsBelowTwo) {
  SeededRng rng(11);
  for (std::size_t depth = 2; depth <= 7; ++depth) {
    NetworkParams p = testing::random_params(rng, ArchKind::ResNet, depth, 5, 4, 3);
    std::fill(p.tau.begin() + 1, p.tau.end(), 0.0);
    const PruneResult r = prune_check(p, 0.5);
    EXPECT_EQ(r.pruned.size(), depth - 2);
    EXPECT_EQ(r.params.arch.depth, 2u);
    EXPECT_EQ(r.params.tau.size(), 1u);
    const Vector x{0.3, -0.2, 0.7, 0.1, -0.9};
    EXPECT_EQ(forward(r.params, x).logits(), forward(p, x).logits());
    EXPECT_TRUE(prune_check(r.params, 0.5).pruned.empty());
  }
}

TEST(Prune, ReferenceWidthRemovesTenThousandOneHundredOne) {
  NetworkParams p = init_params(Architecture{}, 1.0, 0);
  p.tau[3] = 0.0;
  const PruneResult r = prune_check(p, 0.01);
  EXPECT_EQ(count_params(p) - count_params(r.params), 10101u);
  EXPECT_THROW(prune_check(init_params(Architecture{ArchKind::Fractional}, 1.0, 0), 0.01),
               std::invalid_argument);
}

TEST(EvaluateAccuracy, CountsArgmaxHits) {
  Architecture arch{ArchKind::ResNet, 2, 2, 2, 10, Activation::ReLU};
  NetworkParams p = init_params(arch, 1.0, 0);
  p.weights[0] = Matrix(2, 2, {1, 0, 0, 1});
  p.weights[1] = Matrix(10, 2);
  p.weights[1](0, 0) = 1.0;
  p.weights[1](1, 1) = 1.0;
  Dataset d;
  d.features = Matrix(4, 2, {1, 0, 0, 1, 1, 0, 0, 1});
  d.labels = {0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(evaluate_accuracy(p, d), 0.75);
  EXPECT_THROW(evaluate_accuracy(p, Dataset{}), std::invalid_argument);
}

TEST(RunTraining, OneEpochIterationCountAndRecords) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  std::vector<TauRecord> taus;
  TrainObserver obs;
  obs.on_tau = [&](const TauRecord& r) { taus.push_back(r); };
  const TrainResult r = run_training(c, train, test, obs);
  EXPECT_EQ(r.iterations, 6u);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.metrics[0].iteration, 6u);
  EXPECT_EQ(r.metrics[0].epoch, 1u);
  EXPECT_EQ(r.metrics[0].active_layers, 5u);
  ASSERT_EQ(taus.size(), 1u);
  EXPECT_EQ(taus[0].iteration, 0u);
  EXPECT_EQ(taus[0].tau, Vector(4, 0.25));
}

TEST(RunTraining, ReplayIsDeterministic) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  c.epochs = 3;
  c.reg = RegularizationMode::l1(0.01);
  const TrainResult a = run_training(c, train, test);
  const TrainResult b = run_training(c, train, test);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].train_loss.total, b.metrics[i].train_loss.total);
    EXPECT_EQ(a.metrics[i].test_accuracy, b.metrics[i].test_accuracy);
  }
  c.seed = 4;
  EXPECT_NE(run_training(c, train, test).params, a.params);
}

TEST(RunTraining, LearnsSyntheticTask) {
  const Dataset train = synthetic(1, 1000), test = synthetic(2, 500);
  TrainConfig c = small_config();
  c.epochs = 40;
  c.batch_size = 50;
  c.learning_rate = 0.2;
  const TrainResult r = run_training(c, train, test);
  EXPECT_LT(r.metrics.back().train_loss.data_loss, r.metrics.front().train_loss.data_loss);
  EXPECT_GT(r.metrics.back().test_accuracy, 0.5);
}

TEST(RunTraining, FixedTauNeverMoves) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  c.epochs = 2;
  c.fixed_tau = true;
  c.reg = RegularizationMode::l1(0.5);
  EXPECT_EQ(run_training(c, train, test).params.tau, Vector(4, 0.25));
}

TEST(RunTraining, FractionalStepsStayAboveFloor) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  c.arch = ArchKind::Fractional;
  c.epochs = 3;
  c.reg = RegularizationMode::l1(5.0);
  c.projection_floor = 1e-3;
  const TrainResult r = run_training(c, train, test);
  for (double t : r.params.tau) EXPECT_GE(t, 1e-3);
}

TEST(RunTraining, FinalTauKeepsHorizon) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  c.epochs = 3;
  c.horizon = 2.0;
  c.reg = RegularizationMode::final_tau(2.0);
  c.tau_interval = 1;
  TrainObserver obs;
  obs.on_tau = [&](const TauRecord& r) {
    double s = 0.0;
    for (double t : r.tau) s += t;
    EXPECT_NEAR(s, 2.0, 1e-12);
  };
  run_training(c, train, test, obs);
}

TEST(RunTraining, PruningShrinksDepthAndReportsEvents) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  c.prune = true;
  c.prune_epsilon = 0.5;
  c.prune_interval = 1;
  std::vector<PruneEvent> events;
  TrainObserver obs;
  obs.on_prune = [&](const PruneEvent& e) { events.push_back(e); };
  const TrainResult r = run_training(c, train, test, obs);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.front().iteration, 1u);
  EXPECT_EQ(events.back().depth_after, r.params.arch.depth);
  EXPECT_LT(r.params.arch.depth, 5u);
  EXPECT_EQ(r.metrics.back().active_layers, r.params.arch.depth);
  EXPECT_EQ(r.params.tau_ids.front(), 0u);
}

TEST(RunTraining, DivergenceIsReported) {
  const Dataset train = synthetic(1, 600), test = synthetic(2, 200);
  TrainConfig c = small_config();
  c.epochs = 5;
  c.learning_rate = 1e300;
  EXPECT_THROW(run_training(c, train, test), TrainingDiverged);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.arch = ArchKind::Fractional;
  c.prune = true;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.reg = RegularizationMode::time_horizon(2.0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.horizon = 2.0;
  EXPECT_NO_THROW(c.validate());
}

}  // namespace
}  // namespace tvl
