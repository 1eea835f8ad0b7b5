#include "tvl/trainer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "tvl/batch.hpp"

namespace tvl {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (depth < 2) throw std::invalid_argument("depth must be at least 2");
  if (hidden_width < 1) throw std::invalid_argument("width must be at least 1");
  if (!(prune_epsilon >= 0.0 && prune_epsilon < 1.0)) {
    throw std::invalid_argument(fmt::format("epsilon must lie in [0, 1), got {}", prune_epsilon));
  }
  if (!(projection_floor > 0.0)) throw std::invalid_argument("projection floor must be positive");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!(horizon > 0.0)) throw std::invalid_argument("time horizon must be positive");
  if (tau_interval < 1) throw std::invalid_argument("tau snapshot interval must be >= 1");
  reg.validate();
  if (reg.horizon != horizon &&
      (reg.has_horizon_penalty() || reg.final_tau_dependent())) {
    throw std::invalid_argument("regularization horizon differs from the network horizon");
  }
  if (prune && arch != ArchKind::ResNet) {
    throw std::invalid_argument(
        "pruning applies to ResNet only: a vanishing step size does not make a fractional "
        "layer an identity map");
  }
}

std::size_t TrainConfig::iterations_per_epoch(std::size_t train_size) const {
  return std::max<std::size_t>(1, train_size / batch_size);
}

std::vector<std::size_t> sample_minibatch(SeededRng& rng, std::size_t dataset_size,
                                          std::size_t batch_size) {
  if (dataset_size == 0) throw std::invalid_argument("cannot sample from an empty dataset");
  if (batch_size > dataset_size) {
    throw std::invalid_argument(
        fmt::format("batch size {} exceeds dataset size {}", batch_size, dataset_size));
  }
  // Floyd's algorithm: exactly batch_size draws, no retries.
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::vector<char> taken(dataset_size, 0);
  for (std::size_t j = dataset_size - batch_size; j < dataset_size; ++j) {
    std::size_t t = rng.index(j + 1);
    if (taken[t]) t = j;
    taken[t] = 1;
    out.push_back(t);
  }
  return out;
}

MinibatchSampler::MinibatchSampler(SeededRng rng, std::size_t dataset_size,
                                   std::size_t batch_size, Sampling mode)
    : rng_(std::move(rng)), size_(dataset_size), batch_(batch_size), mode_(mode) {
  if (dataset_size == 0) throw std::invalid_argument("cannot sample from an empty dataset");
  if (batch_size == 0 || batch_size > dataset_size) {
    throw std::invalid_argument(
        fmt::format("batch size {} invalid for dataset size {}", batch_size, dataset_size));
  }
}

std::vector<std::size_t> MinibatchSampler::next() {
  if (mode_ == Sampling::Random) return sample_minibatch(rng_, size_, batch_);
  if (perm_.empty() || cursor_ + batch_ > size_) {
    perm_.resize(size_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t i = size_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng_.index(i)]);
    cursor_ = 0;
  }
  std::vector<std::size_t> out(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

void sgd_step(NetworkParams& params, const GradientSet& grads, double lr) {
  if (!all_finite(grads)) throw TrainingDiverged("non-finite gradient entry; aborting step");
  std::vector<double*> dst;
  for_each_scalar(params, [&](double& v) { dst.push_back(&v); });
  std::size_t i = 0;
  std::size_t n = 0;
  for_each_scalar(grads, [&](double) { ++n; });
  if (n != dst.size()) {
    throw ShapeError(fmt::format("gradient has {} entries, parameters {}", n, dst.size()));
  }
  for_each_scalar(grads, [&](double g) {
    *dst[i] -= lr * g;
    ++i;
  });
}

void sgd_step(NetworkParams& params, const GradientSet& grads, double lr,
              const RegularizationMode& mode) {
  sgd_step(params, grads, lr);
  if (mode.final_tau_dependent()) params.tau = apply_final_tau_dependency(params.tau, mode.horizon);
}

Vector project_tau_positive(std::span<const double> tau, double floor) {
  if (!(floor > 0.0)) throw std::invalid_argument("projection floor must be positive");
  Vector out(tau.size());
  std::transform(tau.begin(), tau.end(), out.begin(), [&](double t) { return std::max(t, floor); });
  return out;
}

PruneResult prune_check(const NetworkParams& params, double epsilon, bool keep_last) {
  if (params.arch.kind != ArchKind::ResNet) {
    throw std::invalid_argument("prune_check: only ResNet layers become identities at tau = 0");
  }
  PruneResult out{params, {}, {}};
  const std::size_t steps = params.tau.size();
  double total = 0.0;
  for (double t : params.tau) total += std::abs(t);
  const double threshold = epsilon * total;

  const std::size_t last_candidate = keep_last ? steps - 1 : steps;
  for (std::size_t k = 1; k < last_candidate; ++k) {
    if (std::abs(params.tau[k]) < threshold) out.pruned.push_back(k);
  }
  // Step 0 is never a candidate, so at least one hidden layer always survives.
  if (steps - out.pruned.size() < 1) {
    out.warning = "refusing to prune the last hidden layer";
    out.pruned.clear();
  }
  if (out.pruned.empty()) return out;

  NetworkParams& p = out.params;
  for (auto it = out.pruned.rbegin(); it != out.pruned.rend(); ++it) {
    const auto k = static_cast<std::ptrdiff_t>(*it);
    p.weights.erase(p.weights.begin() + k);
    p.biases.erase(p.biases.begin() + k);
    p.tau.erase(p.tau.begin() + k);
    p.tau_ids.erase(p.tau_ids.begin() + k);
  }
  p.arch.depth -= out.pruned.size();
  p.validate();
  return out;
}

double evaluate_accuracy(const NetworkParams& params, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  constexpr std::size_t kChunk = 500;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = gather_batch(data, idx);
    const Matrix logits = forward_batch(params, batch.features).logits().transposed();
    for (std::size_t s = 0; s < batch.size(); ++s) {
      if (argmax(logits.row(s)) == batch.labels[s]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

void check_finite(const ObjectiveValue& obj, std::size_t iteration) {
  if (!std::isfinite(obj.loss.total)) {
    throw TrainingDiverged(
        fmt::format("iteration {}: loss became non-finite ({})", iteration, obj.loss.total));
  }
  if (!all_finite(obj.grad)) {
    throw TrainingDiverged(fmt::format("iteration {}: gradient became non-finite", iteration));
  }
}

}  // namespace

TrainResult run_training(const TrainConfig& config, const Dataset& train, const Dataset& test,
                         const TrainObserver& observer) {
  config.validate();
  if (train.size() == 0 || test.size() == 0) throw std::invalid_argument("empty dataset");
  if (train.feature_width() != test.feature_width()) {
    throw ShapeError(fmt::format("train has {} features, test {}", train.feature_width(),
                                 test.feature_width()));
  }
  if (config.batch_size > train.size()) {
    throw std::invalid_argument(fmt::format("batch size {} exceeds training set size {}",
                                            config.batch_size, train.size()));
  }

  Architecture arch;
  arch.kind = config.arch;
  arch.depth = config.depth;
  arch.input_width = train.feature_width();
  arch.hidden_width = config.hidden_width;
  arch.output_width = kNumClasses;

  TrainResult result;
  NetworkParams& params = result.params;
  params = init_params(arch, config.horizon, config.seed, config.gamma);
  if (config.reg.final_tau_dependent()) {
    params.tau = apply_final_tau_dependency(params.tau, config.reg.horizon);
  }

  const std::size_t per_epoch = config.iterations_per_epoch(train.size());
  const std::size_t total = config.epochs * per_epoch;
  const std::size_t eval_every = config.eval_interval ? config.eval_interval : per_epoch;
  const std::size_t prune_every = config.prune_interval ? config.prune_interval : per_epoch;

  MinibatchSampler sampler(SeededRng(config.seed).split(2), train.size(), config.batch_size,
                           config.sampling);
  const auto start = std::chrono::steady_clock::now();

  auto emit_tau = [&](std::size_t it) {
    if (observer.on_tau) observer.on_tau(TauRecord{it, params.tau, params.tau_ids});
  };
  emit_tau(0);

  LossBreakdown window;
  std::size_t window_iters = 0;
  std::size_t window_correct = 0;
  std::size_t window_samples = 0;

  for (std::size_t it = 1; it <= total; ++it) {
    const auto indices = sampler.next();
    const Batch batch = gather_batch(train, indices);
    ObjectiveValue obj = assemble_objective(params, batch, config.reg);
    check_finite(obj, it);
    if (config.fixed_tau) std::fill(obj.grad.tau.begin(), obj.grad.tau.end(), 0.0);

    sgd_step(params, obj.grad, config.learning_rate, config.reg);
    if (config.arch == ArchKind::Fractional) {
      params.tau = project_tau_positive(params.tau, config.projection_floor);
    }

    window.data_loss += obj.loss.data_loss;
    window.penalty += obj.loss.penalty;
    window.total += obj.loss.total;
    ++window_iters;
    window_correct += obj.correct;
    window_samples += batch.size();

    if (config.prune && it % prune_every == 0) {
      PruneResult pr = prune_check(params, config.prune_epsilon, config.reg.final_tau_dependent());
      if (!pr.pruned.empty()) {
        PruneEvent ev{it, pr.pruned, {}, pr.params.arch.depth};
        for (std::size_t k : pr.pruned) ev.removed_ids.push_back(params.tau_ids[k]);
        params = std::move(pr.params);
        if (observer.on_prune) observer.on_prune(ev);
        result.prunes.push_back(std::move(ev));
      }
    }

    if (it % config.tau_interval == 0) emit_tau(it);

    if (it % eval_every == 0 || it == total) {
      MetricsRecord rec;
      rec.iteration = it;
      rec.epoch = it / per_epoch;
      const double n = static_cast<double>(window_iters);
      rec.train_loss = {window.data_loss / n, window.penalty / n, window.total / n};
      rec.train_accuracy =
          static_cast<double>(window_correct) / static_cast<double>(window_samples);
      rec.test_accuracy = evaluate_accuracy(params, test);
      rec.tau_snapshot = params.tau;
      rec.tau_ids = params.tau_ids;
      rec.active_layers = params.arch.depth;
      rec.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();
      if (observer.on_metrics) observer.on_metrics(rec);
      result.metrics.push_back(std::move(rec));
      window = {};
      window_iters = window_correct = window_samples = 0;
    }
  }
  result.iterations = total;
  return result;
}

}  // namespace tvl
