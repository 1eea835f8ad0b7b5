#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvl/data.hpp"
#include "tvl/grad.hpp"
#include "tvl/network.hpp"
#include "tvl/objective.hpp"
#include "tvl/rng.hpp"

namespace tvl {

/// Training stopped because a loss or gradient went non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Sampling {
  Random,   // every mini-batch is a fresh uniform draw
  Shuffle,  // one permutation per epoch, consumed in consecutive slices
};

struct TrainConfig {
  ArchKind arch = ArchKind::ResNet;
  std::size_t depth = 7;
  std::size_t hidden_width = 100;
  double horizon = 1.0;
  double gamma = 0.5;
  double learning_rate = 0.05;
  std::size_t batch_size = 100;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  RegularizationMode reg;
  bool fixed_tau = false;
  bool prune = false;
  double prune_epsilon = 0.01;
  double projection_floor = 1e-4;
  std::size_t prune_interval = 0;  // iterations; 0 = once per epoch
  std::size_t eval_interval = 0;   // iterations; 0 = once per epoch
  std::size_t tau_interval = 20;   // iterations between step-size snapshots
  Sampling sampling = Sampling::Random;

  void validate() const;
  std::size_t iterations_per_epoch(std::size_t train_size) const;
};

struct MetricsRecord {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  LossBreakdown train_loss;  // mean over iterations since the previous record
  double train_accuracy = 0.0;  // running accuracy over the same mini-batches
  double test_accuracy = 0.0;
  Vector tau_snapshot;
  std::vector<std::size_t> tau_ids;
  std::size_t active_layers = 0;  // current depth L
  double wall_time_ms = 0.0;
};

struct TauRecord {
  std::size_t iteration = 0;
  Vector tau;
  std::vector<std::size_t> tau_ids;
};

struct PruneEvent {
  std::size_t iteration = 0;
  std::vector<std::size_t> removed_steps;  // numbering before the prune
  std::vector<std::size_t> removed_ids;    // original step-size indices
  std::size_t depth_after = 0;
};

struct TrainObserver {
  std::function<void(const MetricsRecord&)> on_metrics;
  std::function<void(const TauRecord&)> on_tau;
  std::function<void(const PruneEvent&)> on_prune;
};

struct TrainResult {
  NetworkParams params;
  std::vector<MetricsRecord> metrics;
  std::vector<PruneEvent> prunes;
  std::size_t iterations = 0;
};

/// batch_size distinct indices drawn uniformly from [0, dataset_size).
std::vector<std::size_t> sample_minibatch(SeededRng& rng, std::size_t dataset_size,
                                          std::size_t batch_size);

class MinibatchSampler {
 public:
  MinibatchSampler(SeededRng rng, std::size_t dataset_size, std::size_t batch_size,
                   Sampling mode);
  std::vector<std::size_t> next();

 private:
  SeededRng rng_;
  std::size_t size_;
  std::size_t batch_;
  Sampling mode_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
};

/// params -= lr * grads. Throws TrainingDiverged on a non-finite gradient.
void sgd_step(NetworkParams& params, const GradientSet& grads, double lr);
/// As above; under FinalTauDependent the last step size is recomputed
/// from the others instead of stepped.
void sgd_step(NetworkParams& params, const GradientSet& grads, double lr,
              const RegularizationMode& mode);

Vector project_tau_positive(std::span<const double> tau, double floor);

struct PruneResult {
  NetworkParams params;
  std::vector<std::size_t> pruned;  // step indices before renumbering
  std::string warning;
};

/// Removes every skip step k in 1..L-2 with |tau^k| < epsilon * sum_j |tau^j|,
/// deleting W^k, b^k and tau^k. Step 0 and the output map are never removed.
/// keep_last protects the final step (used when it is the dependent one).
PruneResult prune_check(const NetworkParams& params, double epsilon, bool keep_last = false);

/// Fraction of samples whose argmax logit matches the label.
double evaluate_accuracy(const NetworkParams& params, const Dataset& data);

TrainResult run_training(const TrainConfig& config, const Dataset& train, const Dataset& test,
                         const TrainObserver& observer = {});

}  // namespace tvl
