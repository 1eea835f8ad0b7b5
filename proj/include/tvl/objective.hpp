#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "tvl/data.hpp"
#include "tvl/grad.hpp"
#include "tvl/network.hpp"

namespace tvl {

/// How the step sizes enter the objective.
///  - L1: + alpha * ||tau||_1
///  - TimeHorizon: + 1/2 (T - sum tau)^2
///  - L1PlusTimeHorizon: both penalties added
///  - FinalTauDependent: the last step size is T minus the others and is
///    not a free variable; no penalty.
struct RegularizationMode {
  enum class Kind { None, L1, TimeHorizon, L1PlusTimeHorizon, FinalTauDependent };

  Kind kind = Kind::None;
  double alpha = 0.0;
  double horizon = 1.0;

  static RegularizationMode none() { return {}; }
  static RegularizationMode l1(double alpha) { return {Kind::L1, alpha, 1.0}; }
  static RegularizationMode time_horizon(double T) { return {Kind::TimeHorizon, 0.0, T}; }
  static RegularizationMode l1_plus_time_horizon(double alpha, double T) {
    return {Kind::L1PlusTimeHorizon, alpha, T};
  }
  static RegularizationMode final_tau(double T) { return {Kind::FinalTauDependent, 0.0, T}; }

  bool has_l1() const { return kind == Kind::L1 || kind == Kind::L1PlusTimeHorizon; }
  bool has_horizon_penalty() const {
    return kind == Kind::TimeHorizon || kind == Kind::L1PlusTimeHorizon;
  }
  bool final_tau_dependent() const { return kind == Kind::FinalTauDependent; }

  void validate() const;
  friend bool operator==(const RegularizationMode&, const RegularizationMode&) = default;
};

/// CLI spelling: none, l1, horizon, l1+horizon, final-tau.
std::string to_string(RegularizationMode::Kind kind);
RegularizationMode::Kind parse_regularization(const std::string& name);

struct LossBreakdown {
  double data_loss = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

struct CrossEntropy {
  double loss;
  Vector dlogits;
};

/// -log softmax(logits)[label] with max subtraction; dlogits = softmax - onehot.
CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label);

struct Penalty {
  double value = 0.0;
  Vector dtau;
};

Penalty time_horizon_penalty(std::span<const double> tau, double horizon);
/// Subgradient sign(0) = 0.
Penalty l1_penalty(std::span<const double> tau, double alpha);
/// The penalty the mode adds: l1 part first, then the horizon part.
Penalty regularization_penalty(std::span<const double> tau, const RegularizationMode& mode);

/// Replaces the last entry by horizon minus the sum of the others.
Vector apply_final_tau_dependency(std::span<const double> tau, double horizon);

/// Chain rule for the reduced variables: dtau[j] -= dtau[last] for j < last,
/// and the dependent last entry gets 0.
void reduce_final_tau_gradient(Vector& dtau);

struct ObjectiveValue {
  LossBreakdown loss;
  GradientSet grad;
  std::size_t correct = 0;  // argmax hits within the batch
};

/// Mean cross entropy over the batch plus the mode's penalty (added once),
/// with the matching gradient. Under FinalTauDependent the tau gradient is
/// taken with respect to the reduced variables.
ObjectiveValue assemble_objective(const NetworkParams& params, const Batch& batch,
                                  const RegularizationMode& mode);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace tvl
