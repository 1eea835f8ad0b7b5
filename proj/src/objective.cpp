#include "tvl/objective.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "tvl/batch.hpp"

namespace tvl {

void RegularizationMode::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument(fmt::format("alpha must be >= 0, got {}", alpha));
  if (!(horizon > 0.0)) {
    throw std::invalid_argument(fmt::format("time horizon must be > 0, got {}", horizon));
  }
}

std::string to_string(RegularizationMode::Kind kind) {
  using K = RegularizationMode::Kind;
  switch (kind) {
    case K::None: return "none";
    case K::L1: return "l1";
    case K::TimeHorizon: return "horizon";
    case K::L1PlusTimeHorizon: return "l1+horizon";
    case K::FinalTauDependent: return "final-tau";
  }
  return "?";
}

RegularizationMode::Kind parse_regularization(const std::string& name) {
  using K = RegularizationMode::Kind;
  for (K k : {K::None, K::L1, K::TimeHorizon, K::L1PlusTimeHorizon, K::FinalTauDependent}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument(fmt::format("unknown regularization '{}'", name));
}

CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::out_of_range(
        fmt::format("label {} out of range for {} classes", label, logits.size()));
  }
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  Vector d(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d[i] = std::exp(logits[i] - peak);
    denom += d[i];
  }
  for (double& v : d) v /= denom;
  d[label] -= 1.0;
  return {std::log(denom) - (logits[label] - peak), std::move(d)};
}

Penalty time_horizon_penalty(std::span<const double> tau, double horizon) {
  double sum = 0.0;
  for (double t : tau) sum += t;
  const double gap = horizon - sum;
  return {0.5 * gap * gap, Vector(tau.size(), -gap)};
}

Penalty l1_penalty(std::span<const double> tau, double alpha) {
  Penalty p{0.0, Vector(tau.size(), 0.0)};
  double norm = 0.0;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    norm += std::abs(tau[k]);
    if (tau[k] > 0.0) p.dtau[k] = alpha;
    if (tau[k] < 0.0) p.dtau[k] = -alpha;
  }
  p.value = alpha * norm;
  return p;
}

Penalty regularization_penalty(std::span<const double> tau, const RegularizationMode& mode) {
  Penalty out{0.0, Vector(tau.size(), 0.0)};
  if (mode.has_l1()) {
    const Penalty p = l1_penalty(tau, mode.alpha);
    out.value += p.value;
    for (std::size_t k = 0; k < tau.size(); ++k) out.dtau[k] += p.dtau[k];
  }
  if (mode.has_horizon_penalty()) {
    const Penalty p = time_horizon_penalty(tau, mode.horizon);
    out.value += p.value;
    for (std::size_t k = 0; k < tau.size(); ++k) out.dtau[k] += p.dtau[k];
  }
  return out;
}

Vector apply_final_tau_dependency(std::span<const double> tau, double horizon) {
  if (tau.size() < 2) {
    throw std::invalid_argument("final step size dependency needs at least two step sizes");
  }
  Vector out(tau.begin(), tau.end());
  double rest = 0.0;
  for (std::size_t k = 0; k + 1 < out.size(); ++k) rest += out[k];
  out.back() = horizon - rest;
  return out;
}

void reduce_final_tau_gradient(Vector& dtau) {
  if (dtau.size() < 2) return;
  const double last = dtau.back();
  for (std::size_t k = 0; k + 1 < dtau.size(); ++k) dtau[k] -= last;
  dtau.back() = 0.0;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

ObjectiveValue assemble_objective(const NetworkParams& params, const Batch& batch,
                                  const RegularizationMode& mode) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("assemble_objective: empty batch");

  const BatchCache cache = forward_batch(params, batch.features);
  const Matrix& logits = cache.logits();
  const Matrix logits_t = logits.transposed();  // sample-major rows

  ObjectiveValue out;
  Matrix dlogits(logits.rows(), n);
  double loss_sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto row = logits_t.row(s);
    const auto ce = softmax_cross_entropy(row, batch.labels[s]);
    loss_sum += ce.loss;
    for (std::size_t c = 0; c < ce.dlogits.size(); ++c) dlogits(c, s) = ce.dlogits[c];
    if (argmax(row) == batch.labels[s]) ++out.correct;
  }

  out.grad = backward_batch(params, cache, dlogits);
  scale(out.grad, 1.0 / static_cast<double>(n));

  const Penalty pen = regularization_penalty(params.tau, mode);
  for (std::size_t k = 0; k < pen.dtau.size(); ++k) out.grad.tau[k] += pen.dtau[k];
  if (mode.final_tau_dependent()) reduce_final_tau_gradient(out.grad.tau);

  out.loss.data_loss = loss_sum / static_cast<double>(n);
  out.loss.penalty = pen.value;
  out.loss.total = out.loss.data_loss + out.loss.penalty;
  return out;
}

}  // namespace tvl
