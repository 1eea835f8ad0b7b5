#pragma once

// Test-only helpers: random small networks and reference objectives built
// solely from the single-sample forward pass, independent of the batched
// training path they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tvl/data.hpp"
#include "tvl/network.hpp"
#include "tvl/objective.hpp"
#include "tvl/rng.hpp"

namespace tvl::testing {

inline NetworkParams random_params(SeededRng& rng, ArchKind kind, std::size_t depth,
                                   std::size_t n_in, std::size_t width, std::size_t n_out,
                                   double gamma = 0.5) {
  Architecture arch{kind, depth, n_in, width, n_out, Activation::ReLU};
  NetworkParams p = init_params(arch, 1.0, rng.next_u64(), gamma);
  for (auto& w : p.weights)
    for (double& v : w.data()) v = rng.uniform(-1.0, 1.0);
  for (auto& b : p.biases)
    for (double& v : b) v = rng.uniform(-0.5, 0.5);
  for (double& t : p.tau) t = rng.uniform(0.2, 1.0);
  return p;
}

inline Batch random_batch(SeededRng& rng, std::size_t n_in, std::size_t n_out, std::size_t size) {
  Batch b;
  b.features = Matrix(n_in, size);
  for (double& v : b.features.data()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t s = 0; s < size; ++s) b.labels.push_back(static_cast<std::uint8_t>(rng.index(n_out)));
  return b;
}

inline Vector column(const Matrix& m, std::size_t c) {
  Vector v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
  return v;
}

/// Smallest |z| over all pre-activations of every sample in the batch.
inline double min_abs_preactivation(const NetworkParams& p, const Batch& b) {
  double best = INFINITY;
  for (std::size_t s = 0; s < b.size(); ++s) {
    const auto cache = forward(p, column(b.features, s));
    for (const auto& z : cache.z)
      for (double v : z) best = std::min(best, std::abs(v));
  }
  return best;
}

/// Full objective from single-sample forward passes only.
inline double reference_objective(const NetworkParams& p, const Batch& b,
                                  const RegularizationMode& mode) {
  double sum = 0.0;
  for (std::size_t s = 0; s < b.size(); ++s) {
    const auto cache = forward(p, column(b.features, s));
    sum += softmax_cross_entropy(cache.logits(), b.labels[s]).loss;
  }
  return sum / static_cast<double>(b.size()) + regularization_penalty(p.tau, mode).value;
}

/// |a - f| <= max(abs_floor, rel * max(|a|, |f|))
inline bool close_rel(double a, double f, double rel, double abs_floor) {
  return std::abs(a - f) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(f)));
}

}  // namespace tvl::testing
