#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tvl/network.hpp"
#include "tvl/tensor.hpp"

namespace tvl {

/// Derivatives mirroring the layout of NetworkParams.
struct GradientSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Vector tau;

  friend bool operator==(const GradientSet&, const GradientSet&) = default;
};

GradientSet zeros_like(const NetworkParams& params);

/// Visit every scalar learnable in the canonical order
/// W^0, b^0, W^1, b^1, ..., W^{L-1}, tau. Works for NetworkParams and
/// GradientSet, const or not.
template <class Params, class Fn>
void for_each_scalar(Params& p, Fn&& fn) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (auto& v : p.weights[l].data()) fn(v);
    if (l < p.biases.size())
      for (auto& v : p.biases[l]) fn(v);
  }
  for (auto& v : p.tau) fn(v);
}

Vector flatten(const GradientSet& g);

/// g += scale * other
void accumulate(GradientSet& g, const GradientSet& other, double scale = 1.0);
void scale(GradientSet& g, double factor);
bool all_finite(const GradientSet& g);

/// Reverse-mode derivatives of <dlogits, logits> through a cached forward
/// pass. The gradient with respect to u^0 is never formed.
GradientSet backward_resnet(const NetworkParams& params, const ForwardCache& cache,
                            std::span<const double> dlogits);
GradientSet backward_fractional(const NetworkParams& params, const ForwardCache& cache,
                                std::span<const double> dlogits);
GradientSet backward(const NetworkParams& params, const ForwardCache& cache,
                     std::span<const double> dlogits);

struct FiniteDifference {
  GradientSet gradient;
  /// Canonical-order indices whose perturbed objective was not finite;
  /// those entries of `gradient` are NaN.
  std::vector<std::size_t> nonfinite;
};

/// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h of a
/// caller-supplied scalar objective, one coordinate at a time.
FiniteDifference fd_gradient(const NetworkParams& params,
                             const std::function<double(const NetworkParams&)>& objective,
                             double h);

}  // namespace tvl
