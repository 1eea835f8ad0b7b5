#pragma once

#include <vector>

#include "tvl/grad.hpp"
#include "tvl/network.hpp"
#include "tvl/tensor.hpp"

namespace tvl {

/// Forward state for a mini-batch. Every matrix is feature-major: column s
/// holds sample s, so column s of u[l] equals ForwardCache::u[l] of a
/// single-sample pass on that input.
struct BatchCache {
  std::vector<Matrix> u;
  std::vector<Matrix> z;
  std::vector<Matrix> s;
  std::vector<FracCoeffs> coeffs;

  std::size_t batch_size() const { return u.empty() ? 0 : u.front().cols(); }
  const Matrix& logits() const { return u.back(); }
};

/// inputs is n_0 x B. Dispatches on the architecture kind.
BatchCache forward_batch(const NetworkParams& params, const Matrix& inputs);

/// Sum over the batch of the per-sample gradients of <dlogits_s, logits_s>.
/// Matches summing backward() over samples in ascending order, bit for bit.
GradientSet backward_batch(const NetworkParams& params, const BatchCache& cache,
                           const Matrix& dlogits);

}  // namespace tvl
