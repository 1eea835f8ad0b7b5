#include "tvl/grad.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace tvl {

GradientSet zeros_like(const NetworkParams& params) {
  GradientSet g;
  g.weights.reserve(params.weights.size());
  for (const auto& w : params.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : params.biases) g.biases.emplace_back(b.size(), 0.0);
  g.tau.assign(params.tau.size(), 0.0);
  return g;
}

Vector flatten(const GradientSet& g) {
  Vector flat;
  for_each_scalar(g, [&](double v) { flat.push_back(v); });
  return flat;
}

void accumulate(GradientSet& g, const GradientSet& other, double factor) {
  if (g.weights.size() != other.weights.size() || g.tau.size() != other.tau.size()) {
    throw ShapeError("accumulate: gradient sets have different depths");
  }
  std::vector<double*> dst;
  for_each_scalar(g, [&](double& v) { dst.push_back(&v); });
  std::size_t i = 0;
  for_each_scalar(other, [&](double v) { *dst.at(i++) += factor * v; });
}

void scale(GradientSet& g, double factor) {
  for_each_scalar(g, [&](double& v) { v *= factor; });
}

bool all_finite(const GradientSet& g) {
  bool ok = true;
  for_each_scalar(g, [&](double v) { ok = ok && std::isfinite(v); });
  return ok;
}

namespace {

void check_cache(const NetworkParams& params, const ForwardCache& cache,
                 std::span<const double> dlogits) {
  const std::size_t depth = params.arch.depth;
  if (cache.u.size() != depth + 1 || cache.z.size() != depth - 1 || cache.s.size() != depth - 1) {
    throw ShapeError(fmt::format("forward cache holds {} layers, network has depth {}",
                                 cache.u.size() - 1, depth));
  }
  if (dlogits.size() != params.arch.output_width) {
    throw ShapeError(fmt::format("dlogits has length {}, network has {} outputs", dlogits.size(),
                                 params.arch.output_width));
  }
}

// zbar = factor * adj, masked by sigma'(z).
Vector masked_scale(std::span<const double> adj, std::span<const double> z, double factor) {
  Vector out(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) out[i] = z[i] > 0.0 ? factor * adj[i] : 0.0;
  return out;
}

}  // namespace

GradientSet backward_resnet(const NetworkParams& params, const ForwardCache& cache,
                            std::span<const double> dlogits) {
  check_cache(params, cache, dlogits);
  const std::size_t steps = params.arch.steps();
  GradientSet g = zeros_like(params);

  outer_accumulate(g.weights[steps], dlogits, cache.u[steps]);
  Vector adj = matvec_transposed(params.weights[steps], dlogits);  // adjoint of u^{L-1}

  for (std::size_t k = steps; k-- > 0;) {
    // adj is the adjoint of u^{k+1} = u^k + tau^k s^k (no skip term when k = 0)
    g.tau[k] = dot(adj, cache.s[k]);
    const Vector zbar = masked_scale(adj, cache.z[k], params.tau[k]);
    g.biases[k] = zbar;
    outer_accumulate(g.weights[k], zbar, cache.u[k]);
    if (k > 0) {
      const Vector back = matvec_transposed(params.weights[k], zbar);
      for (std::size_t i = 0; i < adj.size(); ++i) adj[i] += back[i];
    }
  }
  return g;
}

GradientSet backward_fractional(const NetworkParams& params, const ForwardCache& cache,
                                std::span<const double> dlogits) {
  check_cache(params, cache, dlogits);
  require_positive_tau(params.tau);
  const std::size_t steps = params.arch.steps();
  if (cache.coeffs.size() != steps) {
    throw ShapeError("backward_fractional needs a cache from forward_fractional");
  }
  GradientSet g = zeros_like(params);

  // adj[l] is the adjoint of u^l; complete once every later step is processed.
  std::vector<Vector> adj(steps + 1);
  for (std::size_t l = 1; l <= steps; ++l) adj[l].assign(params.arch.hidden_width, 0.0);

  outer_accumulate(g.weights[steps], dlogits, cache.u[steps]);
  adj[steps] = matvec_transposed(params.weights[steps], dlogits);

  for (std::size_t k = steps; k-- > 0;) {
    const FracCoeffs& c = cache.coeffs[k];
    const Vector& up = adj[k + 1];

    g.tau[k] += dot(up, cache.s[k]) * c.step_factor_derivative;
    const Vector zbar = masked_scale(up, cache.z[k], c.step_factor);
    g.biases[k] = zbar;
    outer_accumulate(g.weights[k], zbar, cache.u[k]);
    if (k == 0) break;

    Vector& cur = adj[k];
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += up[i];
    const Vector back = matvec_transposed(params.weights[k], zbar);
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += back[i];

    // History term -a_{k,j} (u^{j+1} - u^j).
    for (std::size_t j = kFirstHistoryIndex; j < k; ++j) {
      const Vector& hi = cache.u[j + 1];
      const Vector& lo = cache.u[j];
      double inner = 0.0;
      for (std::size_t i = 0; i < up.size(); ++i) inner += up[i] * (hi[i] - lo[i]);
      const double abar = -inner;

      const double a = c.a[j];
      Vector& adj_hi = adj[j + 1];
      Vector& adj_lo = adj[j];
      for (std::size_t i = 0; i < up.size(); ++i) adj_hi[i] -= a * up[i];
      for (std::size_t i = 0; i < up.size(); ++i) adj_lo[i] += a * up[i];

      const Vector partials = frac_coeff_partials(params.tau, params.gamma, k, j);
      for (std::size_t i = j; i <= k; ++i) g.tau[i] += abar * partials[i - j];
    }
  }
  return g;
}

GradientSet backward(const NetworkParams& params, const ForwardCache& cache,
                     std::span<const double> dlogits) {
  return params.arch.kind == ArchKind::ResNet ? backward_resnet(params, cache, dlogits)
                                              : backward_fractional(params, cache, dlogits);
}

FiniteDifference fd_gradient(const NetworkParams& params,
                             const std::function<double(const NetworkParams&)>& objective,
                             double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: step must be positive");
  NetworkParams probe = params;
  std::vector<double*> coords;
  for_each_scalar(probe, [&](double& v) { coords.push_back(&v); });

  FiniteDifference out{zeros_like(params), {}};
  std::vector<double*> dst;
  for_each_scalar(out.gradient, [&](double& v) { dst.push_back(&v); });

  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double saved = *coords[i];
    *coords[i] = saved + h;
    const double plus = objective(probe);
    *coords[i] = saved - h;
    const double minus = objective(probe);
    *coords[i] = saved;
    if (std::isfinite(plus) && std::isfinite(minus)) {
      *dst[i] = (plus - minus) / (2.0 * h);
    } else {
      *dst[i] = std::nan("");
      out.nonfinite.push_back(i);
    }
  }
  return out;
}

}  // namespace tvl
