#include "tvl/batch.hpp"

#include <fmt/format.h>

namespace tvl {
namespace {

void activate(const NetworkParams& params, BatchCache& cache, std::size_t k) {
  Matrix z;
  matmul_into(params.weights[k], cache.u[k], z);
  const Vector& b = params.biases[k];
  Matrix s(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zr = z.row(i);
    auto sr = s.row(i);
    for (std::size_t c = 0; c < zr.size(); ++c) {
      zr[c] += b[i];
      sr[c] = zr[c] > 0.0 ? zr[c] : 0.0;
    }
  }
  cache.z.push_back(std::move(z));
  cache.s.push_back(std::move(s));
}

// out[s] = sum_i a(i,s) * b(i,s), accumulated over ascending i per sample.
Vector column_dots(const Matrix& a, const Matrix& b) {
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    const auto br = b.row(i);
    for (std::size_t s = 0; s < out.size(); ++s) out[s] += ar[s] * br[s];
  }
  return out;
}

Matrix masked_scale(const Matrix& adj, const Matrix& z, double factor) {
  Matrix out(adj.rows(), adj.cols());
  for (std::size_t i = 0; i < adj.rows(); ++i) {
    const auto ar = adj.row(i);
    const auto zr = z.row(i);
    auto orow = out.row(i);
    for (std::size_t s = 0; s < orow.size(); ++s) orow[s] = zr[s] > 0.0 ? factor * ar[s] : 0.0;
  }
  return out;
}

void add_rows_into(Vector& dst, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (double v : m.row(i)) acc += v;
    dst[i] = acc;
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  auto& d = dst.data();
  const auto& s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

BatchCache forward_batch(const NetworkParams& params, const Matrix& inputs) {
  if (inputs.rows() != params.arch.input_width) {
    throw ShapeError(fmt::format("batch input has {} features, network expects {}",
                                 inputs.rows(), params.arch.input_width));
  }
  const bool fractional = params.arch.kind == ArchKind::Fractional;
  if (fractional) require_positive_tau(params.tau);
  const std::size_t steps = params.arch.steps();
  const std::size_t batch = inputs.cols();

  BatchCache cache;
  cache.u.reserve(steps + 2);
  cache.u.push_back(inputs);
  for (std::size_t k = 0; k < steps; ++k) {
    activate(params, cache, k);
    const Matrix& s = cache.s[k];
    Matrix next(s.rows(), batch);
    if (!fractional) {
      const double t = params.tau[k];
      for (std::size_t i = 0; i < s.rows(); ++i) {
        auto nr = next.row(i);
        const auto sr = s.row(i);
        if (k == 0) {
          for (std::size_t c = 0; c < batch; ++c) nr[c] = t * sr[c];
        } else {
          const auto pr = cache.u[k].row(i);
          for (std::size_t c = 0; c < batch; ++c) nr[c] = pr[c] + t * sr[c];
        }
      }
    } else {
      cache.coeffs.push_back(frac_coeffs(params.tau, params.gamma, k));
      const FracCoeffs& co = cache.coeffs.back();
      if (k == 0) {
        for (std::size_t i = 0; i < s.rows(); ++i) {
          auto nr = next.row(i);
          const auto sr = s.row(i);
          for (std::size_t c = 0; c < batch; ++c) nr[c] = co.step_factor * sr[c];
        }
      } else {
        next = cache.u[k];
        for (std::size_t j = kFirstHistoryIndex; j < k; ++j) {
          const double a = co.a[j];
          for (std::size_t i = 0; i < s.rows(); ++i) {
            auto nr = next.row(i);
            const auto hi = cache.u[j + 1].row(i);
            const auto lo = cache.u[j].row(i);
            for (std::size_t c = 0; c < batch; ++c) nr[c] -= a * (hi[c] - lo[c]);
          }
        }
        for (std::size_t i = 0; i < s.rows(); ++i) {
          auto nr = next.row(i);
          const auto sr = s.row(i);
          for (std::size_t c = 0; c < batch; ++c) nr[c] += co.step_factor * sr[c];
        }
      }
    }
    cache.u.push_back(std::move(next));
  }
  Matrix logits;
  matmul_into(params.weights[steps], cache.u[steps], logits);
  cache.u.push_back(std::move(logits));
  return cache;
}

GradientSet backward_batch(const NetworkParams& params, const BatchCache& cache,
                           const Matrix& dlogits) {
  const std::size_t steps = params.arch.steps();
  const std::size_t batch = cache.batch_size();
  if (cache.u.size() != steps + 2 || dlogits.rows() != params.arch.output_width ||
      dlogits.cols() != batch) {
    throw ShapeError(fmt::format("backward_batch: cache of {} layers and dlogits {} for depth {}",
                                 cache.u.size() - 1, shape_str(dlogits), params.arch.depth));
  }
  const bool fractional = params.arch.kind == ArchKind::Fractional;
  if (fractional && cache.coeffs.size() != steps) {
    throw ShapeError("backward_batch: fractional network needs coefficient cache");
  }

  GradientSet g = zeros_like(params);
  Matrix dtau(steps, batch);  // per-sample step-size gradients

  outer_accumulate_batch(g.weights[steps], dlogits, cache.u[steps]);
  std::vector<Matrix> adj(steps + 1);
  matmul_transposed_into(params.weights[steps], dlogits, adj[steps]);
  if (fractional) {
    for (std::size_t l = 1; l < steps; ++l) adj[l] = Matrix(params.arch.hidden_width, batch);
  }

  Matrix back;
  for (std::size_t k = steps; k-- > 0;) {
    const Matrix& up = adj[k + 1];
    const Vector dots = column_dots(up, cache.s[k]);
    double factor;
    if (fractional) {
      const FracCoeffs& co = cache.coeffs[k];
      auto row = dtau.row(k);
      for (std::size_t s = 0; s < batch; ++s) row[s] += dots[s] * co.step_factor_derivative;
      factor = co.step_factor;
    } else {
      auto row = dtau.row(k);
      for (std::size_t s = 0; s < batch; ++s) row[s] = dots[s];
      factor = params.tau[k];
    }
    const Matrix zbar = masked_scale(up, cache.z[k], factor);
    add_rows_into(g.biases[k], zbar);
    outer_accumulate_batch(g.weights[k], zbar, cache.u[k]);
    if (k == 0) break;

    matmul_transposed_into(params.weights[k], zbar, back);
    if (!fractional) {
      // adjoint of u^k = adjoint of u^{k+1} (skip) + W^T zbar
      adj[k] = up;
      add_into(adj[k], back);
      continue;
    }
    add_into(adj[k], up);
    add_into(adj[k], back);
    const FracCoeffs& co = cache.coeffs[k];
    for (std::size_t j = kFirstHistoryIndex; j < k; ++j) {
      Vector inner(batch, 0.0);
      for (std::size_t i = 0; i < up.rows(); ++i) {
        const auto ur = up.row(i);
        const auto hi = cache.u[j + 1].row(i);
        const auto lo = cache.u[j].row(i);
        for (std::size_t s = 0; s < batch; ++s) inner[s] += ur[s] * (hi[s] - lo[s]);
      }
      const double a = co.a[j];
      for (std::size_t i = 0; i < up.rows(); ++i) {
        const auto ur = up.row(i);
        auto ah = adj[j + 1].row(i);
        for (std::size_t s = 0; s < batch; ++s) ah[s] -= a * ur[s];
      }
      for (std::size_t i = 0; i < up.rows(); ++i) {
        const auto ur = up.row(i);
        auto al = adj[j].row(i);
        for (std::size_t s = 0; s < batch; ++s) al[s] += a * ur[s];
      }
      const Vector partials = frac_coeff_partials(params.tau, params.gamma, k, j);
      for (std::size_t i = j; i <= k; ++i) {
        auto row = dtau.row(i);
        for (std::size_t s = 0; s < batch; ++s) row[s] += -inner[s] * partials[i - j];
      }
    }
  }

  for (std::size_t k = 0; k < steps; ++k) {
    double acc = 0.0;
    for (double v : dtau.row(k)) acc += v;
    g.tau[k] = acc;
  }
  return g;
}

}  // namespace tvl
