#include "tvl/network.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

#include "tvl/rng.hpp"

namespace tvl {

std::string_view to_string(ArchKind kind) {
  return kind == ArchKind::ResNet ? "resnet" : "fractional";
}

std::size_t Architecture::width(std::size_t layer) const {
  if (layer == 0) return input_width;
  if (layer == depth) return output_width;
  return hidden_width;
}

void Architecture::validate() const {
  if (depth < 2) throw ShapeError(fmt::format("depth must be at least 2, got {}", depth));
  if (input_width == 0 || hidden_width == 0 || output_width == 0) {
    throw ShapeError(fmt::format("widths must be positive, got {}/{}/{}", input_width,
                                 hidden_width, output_width));
  }
}

void NetworkParams::validate() const {
  arch.validate();
  const std::size_t depth = arch.depth;
  if (weights.size() != depth || biases.size() != depth - 1 || tau.size() != depth - 1 ||
      tau_ids.size() != depth - 1) {
    throw ShapeError(fmt::format(
        "depth {} needs {} weights, {} biases and step sizes; have {}, {}, {} (ids {})", depth,
        depth, depth - 1, weights.size(), biases.size(), tau.size(), tau_ids.size()));
  }
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& w = weights[l];
    if (w.rows() != arch.width(l + 1) || w.cols() != arch.width(l)) {
      throw ShapeError(fmt::format("W^{} is {}, expected {}x{}", l, shape_str(w),
                                   arch.width(l + 1), arch.width(l)));
    }
    if (l + 1 < depth && biases[l].size() != arch.width(l + 1)) {
      throw ShapeError(
          fmt::format("b^{} has length {}, expected {}", l, biases[l].size(), arch.width(l + 1)));
    }
  }
}

NetworkParams init_params(const Architecture& arch, double horizon, std::uint64_t seed,
                          double gamma) {
  arch.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("time horizon must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");

  NetworkParams p;
  p.arch = arch;
  p.gamma = gamma;
  p.tau.assign(arch.steps(), horizon / static_cast<double>(arch.steps()));
  p.tau_ids.resize(arch.steps());
  std::iota(p.tau_ids.begin(), p.tau_ids.end(), std::size_t{0});

  // He-normal weights, std = sqrt(2 / fan_in); zero biases.
  SeededRng rng = SeededRng(seed).split(1);
  for (std::size_t l = 0; l < arch.depth; ++l) {
    Matrix w(arch.width(l + 1), arch.width(l));
    const double scale = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (double& v : w.data()) v = scale * rng.normal();
    p.weights.push_back(std::move(w));
    if (l + 1 < arch.depth) p.biases.emplace_back(arch.width(l + 1), 0.0);
  }
  return p;
}

std::size_t count_params(const NetworkParams& params) {
  std::size_t n = params.tau.size();
  for (const auto& w : params.weights) n += w.size();
  for (const auto& b : params.biases) n += b.size();
  return n;
}

double fractional_gamma_factor(double gamma) { return std::tgamma(2.0 - gamma); }

double tau_sum(std::span<const double> tau, std::size_t first, std::size_t last) {
  double acc = 0.0;
  for (std::size_t i = first; i <= last; ++i) acc += tau[i];
  return acc;
}

void require_positive_tau(std::span<const double> tau) {
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!(tau[k] > 0.0)) {
      throw DegeneracyError(
          fmt::format("fractional step size tau[{}] = {} must be positive", k, tau[k]));
    }
  }
}

FracCoeffs frac_coeffs(std::span<const double> tau, double gamma, std::size_t step) {
  if (step >= tau.size()) {
    throw ShapeError(fmt::format("step {} out of range for {} step sizes", step, tau.size()));
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  require_positive_tau(tau.first(step + 1));

  const double beta = 1.0 - gamma;
  const double lead = std::pow(tau[step], gamma);
  FracCoeffs c;
  c.step = step;
  c.step_factor = lead * fractional_gamma_factor(gamma);
  c.step_factor_derivative =
      gamma * std::pow(tau[step], gamma - 1.0) * fractional_gamma_factor(gamma);
  c.a.resize(step);
  for (std::size_t j = 0; j < step; ++j) {
    const double head = tau_sum(tau, j, step);
    const double tail = tau_sum(tau, j + 1, step);
    c.a[j] = lead / tau[j] * (std::pow(head, beta) - std::pow(tail, beta));
  }
  return c;
}

Vector frac_coeff_partials(std::span<const double> tau, double gamma, std::size_t step,
                           std::size_t j) {
  if (step >= tau.size() || j >= step) {
    throw ShapeError(fmt::format("coefficient a_({},{}) out of range for {} step sizes", step, j,
                                 tau.size()));
  }
  require_positive_tau(tau.first(step + 1));

  // a = P * D with P = tau_step^gamma / tau_j and D = S1^beta - S2^beta,
  // S1 = sum_{i=j}^{step} tau_i, S2 = sum_{i=j+1}^{step} tau_i.
  const double beta = 1.0 - gamma;
  const double head = tau_sum(tau, j, step);
  const double tail = tau_sum(tau, j + 1, step);
  const double p = std::pow(tau[step], gamma) / tau[j];
  const double d = std::pow(head, beta) - std::pow(tail, beta);
  const double dhead = beta * std::pow(head, beta - 1.0);
  const double dtail = beta * std::pow(tail, beta - 1.0);

  Vector partials(step - j + 1);
  partials.front() = -p / tau[j] * d + p * dhead;
  for (std::size_t i = j + 1; i < step; ++i) partials[i - j] = p * (dhead - dtail);
  partials.back() =
      gamma * std::pow(tau[step], gamma - 1.0) / tau[j] * d + p * (dhead - dtail);
  return partials;
}

namespace {

void check_input(const NetworkParams& params, std::span<const double> x) {
  if (x.size() != params.arch.input_width) {
    throw ShapeError(fmt::format("input has length {}, network expects {}", x.size(),
                                 params.arch.input_width));
  }
}

// z^k = W^k u^k + b^k, s^k = sigma(z^k)
void activate(const NetworkParams& params, ForwardCache& cache, std::size_t k) {
  Vector z = matvec(params.weights[k], cache.u[k]);
  const Vector& b = params.biases[k];
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += b[i];
  cache.s.push_back(relu(z));
  cache.z.push_back(std::move(z));
}

ForwardCache start_cache(const NetworkParams& params, std::span<const double> x) {
  ForwardCache cache;
  const std::size_t depth = params.arch.depth;
  cache.u.reserve(depth + 1);
  cache.z.reserve(depth - 1);
  cache.s.reserve(depth - 1);
  cache.u.emplace_back(x.begin(), x.end());
  return cache;
}

}  // namespace

ForwardCache forward_resnet(const NetworkParams& params, std::span<const double> x) {
  check_input(params, x);
  const std::size_t steps = params.arch.steps();
  ForwardCache cache = start_cache(params, x);

  for (std::size_t k = 0; k < steps; ++k) {
    activate(params, cache, k);
    const Vector& s = cache.s[k];
    Vector next(s.size());
    if (k == 0) {
      for (std::size_t i = 0; i < s.size(); ++i) next[i] = params.tau[0] * s[i];
    } else {
      const Vector& prev = cache.u[k];
      for (std::size_t i = 0; i < s.size(); ++i) next[i] = prev[i] + params.tau[k] * s[i];
    }
    cache.u.push_back(std::move(next));
  }
  cache.u.push_back(matvec(params.weights[steps], cache.u[steps]));
  return cache;
}

ForwardCache forward_fractional(const NetworkParams& params, std::span<const double> x) {
  check_input(params, x);
  require_positive_tau(params.tau);
  const std::size_t steps = params.arch.steps();
  ForwardCache cache = start_cache(params, x);
  cache.coeffs.reserve(steps);

  for (std::size_t k = 0; k < steps; ++k) {
    cache.coeffs.push_back(frac_coeffs(params.tau, params.gamma, k));
    const FracCoeffs& c = cache.coeffs.back();
    activate(params, cache, k);
    const Vector& s = cache.s[k];
    Vector next(s.size());
    if (k == 0) {
      for (std::size_t i = 0; i < s.size(); ++i) next[i] = c.step_factor * s[i];
    } else {
      next = cache.u[k];
      for (std::size_t j = kFirstHistoryIndex; j < k; ++j) {
        const Vector& hi = cache.u[j + 1];
        const Vector& lo = cache.u[j];
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= c.a[j] * (hi[i] - lo[i]);
      }
      for (std::size_t i = 0; i < s.size(); ++i) next[i] += c.step_factor * s[i];
    }
    cache.u.push_back(std::move(next));
  }
  cache.u.push_back(matvec(params.weights[steps], cache.u[steps]));
  return cache;
}

ForwardCache forward(const NetworkParams& params, std::span<const double> x) {
  return params.arch.kind == ArchKind::ResNet ? forward_resnet(params, x)
                                              : forward_fractional(params, x);
}

}  // namespace tvl
