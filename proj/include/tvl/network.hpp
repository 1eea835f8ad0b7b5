#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "tvl/tensor.hpp"

namespace tvl {

enum class ArchKind { ResNet, Fractional };
enum class Activation { ReLU };

std::string_view to_string(ArchKind kind);

/// Raised when a fractional network sees a non-positive step size.
class DegeneracyError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Depth L network with widths n_0 = input, n_1..n_{L-1} = hidden,
/// n_L = output. Skip connections require equal hidden widths.
struct Architecture {
  ArchKind kind = ArchKind::ResNet;
  std::size_t depth = 7;
  std::size_t input_width = 784;
  std::size_t hidden_width = 100;
  std::size_t output_width = 10;
  Activation activation = Activation::ReLU;

  /// n_layer for layer in [0, depth].
  std::size_t width(std::size_t layer) const;
  /// Number of step sizes, L - 1.
  std::size_t steps() const noexcept { return depth - 1; }
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All learnable variables. weights[l] maps layer l to l+1 (n_{l+1} x n_l);
/// the output map weights[L-1] carries no bias. tau[k] scales the update
/// producing u^{k+1}. tau_ids[k] is the index tau[k] had in the unpruned
/// network and survives renumbering after pruning.
struct NetworkParams {
  Architecture arch;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Vector tau;
  double gamma = 0.5;
  std::vector<std::size_t> tau_ids;

  void validate() const;
  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// History coefficients a_{step,j} for j = 0..step-1 together with the
/// update scale (tau^step)^gamma * Gamma(2 - gamma).
struct FracCoeffs {
  std::size_t step = 0;
  Vector a;
  double step_factor = 0.0;
  /// d step_factor / d tau^step = gamma (tau^step)^(gamma-1) Gamma(2 - gamma)
  double step_factor_derivative = 0.0;
};

/// The history sum skips j = 0: u^0 lives in the input space, not the
/// hidden one.
inline constexpr std::size_t kFirstHistoryIndex = 1;

struct ForwardCache {
  std::vector<Vector> u;  // u^0 .. u^L
  std::vector<Vector> z;  // pre-activations z^0 .. z^{L-2}
  std::vector<Vector> s;  // sigma(z^k)
  std::vector<FracCoeffs> coeffs;  // fractional only, one per step

  const Vector& logits() const { return u.back(); }
};

NetworkParams init_params(const Architecture& arch, double horizon, std::uint64_t seed,
                          double gamma = 0.5);

std::size_t count_params(const NetworkParams& params);

/// Gamma(2 - gamma), the fractional update constant.
double fractional_gamma_factor(double gamma);

FracCoeffs frac_coeffs(std::span<const double> tau, double gamma, std::size_t step);

/// Partial derivatives of a_{step,j} with respect to tau[i] for
/// i = j..step (entry 0 is i = j); a_{step,j} does not depend on other taus.
Vector frac_coeff_partials(std::span<const double> tau, double gamma, std::size_t step,
                           std::size_t j);

ForwardCache forward_resnet(const NetworkParams& params, std::span<const double> x);
ForwardCache forward_fractional(const NetworkParams& params, std::span<const double> x);
ForwardCache forward(const NetworkParams& params, std::span<const double> x);

/// sum_{i=first}^{last} tau[i], ascending; zero when first > last.
double tau_sum(std::span<const double> tau, std::size_t first, std::size_t last);

/// Throws DegeneracyError unless every tau is strictly positive.
void require_positive_tau(std::span<const double> tau);

}  // namespace tvl
