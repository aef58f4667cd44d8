#pragma once

// Constrained reference prior (closed-form approximation) and a quadrature
// evaluation of the Jeffreys prior used to cross-check it.

#include <array>
#include <span>
#include <vector>

#include "fragility/model.hpp"

namespace fragility {

/// Moments of log A under the lognormal IM approximation.
struct IMStats {
  double mu = 0.0;     // mean of log A
  double sigma = 1.0;  // standard deviation of log A

  void validate() const;
};

struct PriorConfig {
  double gamma = 0.5;
  double delta = 0.5;
  IMStats im_stats{};

  /// Throws DomainError when gamma is outside [0,2) or delta outside (0,1).
  void validate() const;
  /// True when gamma > 0 and gamma < 2/(1+delta).
  bool within_sanctioned_band() const;
};

/// mu = mean of log values, sigma = n-1 standard deviation of log values.
IMStats fit_lognormal_im(std::span<const double> im_sample);

/// log[ 1/(α(β^{1-γ}+β^{3-γ})) · exp(-(log α - μ_A)²/(2σ_A² + 2β²)) ], no normalizing constant.
double log_prior_unnormalized(const Theta& theta, const PriorConfig& cfg);

enum class HessianMethod { Analytic, FiniteDifference };

struct QuadratureSettings {
  int nodes = 128;
  HessianMethod hessian = HessianMethod::Analytic;
};

/// 2x2 Fisher information in (α, β), row-major.
using FisherMatrix = std::array<std::array<double, 2>, 2>;

struct JeffreysResult {
  double value = 0.0;  // sqrt(|det F|)
  FisherMatrix fisher{};
};

/// Fisher information by Gauss-Hermite quadrature over log a ~ N(μ_A, σ_A²),
/// summing -Ψ^z ∇² log Ψ^z over z. Throws NumericalError on a non-finite result.
JeffreysResult jeffreys_quadrature(const Theta& theta, const IMStats& im_stats,
                                   const QuadratureSettings& quad = {});

/// Physicists' Gauss-Hermite rule (weight e^{-t²}) with `n` nodes.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite(int n);

/// Hessian of log Ψ^z_a w.r.t. u = (log α, β), row-major.
FisherMatrix log_psi_hessian(double log_a, double log_alpha, double beta, int z);

}  // namespace fragility
