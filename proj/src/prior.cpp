#include "fragility/prior.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "fragility/errors.hpp"
#include "fragility/normal.hpp"

namespace fragility {

void IMStats::validate() const {
  if (!std::isfinite(mu)) throw DomainError("IM log-mean must be finite");
  if (!(std::isfinite(sigma) && sigma > 0.0)) {
    throw DomainError("IM log-standard deviation must be positive, got " + std::to_string(sigma));
  }
}

void PriorConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 2.0)) {
    throw DomainError("gamma must lie in [0,2), got " + std::to_string(gamma));
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError("delta must lie in (0,1), got " + std::to_string(delta));
  }
  im_stats.validate();
}

bool PriorConfig::within_sanctioned_band() const {
  return gamma > 0.0 && gamma < 2.0 / (1.0 + delta);
}

IMStats fit_lognormal_im(std::span<const double> im_sample) {
  if (im_sample.size() < 2) throw DomainError("IM sample needs at least two values");
  double sum = 0.0;
  for (double a : im_sample) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw DomainError("IM sample values must be positive, got " + std::to_string(a));
    }
    sum += std::log(a);
  }
  const double n = static_cast<double>(im_sample.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double a : im_sample) {
    const double d = std::log(a) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw DomainError("degenerate IM sample: all log values are equal");
  return {mean, sd};
}

double log_prior_unnormalized(const Theta& theta, const PriorConfig& cfg) {
  const double log_alpha = std::log(theta.alpha);
  const double log_beta = std::log(theta.beta);
  const double b2 = theta.beta * theta.beta;
  // β^{1-γ} + β^{3-γ} = β^{1-γ}(1 + β²)
  const double log_denominator = log_alpha + (1.0 - cfg.gamma) * log_beta + std::log1p(b2);
  const double s2 = cfg.im_stats.sigma * cfg.im_stats.sigma;
  const double centered = log_alpha - cfg.im_stats.mu;
  return -log_denominator - centered * centered / (2.0 * s2 + 2.0 * b2);
}

const GaussHermiteRule& gauss_hermite(int n) {
  static std::mutex mutex;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(n); it != cache.end()) return it->second;
  if (n < 2) throw DomainError("Gauss-Hermite rule needs at least 2 nodes");

  // Golub-Welsch: eigen-decomposition of the Hermite Jacobi matrix.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double off = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = off;
    jacobi(i - 1, i) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success) throw NumericalError("Gauss-Hermite eigen-solve failed");
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[i] = sqrt_pi * v0 * v0;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

FisherMatrix log_psi_hessian(double log_a, double log_alpha, double beta, int z) {
  const double x = (log_a - log_alpha) / beta;
  // f(x) = log Φ(s x) with s = ±1; f' = s λ(s x), f'' = -λ(s x)(s x + λ(s x)).
  const double s = z == 1 ? 1.0 : -1.0;
  const double lambda = normal::mills_ratio(s * x);
  const double d1 = s * lambda;
  const double d2 = -lambda * (s * x + lambda);
  // ∇x = (-1/β, -x/β); ∇²x = [[0, 1/β²], [1/β², 2x/β²]]
  const double gv = -1.0 / beta;
  const double gb = -x / beta;
  const double ib2 = 1.0 / (beta * beta);
  FisherMatrix h{};
  h[0][0] = d2 * gv * gv;
  h[0][1] = d2 * gv * gb + d1 * ib2;
  h[1][0] = h[0][1];
  h[1][1] = d2 * gb * gb + d1 * 2.0 * x * ib2;
  return h;
}

namespace {

double log_psi_u(double log_a, double log_alpha, double beta, int z) {
  const double x = (log_a - log_alpha) / beta;
  return z == 1 ? normal::log_cdf(x) : normal::log_cdf(-x);
}

// Central differences in u = (log α, β), refined once by Richardson extrapolation.
FisherMatrix log_psi_hessian_fd(double log_a, double log_alpha, double beta, int z) {
  const std::array<double, 2> u{log_alpha, beta};
  auto eval = [&](double du0, double du1) {
    return log_psi_u(log_a, u[0] + du0, u[1] + du1, z);
  };
  auto hessian_at = [&](double h0, double h1) {
    FisherMatrix h{};
    const double f0 = eval(0, 0);
    h[0][0] = (eval(h0, 0) - 2 * f0 + eval(-h0, 0)) / (h0 * h0);
    h[1][1] = (eval(0, h1) - 2 * f0 + eval(0, -h1)) / (h1 * h1);
    h[0][1] = (eval(h0, h1) - eval(h0, -h1) - eval(-h0, h1) + eval(-h0, -h1)) / (4 * h0 * h1);
    h[1][0] = h[0][1];
    return h;
  };
  const double rel = 1e-5;
  const double h0 = rel * std::max(1.0, std::abs(u[0]));
  const double h1 = rel * u[1];
  const FisherMatrix fine = hessian_at(h0, h1);
  const FisherMatrix coarse = hessian_at(2 * h0, 2 * h1);
  FisherMatrix out{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
  return out;
}

}  // namespace

JeffreysResult jeffreys_quadrature(const Theta& theta, const IMStats& im_stats,
                                   const QuadratureSettings& quad) {
  theta.validate();
  im_stats.validate();
  if (quad.nodes < 64) throw DomainError("Jeffreys quadrature needs at least 64 nodes");
  const auto& rule = gauss_hermite(quad.nodes);
  const double log_alpha = std::log(theta.alpha);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);

  FisherMatrix fu{};  // in u = (log α, β)
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double log_a = im_stats.mu + std::numbers::sqrt2 * im_stats.sigma * rule.nodes[i];
    const double w = rule.weights[i] * inv_sqrt_pi;
    const double x = (log_a - log_alpha) / theta.beta;
    for (int z = 0; z <= 1; ++z) {
      const double p = z == 1 ? normal::cdf(x) : normal::cdf(-x);
      if (p == 0.0) continue;
      const FisherMatrix h = quad.hessian == HessianMethod::Analytic
                                 ? log_psi_hessian(log_a, log_alpha, theta.beta, z)
                                 : log_psi_hessian_fd(log_a, log_alpha, theta.beta, z);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) fu[r][c] -= w * p * h[r][c];
    }
  }
  // Expected information transforms with the Jacobian d(log α)/dα = 1/α.
  JeffreysResult out;
  const double ia = 1.0 / theta.alpha;
  out.fisher[0][0] = fu[0][0] * ia * ia;
  out.fisher[0][1] = fu[0][1] * ia;
  out.fisher[1][0] = fu[1][0] * ia;
  out.fisher[1][1] = fu[1][1];
  const double det =
      out.fisher[0][0] * out.fisher[1][1] - out.fisher[0][1] * out.fisher[1][0];
  out.value = std::sqrt(std::abs(det));
  if (!std::isfinite(out.value)) throw NumericalError("Jeffreys quadrature is not finite");
  return out;
}

}  // namespace fragility
