#pragma once

// Independent reference computations used only by the tests. None of them
// calls into the library's numerical kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fragility/model.hpp"

namespace oracle {

/// Φ(x) from the all-positive series erf(y) = (2/√π) e^{-y²} Σ 2^n y^{2n+1}/(2n+1)!!,
/// summed in long double; intended for |x| ≤ 8.
inline double phi(double x) {
  const long double y = std::fabs(static_cast<long double>(x)) / std::sqrt(2.0L);
  long double term = y;
  long double sum = y;
  for (int n = 1; n < 2000; ++n) {
    term *= 2.0L * y * y / (2.0L * n + 1.0L);
    sum += term;
    if (term < sum * 1e-21L) break;
  }
  const long double erf = 2.0L / std::sqrt(3.14159265358979323846264338327950288L) * std::exp(-y * y) * sum;
  const long double half = 0.5L * erf;
  return static_cast<double>(x >= 0 ? 0.5L + half : 0.5L - half);
}

/// Type classification by trying every split point between sorted distinct IMs.
inline fragility::Degeneracy degeneracy_by_splits(const std::vector<fragility::Observation>& data) {
  using fragility::Degeneracy;
  bool any0 = false, any1 = false;
  for (const auto& o : data) (o.outcome == 1 ? any1 : any0) = true;
  if (!any1) return Degeneracy::Type1;
  if (!any0) return Degeneracy::Type2;
  std::vector<double> ims;
  for (const auto& o : data) ims.push_back(o.im);
  std::sort(ims.begin(), ims.end());
  ims.erase(std::unique(ims.begin(), ims.end()), ims.end());
  for (std::size_t i = 0; i + 1 < ims.size(); ++i) {
    const double t = 0.5 * (ims[i] + ims[i + 1]);
    bool separates = true;
    for (const auto& o : data) {
      if ((o.outcome == 1) != (o.im > t)) separates = false;
    }
    if (separates) return Degeneracy::Type3;
  }
  return Degeneracy::NonDegenerate;
}

/// Expected δ-divergence between a discrete posterior (equal weights over `draws`)
/// and its one-step update, by enumerating z and renormalizing.
inline double brute_force_index(double a, const std::vector<fragility::Theta>& draws, double delta) {
  const std::size_t m = draws.size();
  const double p = 1.0 / static_cast<double>(m);
  double total = 0.0;
  for (int z = 0; z <= 1; ++z) {
    std::vector<double> lik(m);
    double marginal = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = (std::log(a) - std::log(draws[i].alpha)) / draws[i].beta;
      lik[i] = 0.5 * std::erfc((z == 1 ? -x : x) / std::sqrt(2.0));
      marginal += p * lik[i];
    }
    double divergence = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double q = p * lik[i] / marginal;
      divergence += std::pow(p, delta) * std::pow(q, 1.0 - delta);
    }
    total += marginal * divergence / (delta * (delta - 1.0));
  }
  return total;
}

/// (1/(b-a)) ∫_a^b f² by adaptive Gauss-Kronrod.
template <typename F>
double l2_norm_sq(F f, double lo, double hi) {
  auto g = [&](double x) {
    const double v = f(x);
    return v * v;
  };
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, lo, hi, 15, 1e-14, &err);
  return v / (hi - lo);
}

/// Unnormalized log-prior written out from the closed form, independently of the library.
inline double log_prior(double alpha, double beta, double gamma, double mu, double sigma) {
  const double la = std::log(alpha);
  return -la - std::log(std::pow(beta, 1.0 - gamma) + std::pow(beta, 3.0 - gamma)) -
         (la - mu) * (la - mu) / (2.0 * sigma * sigma + 2.0 * beta * beta);
}

/// Fisher information of the binary probit model in (α, β):
/// E_a[ φ(x)² / (Φ(x)(1-Φ(x))) ∇x ∇xᵀ ], x = (log a - log α)/β, log a ~ N(μ, σ²).
inline std::array<std::array<double, 2>, 2> fisher_glm(double alpha, double beta, double mu, double sigma) {
  std::array<std::array<double, 2>, 2> f{};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      auto integrand = [&](double t) {
        const double x = (t - std::log(alpha)) / beta;
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
        const double sf = 0.5 * std::erfc(x / std::sqrt(2.0));
        const double w = cdf * sf > 0.0 ? pdf * pdf / (cdf * sf) : 0.0;
        const std::array<double, 2> grad{-1.0 / (alpha * beta), -x / beta};
        const double dens = std::exp(-0.5 * ((t - mu) / sigma) * ((t - mu) / sigma)) / (sigma * std::sqrt(2.0 * M_PI));
        return w * grad[r] * grad[c] * dens;
      };
      double err = 0.0;
      f[r][c] = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          integrand, mu - 12.0 * sigma, mu + 12.0 * sigma, 20, 1e-13, &err);
    }
  }
  return f;
}

/// Posterior mean of (log α, β) on an n×n grid over (log α, log β), density in those
/// coordinates including the Jacobian αβ.
struct GridPosterior {
  double mean_log_alpha = 0.0;
  double mean_beta = 0.0;
  double sd_log_alpha = 0.0;
  double sd_beta = 0.0;
};

inline GridPosterior grid_posterior(const std::vector<fragility::Observation>& data, double gamma, double mu,
                                    double sigma, double la_lo, double la_hi, double lb_lo, double lb_hi,
                                    int n = 400) {
  std::vector<double> logpost(static_cast<std::size_t>(n) * n);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double la = la_lo + (la_hi - la_lo) * (i + 0.5) / n;
    for (int j = 0; j < n; ++j) {
      const double lb = lb_lo + (lb_hi - lb_lo) * (j + 0.5) / n;
      const double beta = std::exp(lb);
      double ll = 0.0;
      for (const auto& o : data) {
        const double x = (std::log(o.im) - la) / beta;
        const double pr = 0.5 * std::erfc((o.outcome == 1 ? -x : x) / std::sqrt(2.0));
        ll += std::log(std::max(pr, 1e-300));
      }
      const double v = ll + log_prior(std::exp(la), beta, gamma, mu, sigma) + la + lb;
      logpost[static_cast<std::size_t>(i) * n + j] = v;
      best = std::max(best, v);
    }
  }
  double z = 0.0, s_la = 0.0, s_b = 0.0, s_la2 = 0.0, s_b2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double la = la_lo + (la_hi - la_lo) * (i + 0.5) / n;
    for (int j = 0; j < n; ++j) {
      const double beta = std::exp(lb_lo + (lb_hi - lb_lo) * (j + 0.5) / n);
      const double w = std::exp(logpost[static_cast<std::size_t>(i) * n + j] - best);
      z += w;
      s_la += w * la;
      s_b += w * beta;
      s_la2 += w * la * la;
      s_b2 += w * beta * beta;
    }
  }
  GridPosterior g;
  g.mean_log_alpha = s_la / z;
  g.mean_beta = s_b / z;
  g.sd_log_alpha = std::sqrt(std::max(0.0, s_la2 / z - g.mean_log_alpha * g.mean_log_alpha));
  g.sd_beta = std::sqrt(std::max(0.0, s_b2 / z - g.mean_beta * g.mean_beta));
  return g;
}

/// Batch-means standard error of a correlated series (20 batches).
inline double batch_means_se(const std::vector<double>& x, int batches = 20) {
  const std::size_t len = x.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += x[b * len + i];
    means.push_back(s / static_cast<double>(len));
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= batches;
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / (batches - 1) / batches);
}

}  // namespace oracle
