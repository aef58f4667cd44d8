#include "fragility/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <utility>

#include "fragility/errors.hpp"
#include "fragility/normal.hpp"

namespace fragility {

std::size_t MHConfig::burn_count() const {
  return static_cast<std::size_t>(std::floor(chain_length * burn_in));
}

std::size_t MHConfig::retained() const {
  if (chain_length <= 0 || thin <= 0) return 0;
  const std::size_t kept = static_cast<std::size_t>(chain_length) - burn_count();
  return (kept + static_cast<std::size_t>(thin) - 1) / static_cast<std::size_t>(thin);
}

void MHConfig::validate() const {
  if (chain_length <= 0) throw DomainError("chain_length must be positive");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw DomainError("burn_in must lie in [0,1)");
  if (thin <= 0) throw DomainError("thin must be positive");
  if (!(init_proposal_scale > 0.0)) throw DomainError("init_proposal_scale must be positive");
  if (!(adapt_regularization > 0.0)) throw DomainError("adapt_regularization must be positive");
  if (adapt_start < 2) throw DomainError("adapt_start must be at least 2");
  if (init_theta) init_theta->validate();
  if (retained() < 100) {
    throw DomainError("MCMC settings retain " + std::to_string(retained()) +
                      " draws; at least 100 are required");
  }
}

double log_posterior_unnormalized(std::span<const Observation> data, const Theta& theta,
                                  const PriorConfig& prior_cfg) {
  return log_likelihood(data, theta) + log_prior_unnormalized(theta, prior_cfg);
}

void require_proper_posterior(std::span<const Observation> data, const PriorConfig& prior_cfg) {
  if (prior_cfg.gamma > 0.0) return;
  const Degeneracy status = classify_degeneracy(data);
  if (is_degenerate(status)) {
    throw RobustnessError(status, "improper posterior: gamma = 0 with a " +
                                      std::string(to_string(status)) + " degenerate likelihood");
  }
}

namespace {

// Lower Cholesky factor of a 2x2 SPD matrix.
Mat2 cholesky(const Mat2& m) {
  const double l00 = std::sqrt(m[0][0]);
  const double l10 = m[1][0] / l00;
  const double d = m[1][1] - l10 * l10;
  if (!(l00 > 0.0) || !(d > 0.0)) throw NumericalError("proposal covariance is not positive definite");
  return {{{l00, 0.0}, {l10, std::sqrt(d)}}};
}

// Observations grouped by (IM, outcome); a campaign revisits the same IMs often.
struct WeightedTerm {
  double log_a;
  double count;
  int outcome;
};

std::vector<WeightedTerm> group_observations(std::span<const Observation> data) {
  std::map<std::pair<double, int>, int> counts;
  for (const auto& obs : data) ++counts[{obs.im, obs.outcome}];
  std::vector<WeightedTerm> terms;
  terms.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    terms.push_back({std::log(key.first), static_cast<double>(n), key.second});
  }
  return terms;
}

}  // namespace

ChainResult adaptive_metropolis(const std::function<double(const Vec2&)>& log_target,
                                const Vec2& init, const Mat2& init_covariance,
                                const MHConfig& mh) {
  mh.validate();
  std::mt19937_64 rng(mh.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vec2 state = init;
  double current = log_target(state);
  if (!std::isfinite(current)) throw NumericalError("log-target is not finite at the initial state");

  const double scale = 2.38 * 2.38 / 2.0;
  Mat2 chol = cholesky(init_covariance);
  Vec2 mean = state;
  Mat2 scatter{};  // Σ (x - mean)(x - mean)ᵀ, Welford form
  std::size_t seen = 1;
  std::size_t accepted = 0;

  ChainResult out;
  out.draws.reserve(mh.retained());
  const std::size_t burn = mh.burn_count();
  const auto n = static_cast<std::size_t>(mh.chain_length);
  for (std::size_t t = 0; t < n; ++t) {
    if (t >= static_cast<std::size_t>(mh.adapt_start)) {
      const double inv = 1.0 / static_cast<double>(seen - 1);
      Mat2 cov{};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          cov[r][c] = scale * (scatter[r][c] * inv + (r == c ? mh.adapt_regularization : 0.0));
      chol = cholesky(cov);
    }
    const double e0 = gauss(rng);
    const double e1 = gauss(rng);
    const Vec2 proposal{state[0] + chol[0][0] * e0, state[1] + chol[1][0] * e0 + chol[1][1] * e1};
    const double candidate = log_target(proposal);
    const double log_u = std::log(unif(rng));
    if (std::isfinite(candidate) && log_u < candidate - current) {
      state = proposal;
      current = candidate;
      ++accepted;
    }
    ++seen;
    const Vec2 delta{state[0] - mean[0], state[1] - mean[1]};
    mean[0] += delta[0] / static_cast<double>(seen);
    mean[1] += delta[1] / static_cast<double>(seen);
    const Vec2 delta2{state[0] - mean[0], state[1] - mean[1]};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) scatter[r][c] += delta[r] * delta2[c];

    if (t >= burn && (t - burn) % static_cast<std::size_t>(mh.thin) == 0) out.draws.push_back(state);
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n);
  out.final_state = state;
  return out;
}

PosteriorSample sample_posterior(std::span<const Observation> data, const PriorConfig& prior_cfg,
                                 const MHConfig& mh) {
  prior_cfg.validate();
  validate_dataset(data);
  mh.validate();
  require_proper_posterior(data, prior_cfg);

  const auto terms = group_observations(data);
  // Density in u = (log α, log β) carries the Jacobian αβ.
  auto log_target = [&](const Vec2& u) {
    const double alpha = std::exp(u[0]);
    const double beta = std::exp(u[1]);
    const double inv_beta = 1.0 / beta;
    double ll = 0.0;
    for (const auto& t : terms) {
      const double x = (t.log_a - u[0]) * inv_beta;
      ll += t.count * (t.outcome == 1 ? normal::log_cdf(x) : normal::log_cdf(-x));
    }
    return ll + log_prior_unnormalized({alpha, beta}, prior_cfg) + u[0] + u[1];
  };

  const auto& stats = prior_cfg.im_stats;
  const Theta init = mh.init_theta.value_or(Theta{std::exp(stats.mu), stats.sigma});
  const Vec2 u0{std::log(init.alpha), std::log(init.beta)};
  Mat2 cov0{};
  if (mh.init_covariance) {
    cov0 = *mh.init_covariance;
  } else {
    // The log α step follows the IM spread so the chain is scale-equivariant.
    const double s = mh.init_proposal_scale;
    cov0 = {{{s * s * stats.sigma * stats.sigma, 0.0}, {0.0, s * s}}};
  }
  ChainResult chain = adaptive_metropolis(log_target, u0, cov0, mh);

  PosteriorSample sample;
  sample.acceptance_rate = chain.acceptance_rate;
  sample.seed = mh.seed;
  sample.config = mh;
  sample.final_state = chain.final_state;
  sample.draws.reserve(chain.draws.size());
  Vec2 mean{};
  for (const auto& u : chain.draws) {
    sample.draws.push_back({std::exp(u[0]), std::exp(u[1])});
    mean[0] += u[0];
    mean[1] += u[1];
  }
  const double m = static_cast<double>(chain.draws.size());
  mean[0] /= m;
  mean[1] /= m;
  for (const auto& u : chain.draws) {
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        sample.draw_covariance[r][c] += (u[r] - mean[r]) * (u[c] - mean[c]) / (m - 1.0);
  }
  return sample;
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const auto n = sorted.size();
  const double h = q * static_cast<double>(n);
  const double j = std::round(h);
  if (std::abs(h - j) < 1e-9 * static_cast<double>(n)) {
    const auto k = static_cast<std::size_t>(j);
    if (k == 0) return sorted.front();
    if (k >= n) return sorted.back();
    return 0.5 * (sorted[k - 1] + sorted[k]);
  }
  const auto k = static_cast<std::size_t>(std::ceil(h));
  return sorted[std::clamp<std::size_t>(k, 1, n) - 1];
}

std::vector<std::vector<double>> fragility_quantiles(const PosteriorSample& sample,
                                                     std::span<const double> a_grid,
                                                     std::span<const double> levels) {
  if (sample.draws.empty()) throw DomainError("posterior sample is empty");
  const std::size_t m = sample.draws.size();
  std::vector<double> log_alpha(m), inv_beta(m);
  for (std::size_t i = 0; i < m; ++i) {
    log_alpha[i] = std::log(sample.draws[i].alpha);
    inv_beta[i] = 1.0 / sample.draws[i].beta;
  }
  std::vector<std::vector<double>> out(levels.size(), std::vector<double>(a_grid.size()));
  std::vector<double> p(m);
  for (std::size_t j = 0; j < a_grid.size(); ++j) {
    if (!(a_grid[j] > 0.0)) throw DomainError("fragility grid values must be positive");
    const double log_a = std::log(a_grid[j]);
    for (std::size_t i = 0; i < m; ++i) p[i] = normal::cdf((log_a - log_alpha[i]) * inv_beta[i]);
    std::sort(p.begin(), p.end());
    for (std::size_t l = 0; l < levels.size(); ++l) out[l][j] = sorted_quantile(p, levels[l]);
  }
  return out;
}

CredibilityBand credibility_band(const PosteriorSample& sample, std::span<const double> a_grid,
                                 double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("credibility level must lie in (0,1)");
  for (std::size_t j = 1; j < a_grid.size(); ++j) {
    if (!(a_grid[j] > a_grid[j - 1])) throw DomainError("credibility grid must be increasing");
  }
  const double tail = (1.0 - level) / 2.0;
  const std::array<double, 3> levels{tail, 0.5, 1.0 - tail};
  auto q = fragility_quantiles(sample, a_grid, levels);
  return {std::vector<double>(a_grid.begin(), a_grid.end()), std::move(q[0]), std::move(q[1]),
          std::move(q[2])};
}

std::vector<double> mean_fragility(const PosteriorSample& sample, std::span<const double> a_grid) {
  if (sample.draws.empty()) throw DomainError("posterior sample is empty");
  std::vector<double> out(a_grid.size(), 0.0);
  for (const auto& theta : sample.draws) {
    for (std::size_t j = 0; j < a_grid.size(); ++j) out[j] += failure_probability(theta, a_grid[j]);
  }
  for (double& v : out) v /= static_cast<double>(sample.draws.size());
  return out;
}

void write_sample_table(std::ostream& os, const PosteriorSample& sample) {
  os << "alpha,beta\n";
  os.precision(17);
  for (const auto& d : sample.draws) os << d.alpha << ',' << d.beta << '\n';
}

}  // namespace fragility
