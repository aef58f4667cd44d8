#pragma once

// Unnormalized posterior, adaptive Metropolis sampling and posterior curve summaries.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fragility/model.hpp"
#include "fragility/prior.hpp"

namespace fragility {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

/// The posterior would be improper: γ = 0 with a degenerate likelihood.
class RobustnessError : public DegeneracyError {
 public:
  using DegeneracyError::DegeneracyError;
};

struct MHConfig {
  int chain_length = 20000;
  double burn_in = 0.5;  // fraction of the chain discarded
  int thin = 10;
  std::optional<Theta> init_theta;      // default: (exp μ_A, σ_A)
  std::optional<Mat2> init_covariance;  // proposal covariance in u before adaptation
  double init_proposal_scale = 0.5;
  double adapt_regularization = 1e-10;
  int adapt_start = 200;
  std::uint64_t seed = 0;

  std::size_t burn_count() const;
  std::size_t retained() const;
  /// Throws DomainError on inconsistent settings or fewer than 100 retained draws.
  void validate() const;
};

struct PosteriorSample {
  std::vector<Theta> draws;
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  MHConfig config{};
  Vec2 final_state{};     // last chain state in u = (log α, log β)
  Mat2 draw_covariance{};  // empirical covariance of the retained draws in u
};

double log_posterior_unnormalized(std::span<const Observation> data, const Theta& theta,
                                  const PriorConfig& prior_cfg);

/// Throws RobustnessError when γ = 0 and the likelihood is degenerate.
void require_proper_posterior(std::span<const Observation> data, const PriorConfig& prior_cfg);

struct ChainResult {
  std::vector<Vec2> draws;  // retained states
  double acceptance_rate = 0.0;
  Vec2 final_state{};
};

/// Adaptive random-walk Metropolis on R²: after `adapt_start` iterations the
/// Gaussian proposal uses (2.38²/2)(running covariance + ε I).
ChainResult adaptive_metropolis(const std::function<double(const Vec2&)>& log_target,
                                const Vec2& init, const Mat2& init_covariance,
                                const MHConfig& mh);

/// Samples p(θ | data) in u = (log α, log β); deterministic given mh.seed.
PosteriorSample sample_posterior(std::span<const Observation> data, const PriorConfig& prior_cfg,
                                 const MHConfig& mh);

/// Hyndman-Fan type 2 quantile (inverted CDF, averaging at discontinuities) of sorted values.
double sorted_quantile(std::span<const double> sorted, double q);

/// Pointwise posterior quantiles of P_f(a) at each of `levels`; result[l][j] is level l at a_grid[j].
std::vector<std::vector<double>> fragility_quantiles(const PosteriorSample& sample,
                                                     std::span<const double> a_grid,
                                                     std::span<const double> levels);

struct CredibilityBand {
  std::vector<double> a;
  std::vector<double> lower;
  std::vector<double> median;
  std::vector<double> upper;
};

CredibilityBand credibility_band(const PosteriorSample& sample, std::span<const double> a_grid,
                                 double level);

/// Mean curve of P_f(a) over the draws.
std::vector<double> mean_fragility(const PosteriorSample& sample, std::span<const double> a_grid);

/// Comma-separated `alpha,beta` table with header.
void write_sample_table(std::ostream& os, const PosteriorSample& sample);

}  // namespace fragility
