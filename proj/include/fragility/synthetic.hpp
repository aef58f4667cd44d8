#pragma once

// Toy cases: outcomes generated by the exact probit-lognormal model on a capped IM domain.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "fragility/campaign.hpp"
#include "fragility/model.hpp"
#include "fragility/prior.hpp"

namespace fragility {

/// Quantile level standing in for q = 1.
inline constexpr double kFullCapQuantile = 1.0 - 1e-3;

struct ToyConfig {
  Theta theta_star{3.0, 0.3};
  double q_cap = kFullCapQuantile;  // a_max = a_{q_cap}; 1 means 1 - 1e-3
  double q_floor = 1e-3;            // lower end of initial draws and the candidate grid
  std::optional<double> im_log_mean;  // standard-mode IM law, default log α*
  double im_log_sd = 1.0;
  int grid_size = 512;
  std::uint64_t seed = 0;  // fixes the IM moments used by the prior

  void validate() const;
  double effective_q_cap() const;
  double a_max() const;
  double a_min() const;
  /// Upper end of the candidate grid, a_{1-1e-3}; suggestions above a_max are clamped.
  double grid_upper() const;
  double log_mean() const;
};

/// Bernoulli draw with probability Φ(log(a/α*)/β*).
int sample_outcome(const Theta& theta_star, double a, std::mt19937_64& rng);

/// Outcome from a given uniform: 1 iff u < P_f(a).
int outcome_from_uniform(const Theta& theta_star, double a, double u);

/// exp(β* t_q + log α*).
double quantile_im(const Theta& theta_star, double q);

/// (α* e^{-β*}, α* e^{β*}).
std::pair<double, double> optimal_points(const Theta& theta_star);

/// Log-affine map sending [c21, c22] onto [c11, c12].
double rescale_im(double a2, std::pair<double, double> domain1, std::pair<double, double> domain2);

/// Moments of log A under the truncated standard-mode IM law, by Monte Carlo.
IMStats toy_im_stats(const ToyConfig& cfg, int draws = 100000);

/// Toy experiments: initial IMs log-uniform on [a_min, a_max], outcomes from one
/// uniform per acquisition (shared across methods), standard draws from the truncated lognormal.
class ToySource : public ExperimentSource {
 public:
  ToySource(const ToyConfig& cfg, std::uint64_t campaign_seed);

  Acquired draw_initial() override;
  Acquired draw_standard() override;
  const CandidateSet& index_candidates() const override { return candidates_; }
  Acquired acquire(double a_target) override;

 private:
  Acquired observe(double a, bool clamped);

  ToyConfig cfg_;
  double log_alpha_;
  double a_min_;
  double a_max_;
  CandidateSet candidates_;
  std::mt19937_64 init_rng_;
  std::mt19937_64 outcome_rng_;
  std::mt19937_64 standard_rng_;
  std::int64_t next_id_ = 0;
};

/// Log-affine IM map sending [from.first, from.second] onto [to.first, to.second];
/// unlike rescale_im it extends beyond the domain.
class LogAffineMap {
 public:
  LogAffineMap(std::pair<double, double> from, std::pair<double, double> to);
  double operator()(double a) const;
  LogAffineMap inverse() const;
  double slope() const { return slope_; }
  /// Moments of log A carried through the map.
  IMStats map_stats(const IMStats& s) const;

 private:
  double slope_;
  double log_from_;
  double log_to_;
};

/// Another source's experiments seen through a rescaled IM: every IM it reports is
/// mapped forward and every requested IM is mapped back before acquisition.
class RescaledSource : public ExperimentSource {
 public:
  RescaledSource(ExperimentSource& inner, const LogAffineMap& map);
  Acquired draw_initial() override;
  Acquired draw_standard() override;
  const CandidateSet& index_candidates() const override { return candidates_; }
  Acquired acquire(double a_target) override;

 private:
  Acquired forward(Acquired e) const;
  ExperimentSource& inner_;
  LogAffineMap map_;
  LogAffineMap back_;
  CandidateSet candidates_;
};

/// Settings for a campaign run through RescaledSource: prior IM moments, metric
/// bounds and the reference curve expressed in the mapped IM.
CampaignSettings rescale_settings(CampaignSettings settings, const LogAffineMap& map);

struct ToyRunOptions {
  int k_max = 250;
  PriorConfig prior{};                // im_stats replaced by toy_im_stats unless overridden
  std::optional<IMStats> im_stats;
  MHConfig mh = campaign_mh_defaults();
  std::vector<int> checkpoints;
  bool track_stopping = true;
  bool warm_start = true;
  bool early_stop = false;
  double q1 = 1e-3;
  double q2 = 0.9;
};

/// Campaign on the toy case; the reference curve is the exact model at θ*.
CampaignTrace run_toy_campaign(const ToyConfig& cfg, Method method, const ToyRunOptions& options,
                               std::uint64_t campaign_seed);

/// Settings run_toy_campaign would use, for callers that drive the loop themselves.
CampaignSettings toy_campaign_settings(const ToyConfig& cfg, Method method,
                                       const ToyRunOptions& options, std::uint64_t campaign_seed);

/// n (IM, outcome) pairs with IMs from the truncated standard-mode law.
std::vector<Observation> toy_pool(const ToyConfig& cfg, std::size_t n, std::uint64_t seed);

}  // namespace fragility
