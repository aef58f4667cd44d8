#pragma once

// Sequential campaign loop shared by toy cases, signal databases and interactive sessions.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fragility/doe.hpp"
#include "fragility/metrics.hpp"
#include "fragility/model.hpp"
#include "fragility/posterior.hpp"
#include "fragility/prior.hpp"

namespace fragility {

enum class Method { Standard, Doe };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// One acquired experiment.
struct Acquired {
  std::int64_t id = -1;
  double a = 0.0;
  int z = 0;
  bool clamped = false;  // the suggestion fell outside the domain and was moved to its edge
};

/// Where experiments come from. A source owns its random streams.
class ExperimentSource {
 public:
  virtual ~ExperimentSource() = default;
  /// One of the k0 initial experiments.
  virtual Acquired draw_initial() = 0;
  /// Next experiment under the IM's natural distribution.
  virtual Acquired draw_standard() = 0;
  /// Grid on which the design index is maximized.
  virtual const CandidateSet& index_candidates() const = 0;
  /// Experiment realizing the suggested IM.
  virtual Acquired acquire(double a_target) = 0;
};

struct StepRecord {
  int k = 0;  // dataset size after the step
  std::int64_t signal_id = -1;
  double a = 0.0;
  int z = 0;
  bool clamped = false;
  Degeneracy degeneracy = Degeneracy::Type1;
  std::optional<double> index_value;  // achieved index maximum (design mode)
  std::optional<double> vi;
  std::optional<double> vp;
  std::optional<double> acceptance_rate;
};

struct CheckpointRecord {
  int k = 0;
  Degeneracy degeneracy = Degeneracy::Type1;
  std::optional<PosteriorMetrics> metrics;  // needs a reference curve and a proper posterior
  std::vector<double> a;                    // quantile curves (empty without a posterior)
  std::vector<double> lower;
  std::vector<double> median;
  std::vector<double> upper;
};

struct CampaignTrace {
  Method method = Method::Doe;
  std::uint64_t seed = 0;
  std::vector<Acquired> initial;
  std::vector<StepRecord> steps;
  std::vector<CheckpointRecord> checkpoints;
  bool stopped_early = false;

  Dataset dataset() const;
  /// Degeneracy of the first k observations.
  Degeneracy degeneracy_at(int k) const;
};

/// Lighter chain than the single-fit default: 1000 retained draws.
MHConfig campaign_mh_defaults();

/// k ∈ {step, 2 step, ...} up to k_max.
std::vector<int> default_checkpoints(int k_max, int step = 10);

struct CampaignSettings {
  Method method = Method::Doe;
  PriorConfig prior{};
  int k0 = 2;
  int k_max = 250;
  MHConfig mh = campaign_mh_defaults();
  bool warm_start = true;
  /// Sample the posterior after every step (needed for 𝒱𝒫); otherwise only at checkpoints.
  bool track_stopping = true;
  std::vector<int> checkpoints;
  MetricBounds bounds{};
  std::optional<Curve> reference;
  double credibility_r = 0.05;
  double vi_threshold = 1e-3;
  double vp_threshold = 0.05;
  bool early_stop = false;
  int quantile_curve_points = 51;
  std::uint64_t seed = 0;
  std::function<void(const StepRecord&)> on_step;

  void validate() const;
};

/// Runs k0 initial acquisitions then k_max - k0 selections.
CampaignTrace run_campaign(ExperimentSource& source, const CampaignSettings& settings);

/// Early stop rule: both indices below threshold and a non-degenerate dataset.
bool should_stop(const StepRecord& step, double vi_threshold, double vp_threshold);

}  // namespace fragility
