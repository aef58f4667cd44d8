#pragma once

// Curve norms and the error metrics used to benchmark posterior fragility estimates.

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fragility/model.hpp"
#include "fragility/posterior.hpp"

namespace fragility {

using Curve = std::function<double(double)>;

/// Tabulated curve, linearly interpolated between nodes.
struct CurveGrid {
  std::vector<double> a;
  std::vector<double> p;

  void validate() const;
  double operator()(double x) const;
};

/// Composite Simpson rule on an even subdivision of [a_min, a_max].
class SimpsonGrid {
 public:
  SimpsonGrid(double a_min, double a_max, int intervals = 200);

  std::span<const double> nodes() const { return nodes_; }
  double a_min() const { return a_min_; }
  double a_max() const { return a_max_; }
  /// (1/(a_max - a_min)) ∫ f² with f given at the nodes.
  double norm_sq(std::span<const double> values) const;
  /// Same as norm_sq on the pointwise difference.
  double distance_sq(std::span<const double> f, std::span<const double> g) const;
  std::vector<double> tabulate(const Curve& f) const;

  bool operator==(const SimpsonGrid& other) const;

 private:
  double a_min_;
  double a_max_;
  std::vector<double> nodes_;
  std::vector<double> weights_;  // already divided by (a_max - a_min)
};

/// ‖P‖² = (1/(a_max - a_min)) ∫ P(a)² da.
double l2_norm_sq(const Curve& curve, double a_min, double a_max, int intervals = 200);
/// Grid form; throws DomainError if [a_min, a_max] leaves the tabulated range.
double l2_norm_sq(const CurveGrid& curve, double a_min, double a_max, int intervals = 200);

struct MetricBounds {
  double q1 = 1e-3;
  double q2 = 0.9;
  double a_min = 0.0;
  double a_max = 0.0;

  SimpsonGrid grid(int intervals = 200) const { return SimpsonGrid(a_min, a_max, intervals); }
};

/// ℬ = ‖m - P_ref‖².
double square_bias(const Curve& median_curve, const Curve& reference, const MetricBounds& bounds);
double square_bias(const PosteriorSample& sample, const Curve& reference, const MetricBounds& bounds);

/// ℰ = E_θ ‖P_θ - P_ref‖² over the posterior draws.
double quadratic_error(const PosteriorSample& sample, const Curve& reference,
                       const MetricBounds& bounds);

/// 𝒲 = ‖q_{1-r/2} - q_{r/2}‖².
double credibility_width(const PosteriorSample& sample, double r, const MetricBounds& bounds);

struct PosteriorMetrics {
  double bias = 0.0;   // ℬ
  double error = 0.0;  // ℰ
  double width = 0.0;  // 𝒲
};

/// All three metrics from one pass over the Simpson nodes.
PosteriorMetrics posterior_metrics(const PosteriorSample& sample, const Curve& reference,
                                   const SimpsonGrid& grid, double r = 0.05);

/// Posterior median fragility curve at the grid nodes.
std::vector<double> median_curve(const PosteriorSample& sample, const SimpsonGrid& grid);

/// Maximum-likelihood θ by multi-start Nelder-Mead in (log α, log β) with a
/// Newton polish. Throws DegeneracyError for degenerate datasets.
Theta mle_fit(std::span<const Observation> data);

struct ReferenceCurve {
  std::vector<double> centers;        // increasing
  std::vector<double> failure_rates;  // raw per-cluster rates
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<int> counts;
  std::vector<double> monotone_rates;  // isotonic fit of failure_rates
  int merged_clusters = 0;             // clusters dropped empty by K-means

  /// Monotone rates linearly interpolated in log a; constant beyond the end centers.
  double operator()(double a) const;
};

/// Clusters IMs with 1-D K-means (quantile initialization) and reports per-cluster
/// failure rates with Wilson score intervals at `ci_level`.
ReferenceCurve nonparametric_reference(std::span<const Observation> records, int n_clusters,
                                       double ci_level = 0.95);

/// Pool-adjacent-violators fit, non-decreasing, weighted.
std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights);

struct WilsonInterval {
  double lower;
  double upper;
};
WilsonInterval wilson_interval(int successes, int trials, double level);

/// Inverts the monotone reference at q1 and q2.
MetricBounds resolve_bounds(const ReferenceCurve& reference, double q1, double q2);
MetricBounds resolve_bounds(const Theta& reference, double q1, double q2);

/// 𝓜𝓑 = ‖P_ref - P_MLE‖².
double model_bias(const Curve& reference, const Theta& mle_theta, const MetricBounds& bounds);

void write_reference_table(std::ostream& os, const ReferenceCurve& reference);

}  // namespace fragility
