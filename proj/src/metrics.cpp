#include "fragility/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "fragility/errors.hpp"
#include "fragility/normal.hpp"
#include "fragility/prior.hpp"

namespace fragility {

void CurveGrid::validate() const {
  if (a.size() != p.size()) throw DomainError("curve grid columns differ in length");
  if (a.size() < 2) throw DomainError("curve grid needs at least two nodes");
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (!(a[i] > a[i - 1])) throw DomainError("curve grid abscissae must be strictly increasing");
  }
}

double CurveGrid::operator()(double x) const {
  if (x <= a.front()) return p.front();
  if (x >= a.back()) return p.back();
  const auto it = std::upper_bound(a.begin(), a.end(), x);
  const auto j = static_cast<std::size_t>(it - a.begin());
  const double t = (x - a[j - 1]) / (a[j] - a[j - 1]);
  return p[j - 1] + t * (p[j] - p[j - 1]);
}

SimpsonGrid::SimpsonGrid(double a_min, double a_max, int intervals) : a_min_(a_min), a_max_(a_max) {
  if (!(a_min < a_max) || !std::isfinite(a_min) || !std::isfinite(a_max)) {
    throw DomainError("Simpson bounds must satisfy a_min < a_max");
  }
  if (intervals < 2) throw DomainError("Simpson rule needs at least two intervals");
  if (intervals % 2 != 0) ++intervals;
  const double h = (a_max - a_min) / intervals;
  nodes_.resize(intervals + 1);
  weights_.resize(intervals + 1);
  for (int i = 0; i <= intervals; ++i) {
    nodes_[i] = i == intervals ? a_max : a_min + i * h;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    weights_[i] = w * h / 3.0 / (a_max - a_min);
  }
}

double SimpsonGrid::norm_sq(std::span<const double> values) const {
  if (values.size() != nodes_.size()) throw DomainError("curve does not match the Simpson grid");
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += weights_[i] * values[i] * values[i];
  return s;
}

double SimpsonGrid::distance_sq(std::span<const double> f, std::span<const double> g) const {
  if (f.size() != nodes_.size() || g.size() != nodes_.size()) {
    throw DomainError("curve does not match the Simpson grid");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = f[i] - g[i];
    s += weights_[i] * d * d;
  }
  return s;
}

std::vector<double> SimpsonGrid::tabulate(const Curve& f) const {
  std::vector<double> out(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) out[i] = f(nodes_[i]);
  return out;
}

bool SimpsonGrid::operator==(const SimpsonGrid& other) const {
  return a_min_ == other.a_min_ && a_max_ == other.a_max_ && nodes_.size() == other.nodes_.size();
}

double l2_norm_sq(const Curve& curve, double a_min, double a_max, int intervals) {
  SimpsonGrid grid(a_min, a_max, intervals);
  return grid.norm_sq(grid.tabulate(curve));
}

double l2_norm_sq(const CurveGrid& curve, double a_min, double a_max, int intervals) {
  curve.validate();
  if (a_min < curve.a.front() || a_max > curve.a.back()) {
    throw DomainError("L2 bounds lie outside the tabulated curve domain");
  }
  return l2_norm_sq(Curve([&](double x) { return curve(x); }), a_min, a_max, intervals);
}

double square_bias(const Curve& median, const Curve& reference, const MetricBounds& bounds) {
  const SimpsonGrid grid = bounds.grid();
  return grid.distance_sq(grid.tabulate(median), grid.tabulate(reference));
}

std::vector<double> median_curve(const PosteriorSample& sample, const SimpsonGrid& grid) {
  const std::array<double, 1> level{0.5};
  return std::move(fragility_quantiles(sample, grid.nodes(), level)[0]);
}

double square_bias(const PosteriorSample& sample, const Curve& reference,
                   const MetricBounds& bounds) {
  const SimpsonGrid grid = bounds.grid();
  return grid.distance_sq(median_curve(sample, grid), grid.tabulate(reference));
}

namespace {

double mean_draw_error(const PosteriorSample& sample, std::span<const double> ref,
                       const SimpsonGrid& grid) {
  std::vector<double> curve(grid.nodes().size());
  double total = 0.0;
  for (const auto& theta : sample.draws) {
    const double log_alpha = std::log(theta.alpha);
    for (std::size_t j = 0; j < curve.size(); ++j) {
      curve[j] = normal::cdf((std::log(grid.nodes()[j]) - log_alpha) / theta.beta);
    }
    total += grid.distance_sq(curve, ref);
  }
  return total / static_cast<double>(sample.draws.size());
}

}  // namespace

double quadratic_error(const PosteriorSample& sample, const Curve& reference,
                       const MetricBounds& bounds) {
  if (sample.draws.empty()) throw DomainError("posterior sample is empty");
  const SimpsonGrid grid = bounds.grid();
  return mean_draw_error(sample, grid.tabulate(reference), grid);
}

double credibility_width(const PosteriorSample& sample, double r, const MetricBounds& bounds) {
  if (!(r > 0.0 && r < 1.0)) throw DomainError("credibility width level r must lie in (0,1)");
  const SimpsonGrid grid = bounds.grid();
  const std::array<double, 2> levels{r / 2.0, 1.0 - r / 2.0};
  const auto q = fragility_quantiles(sample, grid.nodes(), levels);
  return grid.distance_sq(q[1], q[0]);
}

PosteriorMetrics posterior_metrics(const PosteriorSample& sample, const Curve& reference,
                                   const SimpsonGrid& grid, double r) {
  const std::array<double, 3> levels{r / 2.0, 0.5, 1.0 - r / 2.0};
  const auto q = fragility_quantiles(sample, grid.nodes(), levels);
  const auto ref = grid.tabulate(reference);
  return {grid.distance_sq(q[1], ref), mean_draw_error(sample, ref, grid),
          grid.distance_sq(q[2], q[0])};
}

// ---------------------------------------------------------------------------
// Maximum likelihood

namespace {

using Point = std::array<double, 2>;  // (log α, log β)

double neg_log_lik(std::span<const Observation> data, const Point& u) {
  return -log_likelihood(data, {std::exp(u[0]), std::exp(u[1])});
}

struct SimplexResult {
  Point best;
  double value;
  bool converged;
};

SimplexResult nelder_mead(std::span<const Observation> data, const Point& start, double step) {
  std::array<Point, 3> v{start, Point{start[0] + step, start[1]}, Point{start[0], start[1] + step}};
  std::array<double, 3> f{};
  for (int i = 0; i < 3; ++i) f[i] = neg_log_lik(data, v[i]);
  auto diameter = [&] {
    double d = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) d = std::max(d, std::hypot(v[i][0] - v[j][0], v[i][1] - v[j][1]));
    return d;
  };
  bool converged = false;
  for (int iter = 0; iter < 20000; ++iter) {
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
    const int best = order[0];
    const int mid = order[1];
    const int worst = order[2];
    if (diameter() < 1e-8) {
      converged = true;
      break;
    }
    const Point centroid{(v[best][0] + v[mid][0]) / 2.0, (v[best][1] + v[mid][1]) / 2.0};
    auto along = [&](double t) {
      return Point{centroid[0] + t * (v[worst][0] - centroid[0]),
                   centroid[1] + t * (v[worst][1] - centroid[1])};
    };
    const Point reflected = along(-1.0);
    const double fr = neg_log_lik(data, reflected);
    if (fr < f[best]) {
      const Point expanded = along(-2.0);
      const double fe = neg_log_lik(data, expanded);
      if (fe < fr) {
        v[worst] = expanded;
        f[worst] = fe;
      } else {
        v[worst] = reflected;
        f[worst] = fr;
      }
      continue;
    }
    if (fr < f[mid]) {
      v[worst] = reflected;
      f[worst] = fr;
      continue;
    }
    const bool outside = fr < f[worst];
    const Point contracted = along(outside ? -0.5 : 0.5);
    const double fc = neg_log_lik(data, contracted);
    if (fc < (outside ? fr : f[worst])) {
      v[worst] = contracted;
      f[worst] = fc;
      continue;
    }
    for (int i : {mid, worst}) {
      v[i] = Point{v[best][0] + 0.5 * (v[i][0] - v[best][0]), v[best][1] + 0.5 * (v[i][1] - v[best][1])};
      f[i] = neg_log_lik(data, v[i]);
    }
  }
  const int best = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
  return {v[best], f[best], converged};
}

// Gradient and Hessian of the log-likelihood in w = (log α, β).
struct Derivatives {
  Point grad{};
  std::array<Point, 2> hess{};
};

Derivatives log_lik_derivatives(std::span<const Observation> data, double log_alpha, double beta) {
  Derivatives d;
  for (const auto& obs : data) {
    const double log_a = std::log(obs.im);
    const double x = (log_a - log_alpha) / beta;
    const double s = obs.outcome == 1 ? 1.0 : -1.0;
    const double d1 = s * normal::mills_ratio(s * x);
    d.grad[0] += d1 * (-1.0 / beta);
    d.grad[1] += d1 * (-x / beta);
    const FisherMatrix h = log_psi_hessian(log_a, log_alpha, beta, obs.outcome);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) d.hess[r][c] += h[r][c];
  }
  return d;
}

// Newton iterations with step halving; a step is kept when the likelihood improves.
Point newton_polish(std::span<const Observation> data, Point u) {
  double log_alpha = u[0];
  double beta = std::exp(u[1]);
  double current = log_likelihood(data, {std::exp(log_alpha), beta});
  for (int iter = 0; iter < 50; ++iter) {
    const Derivatives d = log_lik_derivatives(data, log_alpha, beta);
    const double det = d.hess[0][0] * d.hess[1][1] - d.hess[0][1] * d.hess[1][0];
    if (!(d.hess[0][0] < 0.0 && det > 0.0)) break;  // not locally concave
    const double s0 = -(d.hess[1][1] * d.grad[0] - d.hess[0][1] * d.grad[1]) / det;
    const double s1 = -(-d.hess[1][0] * d.grad[0] + d.hess[0][0] * d.grad[1]) / det;
    double t = 1.0;
    bool found = false;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      const double nb = beta + t * s1;
      if (!(nb > 0.0)) continue;
      const double na = log_alpha + t * s0;
      const double value = log_likelihood(data, {std::exp(na), nb});
      // Near the optimum the gain drops under the summation roundoff; a tie then
      // counts as progress when the score shrinks.
      bool tied = false;
      if (value < current && value >= current - 1e-13 * std::abs(current)) {
        const Point g = log_lik_derivatives(data, na, nb).grad;
        tied = std::hypot(g[0], g[1]) < std::hypot(d.grad[0], d.grad[1]);
      }
      if (value >= current || tied) {
        log_alpha = na;
        beta = nb;
        current = value;
        found = true;
        break;
      }
    }
    if (!found || std::hypot(t * s0, t * s1) < 1e-14) break;
  }
  return {log_alpha, std::log(beta)};
}

}  // namespace

Theta mle_fit(std::span<const Observation> input) {
  validate_dataset(input);
  // Canonical order makes the floating-point sums, hence the estimate, order-free.
  std::vector<Observation> sorted(input.begin(), input.end());
  std::sort(sorted.begin(), sorted.end(), [](const Observation& x, const Observation& y) {
    return x.im != y.im ? x.im < y.im : x.outcome < y.outcome;
  });
  const std::span<const Observation> data(sorted);
  const Degeneracy status = classify_degeneracy(data);
  if (is_degenerate(status)) {
    throw DegeneracyError(status, "MLE refused: " + std::string(to_string(status)) +
                                      " degenerate likelihood runs away to a unit-step curve");
  }
  double sum_fail = 0.0, sum_safe = 0.0, sum = 0.0, sum2 = 0.0;
  int n_fail = 0, n_safe = 0;
  for (const auto& obs : data) {
    const double l = std::log(obs.im);
    sum += l;
    sum2 += l * l;
    if (obs.outcome == 1) {
      sum_fail += l;
      ++n_fail;
    } else {
      sum_safe += l;
      ++n_safe;
    }
  }
  const double n = static_cast<double>(data.size());
  const double var = std::max(sum2 / n - (sum / n) * (sum / n), 1e-4);
  const Point moment{0.5 * (sum_fail / n_fail + sum_safe / n_safe), std::log(std::sqrt(var))};

  SimplexResult best{moment, std::numeric_limits<double>::infinity(), false};
  for (double shift : {0.0, 0.5, -0.5}) {
    const SimplexResult r = nelder_mead(data, {moment[0] + shift, moment[1] + shift}, 0.25);
    if (r.value < best.value) best = r;
  }
  if (!std::isfinite(best.value)) throw NumericalError("MLE objective is not finite");
  const Point polished = newton_polish(data, best.best);
  if (!best.converged && neg_log_lik(data, polished) >= best.value) {
    throw NumericalError("MLE simplex search did not converge");
  }
  return {std::exp(polished[0]), std::exp(polished[1])};
}

// ---------------------------------------------------------------------------
// Non-parametric reference

std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw DomainError("isotonic fit: size mismatch");
  struct Block {
    double value, weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    blocks.push_back({values[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w = prev.weight + top.weight;
      prev.value = (prev.value * prev.weight + top.value * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.value);
  return out;
}

WilsonInterval wilson_interval(int successes, int trials, double level) {
  if (trials <= 0) throw DomainError("Wilson interval needs at least one trial");
  const double z = normal::quantile(1.0 - (1.0 - level) / 2.0);
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  // Rounding must not push a bound past the point estimate at p = 0 or 1.
  const double lower = successes == 0 ? 0.0 : std::min(p, center - half);
  const double upper = successes == trials ? 1.0 : std::max(p, center + half);
  return {std::max(0.0, lower), std::min(1.0, upper)};
}

ReferenceCurve nonparametric_reference(std::span<const Observation> records, int n_clusters,
                                       double ci_level) {
  validate_dataset(records);
  if (n_clusters <= 0) throw DomainError("n_clusters must be positive");
  if (records.size() < static_cast<std::size_t>(n_clusters)) {
    throw DomainError("nonparametric reference needs at least n_clusters records");
  }
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw DomainError("ci_level must lie in (0,1)");

  std::vector<double> ims;
  ims.reserve(records.size());
  for (const auto& r : records) ims.push_back(r.im);
  std::vector<double> sorted = ims;
  std::sort(sorted.begin(), sorted.end());

  // Centers start at equally spaced sample quantiles (k + 1/2)/K.
  std::vector<double> centers(n_clusters);
  for (int k = 0; k < n_clusters; ++k) {
    centers[k] = sorted_quantile(sorted, (k + 0.5) / n_clusters);
  }
  std::vector<int> assign(ims.size(), -1);
  for (int iter = 0; iter < 1000; ++iter) {
    // Sorted centers: nearest center by binary search over midpoints.
    std::sort(centers.begin(), centers.end());
    bool changed = false;
    for (std::size_t i = 0; i < ims.size(); ++i) {
      auto it = std::lower_bound(centers.begin(), centers.end(), ims[i]);
      int k = static_cast<int>(it - centers.begin());
      if (k == n_clusters) {
        k = n_clusters - 1;
      } else if (k > 0 && ims[i] - centers[k - 1] <= centers[k] - ims[i]) {
        --k;
      }
      if (assign[i] != k) {
        assign[i] = k;
        changed = true;
      }
    }
    std::vector<double> sums(n_clusters, 0.0);
    std::vector<int> counts(n_clusters, 0);
    for (std::size_t i = 0; i < ims.size(); ++i) {
      sums[assign[i]] += ims[i];
      ++counts[assign[i]];
    }
    for (int k = 0; k < n_clusters; ++k) {
      if (counts[k] > 0) centers[k] = sums[k] / counts[k];
    }
    if (!changed && iter > 0) break;
  }

  std::vector<int> counts(n_clusters, 0), failures(n_clusters, 0);
  std::vector<double> sums(n_clusters, 0.0);
  for (std::size_t i = 0; i < ims.size(); ++i) {
    ++counts[assign[i]];
    failures[assign[i]] += records[i].outcome;
    sums[assign[i]] += ims[i];
  }
  ReferenceCurve ref;
  for (int k = 0; k < n_clusters; ++k) {
    if (counts[k] == 0) {
      // Empty clusters carry no records; their neighbours already absorbed them.
      ++ref.merged_clusters;
      continue;
    }
    ref.centers.push_back(sums[k] / counts[k]);
    ref.counts.push_back(counts[k]);
    ref.failure_rates.push_back(static_cast<double>(failures[k]) / counts[k]);
    const WilsonInterval ci = wilson_interval(failures[k], counts[k], ci_level);
    ref.ci_lower.push_back(ci.lower);
    ref.ci_upper.push_back(ci.upper);
  }
  std::vector<double> w(ref.counts.begin(), ref.counts.end());
  ref.monotone_rates = isotonic_fit(ref.failure_rates, w);
  return ref;
}

double ReferenceCurve::operator()(double a) const {
  if (centers.empty()) throw DomainError("empty reference curve");
  if (a <= centers.front()) return monotone_rates.front();
  if (a >= centers.back()) return monotone_rates.back();
  const auto it = std::upper_bound(centers.begin(), centers.end(), a);
  const auto j = static_cast<std::size_t>(it - centers.begin());
  const double t = (std::log(a) - std::log(centers[j - 1])) /
                   (std::log(centers[j]) - std::log(centers[j - 1]));
  return monotone_rates[j - 1] + t * (monotone_rates[j] - monotone_rates[j - 1]);
}

namespace {

double invert_reference(const ReferenceCurve& ref, double q) {
  const auto& r = ref.monotone_rates;
  if (r.empty()) throw DomainError("empty reference curve");
  if (q < r.front() || q > r.back()) {
    throw DomainError("quantile " + std::to_string(q) + " outside the reference range [" +
                      std::to_string(r.front()) + ", " + std::to_string(r.back()) + "]");
  }
  if (q == r.front()) return ref.centers.front();
  for (std::size_t j = 1; j < r.size(); ++j) {
    if (r[j] >= q) {
      const double t = (q - r[j - 1]) / (r[j] - r[j - 1]);
      return std::exp(std::log(ref.centers[j - 1]) +
                      t * (std::log(ref.centers[j]) - std::log(ref.centers[j - 1])));
    }
  }
  return ref.centers.back();
}

void check_levels(double q1, double q2) {
  if (!(q1 > 0.0 && q1 < q2 && q2 < 1.0)) throw DomainError("metric bounds need 0 < q1 < q2 < 1");
}

}  // namespace

MetricBounds resolve_bounds(const ReferenceCurve& reference, double q1, double q2) {
  check_levels(q1, q2);
  MetricBounds b{q1, q2, invert_reference(reference, q1), invert_reference(reference, q2)};
  if (!(b.a_min < b.a_max)) throw DomainError("reference curve is flat between q1 and q2");
  return b;
}

MetricBounds resolve_bounds(const Theta& reference, double q1, double q2) {
  check_levels(q1, q2);
  reference.validate();
  auto inv = [&](double q) {
    return std::exp(reference.beta * normal::quantile(q) + std::log(reference.alpha));
  };
  return {q1, q2, inv(q1), inv(q2)};
}

double model_bias(const Curve& reference, const Theta& mle_theta, const MetricBounds& bounds) {
  mle_theta.validate();
  return square_bias(Curve([&](double a) { return failure_probability(mle_theta, a); }), reference,
                     bounds);
}

void write_reference_table(std::ostream& os, const ReferenceCurve& reference) {
  os << "center,count,failure_rate,monotone_rate,ci_lower,ci_upper\n";
  os.precision(12);
  for (std::size_t k = 0; k < reference.centers.size(); ++k) {
    os << reference.centers[k] << ',' << reference.counts[k] << ',' << reference.failure_rates[k]
       << ',' << reference.monotone_rates[k] << ',' << reference.ci_lower[k] << ','
       << reference.ci_upper[k] << '\n';
  }
}

}  // namespace fragility
