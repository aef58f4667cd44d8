#include "fragility/doe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "fragility/errors.hpp"

namespace fragility {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0,1)");
}

// Ψ^ζ, with the common ζ = 1/2 case routed to sqrt.
struct PowerFn {
  double zeta;
  bool half;
  explicit PowerFn(double z) : zeta(z), half(z == 0.5) {}
  double operator()(double p) const { return half ? std::sqrt(p) : std::pow(p, zeta); }
};

template <typename WeightFn>
IndexTerms accumulate_terms(double a, std::span<const Theta> draws, double delta, WeightFn weight) {
  if (draws.empty()) throw DomainError("posterior sample is empty");
  if (!(a > 0.0)) throw DomainError("index needs a positive IM value");
  check_delta(delta);
  const PowerFn power(1.0 - delta);
  const double log_a = std::log(a);
  IndexTerms t;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double x = (log_a - std::log(draws[i].alpha)) / draws[i].beta;
    // Smaller tail from erfc, the other as its complement.
    const double tail = 0.5 * std::erfc(std::abs(x) * kInvSqrt2);
    const double p1 = x > 0.0 ? 1.0 - tail : tail;
    const double p0 = x > 0.0 ? tail : 1.0 - tail;
    const double w = weight(i);
    t.q0_one += w * p0;
    t.q1_one += w * p1;
    t.q0_zeta += w * power(p0);
    t.q1_zeta += w * power(p1);
  }
  const double m = static_cast<double>(draws.size());
  t.q0_one /= m;
  t.q1_one /= m;
  t.q0_zeta /= m;
  t.q1_zeta /= m;
  return t;
}

}  // namespace

CandidateSet CandidateSet::from_values(std::vector<double> values) {
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("candidate IMs must be positive");
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  CandidateSet set;
  set.used.assign(values.size(), false);
  set.values = std::move(values);
  return set;
}

std::size_t CandidateSet::unused_count() const {
  return static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
}

void CandidateSet::validate() const {
  if (values.size() != used.size()) throw DomainError("candidate set mask size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw DomainError("candidate IMs must be positive");
    if (i > 0 && !(values[i] > values[i - 1])) {
      throw DomainError("candidate IMs must be strictly increasing");
    }
  }
}

double IndexTerms::bracket(double delta) const {
  return std::pow(q0_one, delta) * q0_zeta + std::pow(q1_one, delta) * q1_zeta;
}

IndexTerms index_terms(double a, std::span<const Theta> draws, double delta) {
  return accumulate_terms(a, draws, delta, [](std::size_t) { return 1.0; });
}

IndexTerms index_terms_weighted(double a, std::span<const Theta> draws,
                                std::span<const double> weights, double delta) {
  if (weights.size() != draws.size()) throw DomainError("one weight per draw is required");
  return accumulate_terms(a, draws, delta, [&](std::size_t i) { return weights[i]; });
}

double doe_index(double a, std::span<const Theta> draws, double delta) {
  return index_terms(a, draws, delta).bracket(delta) / (delta * (delta - 1.0));
}

double doe_index(double a, const PosteriorSample& sample, double delta) {
  return doe_index(a, sample.draws, delta);
}

std::vector<double> doe_index_curve(std::span<const double> a_values, std::span<const Theta> draws,
                                    double delta) {
  if (draws.empty()) throw DomainError("posterior sample is empty");
  check_delta(delta);
  // Hoisted per-draw constants; same arithmetic as index_terms.
  const std::size_t m = draws.size();
  std::vector<double> log_alpha(m), beta(m);
  for (std::size_t i = 0; i < m; ++i) {
    log_alpha[i] = std::log(draws[i].alpha);
    beta[i] = draws[i].beta;
  }
  const PowerFn power(1.0 - delta);
  const double norm = delta * (delta - 1.0);
  std::vector<double> out(a_values.size());
  for (std::size_t j = 0; j < a_values.size(); ++j) {
    if (!(a_values[j] > 0.0)) throw DomainError("index needs a positive IM value");
    const double log_a = std::log(a_values[j]);
    IndexTerms t;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = (log_a - log_alpha[i]) / beta[i];
      const double tail = 0.5 * std::erfc(std::abs(x) * kInvSqrt2);
      const double p1 = x > 0.0 ? 1.0 - tail : tail;
      const double p0 = x > 0.0 ? tail : 1.0 - tail;
      t.q0_one += p0;
      t.q1_one += p1;
      t.q0_zeta += power(p0);
      t.q1_zeta += power(p1);
    }
    const double dm = static_cast<double>(m);
    t.q0_one /= dm;
    t.q1_one /= dm;
    t.q0_zeta /= dm;
    t.q1_zeta /= dm;
    out[j] = t.bracket(delta) / norm;
  }
  return out;
}

namespace {
constexpr double kTieTolerance = 1e-12;
}  // namespace

Selection select_from_values(const CandidateSet& candidates, std::vector<double> index_values) {
  if (index_values.size() != candidates.values.size()) {
    throw DomainError("one index value per candidate is required");
  }
  std::size_t best = candidates.values.size();
  for (std::size_t j = 0; j < candidates.values.size(); ++j) {
    if (candidates.used[j]) {
      index_values[j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    // Candidates are ascending, so requiring a clear improvement keeps the smallest a
    // on ties. Values within rounding noise of each other count as ties.
    if (best == candidates.values.size() ||
        index_values[j] > index_values[best] + kTieTolerance * std::abs(index_values[best])) {
      best = j;
    }
  }
  if (best == candidates.values.size()) throw ExhaustionError("all candidates are used");
  Selection s;
  s.index = best;
  s.a = candidates.values[best];
  s.index_value = index_values[best];
  s.index_values = std::move(index_values);
  return s;
}

Selection select_next(const CandidateSet& candidates, std::span<const Theta> draws, double delta) {
  if (candidates.unused_count() == 0) throw ExhaustionError("all candidates are used");
  std::vector<double> values;
  values.reserve(candidates.values.size());
  std::vector<double> unused;
  std::vector<std::size_t> positions;
  for (std::size_t j = 0; j < candidates.values.size(); ++j) {
    if (!candidates.used[j]) {
      unused.push_back(candidates.values[j]);
      positions.push_back(j);
    }
  }
  const auto curve = doe_index_curve(unused, draws, delta);
  values.assign(candidates.values.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < positions.size(); ++k) values[positions[k]] = curve[k];
  return select_from_values(candidates, std::move(values));
}

Selection select_next(const CandidateSet& candidates, const PosteriorSample& sample, double delta) {
  return select_next(candidates, sample.draws, delta);
}

std::size_t select_signal(CandidateSet& database, double target_a) {
  std::size_t best = database.values.size();
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < database.values.size(); ++j) {
    if (database.used[j]) continue;
    const double gap = std::abs(target_a - database.values[j]);
    // Strict comparison over ascending IMs keeps the smaller IM on ties.
    if (gap < best_gap) {
      best_gap = gap;
      best = j;
    }
  }
  if (best == database.values.size()) throw ExhaustionError("signal database is exhausted");
  database.used[best] = true;
  return best;
}

std::optional<double> stopping_vi(const StoppingState& previous, double current_index_value) {
  if (!previous.last_index_value) return std::nullopt;
  const double prev = *previous.last_index_value;
  if (prev == 0.0 || !std::isfinite(prev)) return std::nullopt;
  return std::abs(current_index_value - prev) / std::abs(prev);
}

std::optional<double> stopping_vp(std::span<const double> previous_median,
                                  std::span<const double> current_median, const SimpsonGrid& grid) {
  if (previous_median.size() != current_median.size() ||
      previous_median.size() != grid.nodes().size()) {
    throw DomainError("median curves are not on the same grid");
  }
  const double denom = grid.norm_sq(previous_median);
  if (!(denom > 0.0)) return std::nullopt;
  return std::sqrt(grid.distance_sq(previous_median, current_median) / denom);
}

void record_selection(StoppingState& state, double index_value, std::vector<double> median_curve,
                      const SimpsonGrid& grid) {
  state.vi = stopping_vi(state, index_value);
  state.vp = state.last_median_curve.empty()
                 ? std::nullopt
                 : stopping_vp(state.last_median_curve, median_curve, grid);
  if (state.completed_selections < 1) {
    state.vi.reset();
    state.vp.reset();
  }
  state.last_index_value = index_value;
  state.last_median_curve = std::move(median_curve);
  ++state.completed_selections;
}

std::vector<double> log_uniform_grid(double lo, double hi, int n) {
  if (!(lo > 0.0 && lo < hi) || n < 2) throw DomainError("log-uniform grid needs 0 < lo < hi, n >= 2");
  std::vector<double> out(n);
  const double l0 = std::log(lo);
  const double step = (std::log(hi) - l0) / (n - 1);
  for (int i = 0; i < n; ++i) out[i] = std::exp(l0 + i * step);
  out.front() = lo;
  out.back() = hi;
  return out;
}

void write_index_table(std::ostream& os, std::span<const double> a_values,
                       std::span<const double> index_values) {
  os << "a,index\n";
  os.precision(17);
  for (std::size_t j = 0; j < a_values.size(); ++j) os << a_values[j] << ',' << index_values[j] << '\n';
}

}  // namespace fragility
