#include "fragility/synthetic.hpp"

#include <cmath>
#include <utility>
#include <string>

#include "fragility/doe.hpp"
#include "fragility/errors.hpp"
#include "fragility/normal.hpp"
#include "fragility/rng.hpp"

namespace fragility {

void ToyConfig::validate() const {
  theta_star.validate();
  if (!(q_cap > 0.0 && q_cap <= 1.0)) throw DomainError("q_cap must lie in (0,1]");
  if (!(q_floor > 0.0 && q_floor < effective_q_cap())) throw DomainError("q_floor must lie in (0, q_cap)");
  if (!(im_log_sd > 0.0) || !std::isfinite(im_log_sd)) throw DomainError("IM log-sd must be positive");
  if (im_log_mean && !std::isfinite(*im_log_mean)) throw DomainError("IM log-mean must be finite");
  if (grid_size < 2) throw DomainError("candidate grid needs at least 2 points");
}

double ToyConfig::effective_q_cap() const { return q_cap >= 1.0 ? kFullCapQuantile : q_cap; }
double ToyConfig::a_max() const { return quantile_im(theta_star, effective_q_cap()); }
double ToyConfig::a_min() const { return quantile_im(theta_star, q_floor); }
double ToyConfig::grid_upper() const {
  return std::max(a_max(), quantile_im(theta_star, kFullCapQuantile));
}
double ToyConfig::log_mean() const { return im_log_mean.value_or(std::log(theta_star.alpha)); }

int outcome_from_uniform(const Theta& theta_star, double a, double u) {
  return u < failure_probability(theta_star, a) ? 1 : 0;
}

int sample_outcome(const Theta& theta_star, double a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return outcome_from_uniform(theta_star, a, unif(rng));
}

double quantile_im(const Theta& theta_star, double q) {
  theta_star.validate();
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile level must lie in (0,1)");
  return std::exp(theta_star.beta * normal::quantile(q) + std::log(theta_star.alpha));
}

std::pair<double, double> optimal_points(const Theta& theta_star) {
  theta_star.validate();
  return {theta_star.alpha * std::exp(-theta_star.beta), theta_star.alpha * std::exp(theta_star.beta)};
}

double rescale_im(double a2, std::pair<double, double> domain1, std::pair<double, double> domain2) {
  const auto [c11, c12] = domain1;
  const auto [c21, c22] = domain2;
  if (!(c11 > 0.0 && c11 < c12) || !(c21 > 0.0 && c21 < c22)) {
    throw DomainError("rescaling domains need 0 < lower < upper");
  }
  if (!(a2 >= c21 && a2 <= c22)) throw DomainError("IM outside the source domain");
  const double ratio = (std::log(c12) - std::log(c11)) / (std::log(c22) - std::log(c21));
  return std::exp(ratio * std::log(a2 / c21) + std::log(c11));
}

namespace {

// Truncated lognormal draw on (0, a_max] by rejection.
double draw_truncated(std::mt19937_64& rng, double log_mean, double log_sd, double log_max) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    const double x = log_mean + log_sd * gauss(rng);
    if (x <= log_max) return x;
  }
  throw NumericalError("truncated IM law has negligible mass below a_max");
}

}  // namespace

IMStats toy_im_stats(const ToyConfig& cfg, int draws) {
  cfg.validate();
  if (draws < 2) throw DomainError("IM moments need at least 2 draws");
  std::mt19937_64 rng(mix_seed(cfg.seed, {stream::kConfig}));
  const double log_max = std::log(cfg.a_max());
  double mean = 0.0;
  double m2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = draw_truncated(rng, cfg.log_mean(), cfg.im_log_sd, log_max);
    const double d = x - mean;
    mean += d / (i + 1);
    m2 += d * (x - mean);
  }
  return {mean, std::sqrt(m2 / (draws - 1))};
}

ToySource::ToySource(const ToyConfig& cfg, std::uint64_t campaign_seed)
    : cfg_(cfg),
      log_alpha_(std::log(cfg.theta_star.alpha)),
      a_min_(cfg.a_min()),
      a_max_(cfg.a_max()),
      init_rng_(mix_seed(campaign_seed, {stream::kInitial})),
      outcome_rng_(mix_seed(campaign_seed, {stream::kOutcome})),
      standard_rng_(mix_seed(campaign_seed, {stream::kStandard})) {
  cfg_.validate();
  candidates_ = CandidateSet::from_values(log_uniform_grid(a_min_, cfg_.grid_upper(), cfg_.grid_size));
}

Acquired ToySource::observe(double a, bool clamped) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Acquired e;
  e.id = next_id_++;
  e.a = a;
  e.z = outcome_from_uniform(cfg_.theta_star, a, unif(outcome_rng_));
  e.clamped = clamped;
  return e;
}

Acquired ToySource::draw_initial() {
  std::uniform_real_distribution<double> unif(std::log(a_min_), std::log(a_max_));
  return observe(std::exp(unif(init_rng_)), false);
}

Acquired ToySource::draw_standard() {
  return observe(std::exp(draw_truncated(standard_rng_, cfg_.log_mean(), cfg_.im_log_sd,
                                         std::log(a_max_))),
                 false);
}

Acquired ToySource::acquire(double a_target) {
  if (!(a_target > 0.0)) throw DomainError("suggested IM must be positive");
  if (a_target > a_max_) return observe(a_max_, true);
  return observe(a_target, false);
}

LogAffineMap::LogAffineMap(std::pair<double, double> from, std::pair<double, double> to) {
  if (!(from.first > 0.0 && from.first < from.second && to.first > 0.0 && to.first < to.second)) {
    throw DomainError("log-affine map needs positive increasing domains");
  }
  log_from_ = std::log(from.first);
  log_to_ = std::log(to.first);
  slope_ = (std::log(to.second) - log_to_) / (std::log(from.second) - log_from_);
}

double LogAffineMap::operator()(double a) const {
  if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("IM must be a positive finite real");
  return std::exp(slope_ * (std::log(a) - log_from_) + log_to_);
}

LogAffineMap LogAffineMap::inverse() const {
  LogAffineMap m = *this;
  m.slope_ = 1.0 / slope_;
  std::swap(m.log_from_, m.log_to_);
  return m;
}

IMStats LogAffineMap::map_stats(const IMStats& s) const {
  return {slope_ * (s.mu - log_from_) + log_to_, slope_ * s.sigma};
}

RescaledSource::RescaledSource(ExperimentSource& inner, const LogAffineMap& map)
    : inner_(inner), map_(map), back_(map.inverse()) {
  const CandidateSet& native = inner_.index_candidates();
  std::vector<double> values;
  values.reserve(native.values.size());
  for (double a : native.values) values.push_back(map_(a));
  candidates_ = CandidateSet::from_values(std::move(values));
}

Acquired RescaledSource::forward(Acquired e) const {
  e.a = map_(e.a);
  return e;
}

Acquired RescaledSource::draw_initial() { return forward(inner_.draw_initial()); }
Acquired RescaledSource::draw_standard() { return forward(inner_.draw_standard()); }
Acquired RescaledSource::acquire(double a_target) { return forward(inner_.acquire(back_(a_target))); }

CampaignSettings rescale_settings(CampaignSettings settings, const LogAffineMap& map) {
  settings.prior.im_stats = map.map_stats(settings.prior.im_stats);
  settings.bounds.a_min = map(settings.bounds.a_min);
  settings.bounds.a_max = map(settings.bounds.a_max);
  if (settings.reference) {
    const LogAffineMap back = map.inverse();
    settings.reference = [ref = *settings.reference, back](double a) { return ref(back(a)); };
  }
  return settings;
}

CampaignSettings toy_campaign_settings(const ToyConfig& cfg, Method method,
                                       const ToyRunOptions& options, std::uint64_t campaign_seed) {
  cfg.validate();
  CampaignSettings s;
  s.method = method;
  s.prior = options.prior;
  s.prior.im_stats = options.im_stats ? *options.im_stats : toy_im_stats(cfg);
  s.k_max = options.k_max;
  s.mh = options.mh;
  s.warm_start = options.warm_start;
  s.track_stopping = options.track_stopping;
  s.early_stop = options.early_stop;
  s.checkpoints = options.checkpoints;
  s.bounds = resolve_bounds(cfg.theta_star, options.q1, options.q2);
  const Theta star = cfg.theta_star;
  s.reference = [star](double a) { return failure_probability(star, a); };
  s.seed = campaign_seed;
  return s;
}

CampaignTrace run_toy_campaign(const ToyConfig& cfg, Method method, const ToyRunOptions& options,
                               std::uint64_t campaign_seed) {
  const CampaignSettings s = toy_campaign_settings(cfg, method, options, campaign_seed);
  ToySource source(cfg, campaign_seed);
  return run_campaign(source, s);
}

std::vector<Observation> toy_pool(const ToyConfig& cfg, std::size_t n, std::uint64_t seed) {
  ToySource source(cfg, seed);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Acquired e = source.draw_standard();
    out.push_back({e.a, e.z});
  }
  return out;
}

}  // namespace fragility
