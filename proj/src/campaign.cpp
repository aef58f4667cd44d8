#include "fragility/campaign.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "fragility/errors.hpp"
#include "fragility/rng.hpp"

namespace fragility {

std::string to_string(Method m) { return m == Method::Standard ? "standard" : "doe"; }

Method method_from_string(const std::string& s) {
  if (s == "standard") return Method::Standard;
  if (s == "doe") return Method::Doe;
  throw DomainError("unknown method '" + s + "' (expected standard or doe)");
}

Dataset CampaignTrace::dataset() const {
  Dataset data;
  data.reserve(initial.size() + steps.size());
  for (const auto& e : initial) data.push_back({e.a, e.z});
  for (const auto& s : steps) data.push_back({s.a, s.z});
  return data;
}

Degeneracy CampaignTrace::degeneracy_at(int k) const {
  const Dataset data = dataset();
  if (k < 0 || static_cast<std::size_t>(k) > data.size()) {
    throw DomainError("degeneracy requested beyond the campaign length");
  }
  return classify_degeneracy(std::span<const Observation>(data.data(), static_cast<std::size_t>(k)));
}

MHConfig campaign_mh_defaults() {
  MHConfig mh;
  mh.chain_length = 4000;
  mh.burn_in = 0.25;
  mh.thin = 3;
  return mh;
}

std::vector<int> default_checkpoints(int k_max, int step) {
  if (step < 1) throw DomainError("checkpoint step must be positive");
  std::vector<int> out;
  for (int k = step; k <= k_max; k += step) out.push_back(k);
  return out;
}

void CampaignSettings::validate() const {
  prior.validate();
  mh.validate();
  if (k0 < 1) throw DomainError("k0 must be at least 1");
  if (k_max <= k0) throw DomainError("k_max must exceed k0");
  if (!(bounds.a_min > 0.0 && bounds.a_min < bounds.a_max)) {
    throw DomainError("metric bounds need 0 < a_min < a_max");
  }
  if (!(credibility_r > 0.0 && credibility_r < 1.0)) throw DomainError("credibility r must lie in (0,1)");
  if (!(vi_threshold > 0.0) || !(vp_threshold > 0.0)) throw DomainError("stopping thresholds must be positive");
  if (quantile_curve_points < 2) throw DomainError("quantile curves need at least 2 points");
}

bool should_stop(const StepRecord& step, double vi_threshold, double vp_threshold) {
  return step.degeneracy == Degeneracy::NonDegenerate && step.vi && step.vp &&
         *step.vi < vi_threshold && *step.vp < vp_threshold;
}

namespace {

std::vector<double> subsample(std::span<const double> nodes, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double last = static_cast<double>(nodes.size() - 1);
  for (int i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(std::lround(i * last / (n - 1)));
    out[static_cast<std::size_t>(i)] = nodes[j];
  }
  return out;
}

// Proposal for the next chain from the previous posterior, when it is usable.
void warm_start(MHConfig& mh, const PosteriorSample& prev) {
  const double s = 2.38 * 2.38 / 2.0;
  const auto& c = prev.draw_covariance;
  Mat2 cov{{{s * c[0][0] + 1e-10, s * c[0][1]}, {s * c[1][0], s * c[1][1] + 1e-10}}};
  const double det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
  if (!(cov[0][0] > 0.0) || !(det > 0.0) || !std::isfinite(det)) return;
  mh.init_theta = Theta{std::exp(prev.final_state[0]), std::exp(prev.final_state[1])};
  mh.init_covariance = cov;
}

}  // namespace

CampaignTrace run_campaign(ExperimentSource& source, const CampaignSettings& settings) {
  settings.validate();
  CampaignTrace trace;
  trace.method = settings.method;
  trace.seed = settings.seed;

  Dataset data;
  data.reserve(static_cast<std::size_t>(settings.k_max));
  for (int i = 0; i < settings.k0; ++i) {
    const Acquired e = source.draw_initial();
    trace.initial.push_back(e);
    data.push_back({e.a, e.z});
  }

  const SimpsonGrid grid = settings.bounds.grid();
  const auto curve_grid = subsample(grid.nodes(), settings.quantile_curve_points);
  const std::set<int> checkpoints(settings.checkpoints.begin(), settings.checkpoints.end());
  const bool doe = settings.method == Method::Doe;

  std::optional<PosteriorSample> post;
  std::optional<PosteriorSample> last_valid;
  auto refresh = [&](int k) {
    MHConfig mh = settings.mh;
    mh.seed = mix_seed(settings.seed, {stream::kMcmc, static_cast<std::uint64_t>(k)});
    if (settings.warm_start && last_valid) warm_start(mh, *last_valid);
    try {
      post = sample_posterior(data, settings.prior, mh);
      last_valid = post;
    } catch (const RobustnessError&) {
      // The design loop cannot proceed without a proper posterior.
      if (doe) throw;
      post.reset();
    }
  };
  auto needs_posterior = [&](int k) {
    return doe || settings.track_stopping || checkpoints.count(k) > 0;
  };
  auto checkpoint = [&](int k) {
    if (checkpoints.count(k) == 0) return;
    CheckpointRecord cp;
    cp.k = k;
    cp.degeneracy = classify_degeneracy(data);
    if (post) {
      if (settings.reference) {
        cp.metrics = posterior_metrics(*post, *settings.reference, grid, settings.credibility_r);
      }
      const double r = settings.credibility_r;
      const std::array<double, 3> levels{r / 2.0, 0.5, 1.0 - r / 2.0};
      auto q = fragility_quantiles(*post, curve_grid, levels);
      cp.a = curve_grid;
      cp.lower = std::move(q[0]);
      cp.median = std::move(q[1]);
      cp.upper = std::move(q[2]);
    }
    trace.checkpoints.push_back(std::move(cp));
  };

  int k = settings.k0;
  std::vector<double> median_prev;
  std::optional<double> index_prev;
  if (needs_posterior(k)) refresh(k);
  if (post && settings.track_stopping) median_prev = median_curve(*post, grid);
  checkpoint(k);

  while (k < settings.k_max) {
    StepRecord rec;
    Acquired e;
    if (doe) {
      const Selection sel = select_next(source.index_candidates(), post->draws, settings.prior.delta);
      e = source.acquire(sel.a);
      rec.index_value = sel.index_value;
      if (index_prev && *index_prev != 0.0) {
        rec.vi = std::abs(sel.index_value - *index_prev) / std::abs(*index_prev);
      }
      index_prev = sel.index_value;
    } else {
      e = source.draw_standard();
    }
    data.push_back({e.a, e.z});
    ++k;
    rec.k = k;
    rec.signal_id = e.id;
    rec.a = e.a;
    rec.z = e.z;
    rec.clamped = e.clamped;
    rec.degeneracy = classify_degeneracy(data);

    if (needs_posterior(k)) {
      refresh(k);
    } else {
      post.reset();
    }
    if (post) rec.acceptance_rate = post->acceptance_rate;
    if (settings.track_stopping && post) {
      auto m = median_curve(*post, grid);
      // Both stopping indices start at the second selection.
      if (!median_prev.empty() && !trace.steps.empty()) rec.vp = stopping_vp(median_prev, m, grid);
      median_prev = std::move(m);
    } else {
      median_prev.clear();
    }
    checkpoint(k);
    trace.steps.push_back(rec);
    if (settings.on_step) settings.on_step(rec);
    if (settings.early_stop && should_stop(rec, settings.vi_threshold, settings.vp_threshold)) {
      trace.stopped_early = true;
      break;
    }
  }
  return trace;
}

}  // namespace fragility
