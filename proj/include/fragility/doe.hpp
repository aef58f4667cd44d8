#pragma once

// Sequential design: the expected δ-divergence index between the current and the
// one-step-updated posterior, its maximization, and the stopping indices.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fragility/metrics.hpp"
#include "fragility/posterior.hpp"

namespace fragility {

/// Candidate IMs (sorted, deduplicated) with a consumed flag per entry.
struct CandidateSet {
  std::vector<double> values;
  std::vector<bool> used;

  /// Sorts and deduplicates; every entry starts unused.
  static CandidateSet from_values(std::vector<double> values);
  std::size_t unused_count() const;
  void validate() const;
};

/// Monte Carlo terms Q^l_ζ = (1/M) Σ w_i Ψ^l_a(θ_i)^ζ for l ∈ {0,1}, ζ ∈ {1, 1-δ}.
struct IndexTerms {
  double q0_one = 0.0;
  double q0_zeta = 0.0;
  double q1_one = 0.0;
  double q1_zeta = 0.0;

  /// (Q⁰₁)^δ Q⁰_{1-δ} + (Q¹₁)^δ Q¹_{1-δ}
  double bracket(double delta) const;
};

IndexTerms index_terms(double a, std::span<const Theta> draws, double delta);

/// General form for draws from an earlier posterior p(θ | z^q, a^q): each draw carries
/// the weight Π_{j=q+1..k} Ψ^{z_j}_{a_j}(θ_i). The constant (L^k_q)^{-δ-1} is dropped.
IndexTerms index_terms_weighted(double a, std::span<const Theta> draws,
                                std::span<const double> weights, double delta);

/// 𝓘_{k+1}(a) up to its positive constant, with q = k:
/// (δ(δ-1))^{-1} [(Q⁰₁)^δ Q⁰_{1-δ} + (Q¹₁)^δ Q¹_{1-δ}].
double doe_index(double a, const PosteriorSample& sample, double delta);
double doe_index(double a, std::span<const Theta> draws, double delta);

/// Index at every candidate value (used entries included).
std::vector<double> doe_index_curve(std::span<const double> a_values, std::span<const Theta> draws,
                                    double delta);

struct Selection {
  std::size_t index = 0;
  double a = 0.0;
  double index_value = 0.0;
  std::vector<double> index_values;  // per candidate; NaN where used
};

/// Argmax of the index over unused candidates; ties (relative 1e-12) go to the smallest a.
Selection select_next(const CandidateSet& candidates, const PosteriorSample& sample, double delta);
Selection select_next(const CandidateSet& candidates, std::span<const Theta> draws, double delta);

/// Argmax over precomputed index values (used entries ignored). Values within a
/// relative 1e-12 of the running best are ties and keep the smaller a.
Selection select_from_values(const CandidateSet& candidates, std::vector<double> index_values);

/// Unused entry nearest to target_a (ties to the smaller IM); marks it used.
std::size_t select_signal(CandidateSet& database, double target_a);

struct StoppingState {
  std::optional<double> last_index_value;  // 𝓘_k(a_k)
  std::vector<double> last_median_curve;
  std::optional<double> vi;
  std::optional<double> vp;
  int completed_selections = 0;
};

/// 𝒱𝓘_k = |𝓘_{k+1}(a_{k+1}) - 𝓘_k(a_k)| / |𝓘_k(a_k)|; empty while unavailable.
std::optional<double> stopping_vi(const StoppingState& previous, double current_index_value);

/// 𝒱𝒫_k = ‖m_k - m_{k+1}‖ / ‖m_k‖ on the metric grid; empty when ‖m_k‖ = 0.
std::optional<double> stopping_vp(std::span<const double> previous_median,
                                  std::span<const double> current_median, const SimpsonGrid& grid);

/// Advances the state after a completed selection.
void record_selection(StoppingState& state, double index_value, std::vector<double> median_curve,
                      const SimpsonGrid& grid);

/// n points uniform in log a over [lo, hi].
std::vector<double> log_uniform_grid(double lo, double hi, int n = 512);

void write_index_table(std::ostream& os, std::span<const double> a_values,
                       std::span<const double> index_values);

}  // namespace fragility
