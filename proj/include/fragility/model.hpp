#pragma once

// Probit-lognormal fragility model: P(failure | IM = a) = Φ((log a - log α)/β).

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fragility/errors.hpp"

namespace fragility {

/// Fragility parameters: median `alpha` (IM units) and log standard deviation `beta`.
struct Theta {
  double alpha = 1.0;
  double beta = 1.0;

  /// Throws DomainError unless alpha > 0 and beta > 0 (both finite).
  void validate() const;
  bool operator==(const Theta&) const = default;
};

struct Observation {
  double im = 1.0;
  int outcome = 0;  // 1 = failure

  void validate() const;
};

/// Observations in acquisition order.
using Dataset = std::vector<Observation>;

enum class Degeneracy : std::uint8_t { NonDegenerate, Type1, Type2, Type3 };

std::string_view to_string(Degeneracy d);
Degeneracy degeneracy_from_string(std::string_view s);
inline bool is_degenerate(Degeneracy d) { return d != Degeneracy::NonDegenerate; }

/// Raised when an operation needs a non-degenerate likelihood.
class DegeneracyError : public DomainError {
 public:
  DegeneracyError(Degeneracy status, const std::string& what) : DomainError(what), status_(status) {}
  Degeneracy status() const { return status_; }

 private:
  Degeneracy status_;
};

/// Standardized log-distance (log a - log α)/β.
inline double probit_argument(const Theta& theta, double log_a);

double failure_probability(const Theta& theta, double a);

/// Ψ^z_a(θ) = P_f(a)^z (1 - P_f(a))^(1-z).
double psi(const Theta& theta, double a, int z);

/// log Ψ^z_a(θ), floored at normal::kLogZero.
double log_psi(const Theta& theta, double a, int z);

/// Conditional log-likelihood Σ log Ψ^{z_i}_{a_i}(θ); 0 for an empty dataset.
double log_likelihood(std::span<const Observation> data, const Theta& theta);

/// Likelihood degeneracy with strict inequalities: tied IMs with different
/// outcomes are never separated.
Degeneracy classify_degeneracy(std::span<const Observation> data);

void validate_dataset(std::span<const Observation> data);

// --- inline ---

inline double probit_argument(const Theta& theta, double log_a) {
  return (log_a - std::log(theta.alpha)) / theta.beta;
}

}  // namespace fragility
