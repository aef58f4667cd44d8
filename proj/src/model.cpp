#include "fragility/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fragility/errors.hpp"
#include "fragility/normal.hpp"

namespace fragility {

void Theta::validate() const {
  if (!(std::isfinite(alpha) && alpha > 0.0) || !(std::isfinite(beta) && beta > 0.0)) {
    throw DomainError("theta must satisfy alpha > 0 and beta > 0, got (" + std::to_string(alpha) +
                      ", " + std::to_string(beta) + ")");
  }
}

void Observation::validate() const {
  if (!(std::isfinite(im) && im > 0.0)) {
    throw DomainError("observation IM must be positive, got " + std::to_string(im));
  }
  if (outcome != 0 && outcome != 1) {
    throw DomainError("observation outcome must be 0 or 1, got " + std::to_string(outcome));
  }
}

std::string_view to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::NonDegenerate: return "non_degenerate";
    case Degeneracy::Type1: return "type1";
    case Degeneracy::Type2: return "type2";
    case Degeneracy::Type3: return "type3";
  }
  return "unknown";
}

Degeneracy degeneracy_from_string(std::string_view s) {
  if (s == "non_degenerate") return Degeneracy::NonDegenerate;
  if (s == "type1") return Degeneracy::Type1;
  if (s == "type2") return Degeneracy::Type2;
  if (s == "type3") return Degeneracy::Type3;
  throw DomainError("unknown degeneracy tag '" + std::string(s) + "'");
}

namespace {
void check_im(double a) {
  if (!(a > 0.0) || std::isnan(a)) {
    throw DomainError("IM value must be positive, got " + std::to_string(a));
  }
}
void check_outcome(int z) {
  if (z != 0 && z != 1) throw DomainError("outcome must be 0 or 1, got " + std::to_string(z));
}
}  // namespace

double failure_probability(const Theta& theta, double a) {
  check_im(a);
  return normal::cdf(probit_argument(theta, std::log(a)));
}

double psi(const Theta& theta, double a, int z) {
  check_im(a);
  check_outcome(z);
  const double x = probit_argument(theta, std::log(a));
  // Evaluating each branch through its own tail keeps psi(0) accurate near 1.
  return z == 1 ? normal::cdf(x) : normal::cdf(-x);
}

double log_psi(const Theta& theta, double a, int z) {
  check_im(a);
  check_outcome(z);
  const double x = probit_argument(theta, std::log(a));
  return z == 1 ? normal::log_cdf(x) : normal::log_cdf(-x);
}

double log_likelihood(std::span<const Observation> data, const Theta& theta) {
  const double log_alpha = std::log(theta.alpha);
  const double inv_beta = 1.0 / theta.beta;
  double total = 0.0;
  for (const auto& obs : data) {
    check_im(obs.im);
    check_outcome(obs.outcome);
    const double x = (std::log(obs.im) - log_alpha) * inv_beta;
    total += obs.outcome == 1 ? normal::log_cdf(x) : normal::log_cdf(-x);
  }
  return total;
}

Degeneracy classify_degeneracy(std::span<const Observation> data) {
  double max_safe = -std::numeric_limits<double>::infinity();
  double min_failed = std::numeric_limits<double>::infinity();
  bool any_safe = false;
  bool any_failed = false;
  for (const auto& obs : data) {
    if (obs.outcome == 1) {
      any_failed = true;
      min_failed = std::min(min_failed, obs.im);
    } else {
      any_safe = true;
      max_safe = std::max(max_safe, obs.im);
    }
  }
  if (!any_failed) return Degeneracy::Type1;
  if (!any_safe) return Degeneracy::Type2;
  if (max_safe < min_failed) return Degeneracy::Type3;
  return Degeneracy::NonDegenerate;
}

void validate_dataset(std::span<const Observation> data) {
  for (const auto& obs : data) obs.validate();
}

}  // namespace fragility
