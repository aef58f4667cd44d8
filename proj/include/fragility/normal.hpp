#pragma once

// Standard normal helpers shared by the model, prior and metric modules.

namespace fragility::normal {

/// Floor applied to every log-probability so that log(0) stays finite.
inline constexpr double kLogZero = -745.0;

double pdf(double x);

/// Φ(x), computed from erfc so that both tails keep relative accuracy.
double cdf(double x);

/// log Φ(x). Uses the asymptotic expansion below x = -30 and is floored at kLogZero.
double log_cdf(double x);

/// Φ⁻¹(q) for q in (0,1).
double quantile(double q);

/// φ(x)/Φ(x), the inverse Mills ratio, stable for very negative x.
double mills_ratio(double x);

}  // namespace fragility::normal
