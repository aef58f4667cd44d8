#include "fragility/normal.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fragility/errors.hpp"

namespace fragility::normal {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kTailSwitch = -30.0;
}  // namespace

double pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_cdf(double x) {
  if (x >= kTailSwitch) {
    if (x > 5.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
    return std::max(std::log(0.5 * std::erfc(-x * kInvSqrt2)), kLogZero);
  }
  // Φ(x) ~ φ(x)/|x| (1 - 1/x² + 3/x⁴ - 15/x⁶)
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  const double value = -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + std::log(series);
  return std::max(value, kLogZero);
}

double quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("normal quantile needs q in (0,1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

double mills_ratio(double x) {
  if (x > kTailSwitch) return pdf(x) / cdf(x);
  // Continued-fraction tail of φ/Φ for x → -∞.
  const double t = -x;
  return t + 1.0 / (t + 2.0 / (t + 3.0 / (t + 4.0 / (t + 5.0 / t))));
}

}  // namespace fragility::normal
