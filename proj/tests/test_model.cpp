#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "fragility/errors.hpp"
#include "fragility/model.hpp"
#include "fragility/normal.hpp"
#include "oracles.hpp"

using namespace fragility;

TEST_CASE("normal cdf agrees with the erf series") {
  for (double x = -8.0; x <= 8.0; x += 0.125) {
    const double ref = oracle::phi(x);
    CHECK(normal::cdf(x) == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("log_cdf stays finite and accurate in the tails") {
  CHECK(normal::log_cdf(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(normal::log_cdf(-5.0) == doctest::Approx(std::log(oracle::phi(-5.0))).epsilon(1e-13));
  CHECK(normal::log_cdf(6.0) == doctest::Approx(std::log1p(-oracle::phi(-6.0))).epsilon(1e-13));
  // Asymptotic regime: log Φ(x) ≈ -x²/2 - log(-x) - log √(2π) for large negative x.
  const double x = -35.0;
  const double lead = -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * M_PI);
  CHECK(normal::log_cdf(x) == doctest::Approx(lead + std::log1p(-1.0 / (x * x))).epsilon(1e-6));
  // Below the double range the value is floored at the sentinel.
  CHECK(normal::log_cdf(-40.0) == doctest::Approx(-745.0));
  CHECK(normal::log_cdf(-1e6) == doctest::Approx(-745.0));
  CHECK(std::isfinite(normal::log_cdf(-1e300)));
}

TEST_CASE("quantile inverts the cdf") {
  for (double q : {1e-10, 1e-3, 0.1, 0.5, 0.841344746068543, 0.999}) {
    CHECK(normal::cdf(normal::quantile(q)) == doctest::Approx(q).epsilon(1e-12));
  }
  CHECK(normal::quantile(oracle::phi(1.0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("failure_probability examples") {
  const Theta t{3.0, 0.3};
  CHECK(failure_probability(t, 3.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(failure_probability(t, 3.0 * std::exp(0.3)) == doctest::Approx(oracle::phi(1.0)).epsilon(1e-14));
  CHECK(oracle::phi(1.0) == doctest::Approx(0.841345).epsilon(1e-6));
  const Theta unit{1.0, 1.0};
  CHECK(failure_probability(unit, 1e-300) < 1e-100);
  CHECK(failure_probability(unit, 1e300) == 1.0);
  CHECK_THROWS_AS(failure_probability(t, 0.0), DomainError);
  CHECK_THROWS_AS(failure_probability(t, -1.0), DomainError);
}

TEST_CASE("failure_probability is monotone on a grid") {
  const Theta t{2.0, 0.7};
  double prev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double a = std::exp(-10.0 + 20.0 * i / 1999.0);
    const double p = failure_probability(t, a);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("psi examples and complement identity") {
  const Theta t{3.0, 0.3};
  CHECK(psi(t, 3.0, 1) == doctest::Approx(0.5));
  CHECK(psi(t, 3.0, 0) == doctest::Approx(0.5));
  CHECK(psi(t, 3.0 * std::exp(0.3), 0) == doctest::Approx(1.0 - oracle::phi(1.0)).epsilon(1e-13));
  CHECK(1.0 - oracle::phi(1.0) == doctest::Approx(0.158655).epsilon(1e-6));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Theta th{std::exp(u(rng)), std::exp(u(rng) / 2.0)};
    const double a = std::exp(u(rng));
    CHECK(std::abs(psi(th, a, 0) + psi(th, a, 1) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(psi(t, 1.0, 2), DomainError);
}

TEST_CASE("log_likelihood examples") {
  const Theta t{3.0, 0.3};
  const Dataset one{{3.0, 1}};
  CHECK(log_likelihood(one, {3.0, 2.5}) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(log_likelihood(Dataset{}, t) == 0.0);
  const Dataset two{{3.0 * std::exp(0.3), 1}, {3.0 * std::exp(-0.3), 0}};
  const double expected = 2.0 * std::log(oracle::phi(1.0));
  CHECK(log_likelihood(two, t) == doctest::Approx(expected).epsilon(1e-13));
  // Frozen oracle value (the series above, evaluated once to 13 digits).
  CHECK(log_likelihood(two, t) == doctest::Approx(-0.3455075580469).epsilon(1e-12));
}

TEST_CASE("log_likelihood clamps log(0) to the sentinel") {
  const Dataset far{{1e-200, 1}};
  const double ll = log_likelihood(far, {1.0, 0.01});
  CHECK(std::isfinite(ll));
  CHECK(ll == doctest::Approx(normal::kLogZero));
}

TEST_CASE("log_likelihood is additive and permutation invariant") {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> im(1.0, 0.8);
  std::bernoulli_distribution coin(0.4);
  Dataset data;
  for (int i = 0; i < 50; ++i) data.push_back({im(rng), coin(rng) ? 1 : 0});
  const Theta t{2.5, 0.45};
  double sum = 0.0;
  for (const auto& o : data) sum += log_likelihood(Dataset{o}, t);
  CHECK(log_likelihood(data, t) == doctest::Approx(sum).epsilon(1e-13));
  const Dataset first(data.begin(), data.begin() + 20), rest(data.begin() + 20, data.end());
  CHECK(log_likelihood(data, t) == doctest::Approx(log_likelihood(first, t) + log_likelihood(rest, t)).epsilon(1e-13));
  Dataset shuffled = data;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(log_likelihood(shuffled, t) == doctest::Approx(log_likelihood(data, t)).epsilon(1e-13));
  CHECK(classify_degeneracy(shuffled) == classify_degeneracy(data));
}

TEST_CASE("classify_degeneracy examples") {
  CHECK(classify_degeneracy(Dataset{{1, 0}, {2, 0}, {3, 0}}) == Degeneracy::Type1);
  CHECK(classify_degeneracy(Dataset{{1, 1}, {5, 1}}) == Degeneracy::Type2);
  CHECK(classify_degeneracy(Dataset{{1, 0}, {2, 0}, {3, 1}, {4, 1}}) == Degeneracy::Type3);
  CHECK(classify_degeneracy(Dataset{{1, 0}, {2, 1}, {3, 0}, {4, 1}}) == Degeneracy::NonDegenerate);
  CHECK(classify_degeneracy(Dataset{{2, 0}, {2, 1}}) == Degeneracy::NonDegenerate);
  CHECK(classify_degeneracy(Dataset{}) == Degeneracy::Type1);
}

TEST_CASE("classify_degeneracy matches the split-point checker") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_int_distribution<int> level(1, 6);  // few distinct IMs so ties are common
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 10000; ++trial) {
    Dataset data;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) data.push_back({static_cast<double>(level(rng)), coin(rng) ? 1 : 0});
    REQUIRE(classify_degeneracy(data) == oracle::degeneracy_by_splits(data));
  }
}

TEST_CASE("degeneracy names round-trip") {
  for (auto d : {Degeneracy::NonDegenerate, Degeneracy::Type1, Degeneracy::Type2, Degeneracy::Type3}) {
    CHECK(degeneracy_from_string(to_string(d)) == d);
  }
  CHECK_THROWS_AS(degeneracy_from_string("type4"), DomainError);
}

TEST_CASE("validation rejects invalid parameters and observations") {
  CHECK_THROWS_AS(Theta({0.0, 1.0}).validate(), DomainError);
  CHECK_THROWS_AS(Theta({1.0, -1.0}).validate(), DomainError);
  CHECK_THROWS_AS(Observation({-1.0, 0}).validate(), DomainError);
  CHECK_THROWS_AS(Observation({1.0, 3}).validate(), DomainError);
  CHECK_THROWS_AS(log_likelihood(Dataset{{0.0, 1}}, {1.0, 1.0}), DomainError);
}
