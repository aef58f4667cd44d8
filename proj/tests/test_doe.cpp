#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fragility/doe.hpp"
#include "fragility/errors.hpp"
#include "fragility/metrics.hpp"
#include "fragility/model.hpp"
#include "oracles.hpp"

using namespace fragility;

namespace {

std::vector<Theta> random_draws(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> la(0.0, 2.0), b(0.05, 1.0);
  std::vector<Theta> d;
  for (int i = 0; i < m; ++i) d.push_back({std::exp(la(rng)), b(rng)});
  return d;
}

}  // namespace

TEST_CASE("point-mass posterior gives a constant index") {
  const std::vector<Theta> one{{3.0, 0.3}};
  for (double delta : {0.2, 0.5, 0.8}) {
    for (double a : {0.1, 1.0, 2.9, 3.0, 5.0, 40.0})
      CHECK(std::abs(doe_index(a, one, delta) - 1.0 / (delta * (delta - 1.0))) < 1e-12);
  }
  auto c = CandidateSet::from_values({4.0, 1.0, 2.0, 3.0});
  c.used[0] = true;
  CHECK(select_next(c, one, 0.5).a == 2.0);
}

TEST_CASE("two-draw index matches the hand expansion") {
  const std::vector<Theta> two{{3.0, 0.3}, {4.0, 0.3}};
  const double a = 3.5, delta = 0.5;
  const double p1 = oracle::phi(std::log(a / 3.0) / 0.3), p2 = oracle::phi(std::log(a / 4.0) / 0.3);
  const double q1_one = 0.5 * (p1 + p2), q0_one = 1.0 - q1_one;
  const double q1_z = 0.5 * (std::sqrt(p1) + std::sqrt(p2)), q0_z = 0.5 * (std::sqrt(1 - p1) + std::sqrt(1 - p2));
  const double expected = (std::sqrt(q0_one) * q0_z + std::sqrt(q1_one) * q1_z) / (delta * (delta - 1.0));
  CHECK(doe_index(a, two, delta) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("index equals the brute-force expected divergence") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto d = random_draws(rng, 3);
    const double a = std::exp(3.0 * u(rng) - 0.5);
    const double delta = 0.05 + 0.9 * u(rng);
    worst = std::max(worst, std::abs(doe_index(a, d, delta) - oracle::brute_force_index(a, d, delta)));
    // The usual f_δ adds -δx - (1-δ), which integrates to the constant -1/(δ(δ-1)).
    const double usual = oracle::brute_force_index(a, d, delta) - 1.0 / (delta * (delta - 1.0));
    CHECK(usual >= -1e-12);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("duplicating the draws leaves the index unchanged") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto d = random_draws(rng, 3);
    std::vector<Theta> dd = d;
    dd.insert(dd.end(), d.begin(), d.end());
    const double a = std::exp(0.2 * i - 2.0);
    CHECK(doe_index(a, dd, 0.5) == doctest::Approx(doe_index(a, d, 0.5)).epsilon(1e-15));
  }
}

TEST_CASE("argmax of the index is argmin of the bracket") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = random_draws(rng, 50);
    const double delta = 0.3 + 0.02 * trial;
    const auto grid = log_uniform_grid(0.5, 8.0, 101);
    const auto c = CandidateSet::from_values(grid);
    const Selection s = select_next(c, d, delta);
    std::size_t best = 0;
    double best_bracket = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double b = index_terms(grid[j], d, delta).bracket(delta);
      if (j == 0 || b < best_bracket - 1e-12 * best_bracket) {
        best_bracket = b;
        best = j;
      }
    }
    CHECK(s.index == best);
    const auto curve = doe_index_curve(grid, d, delta);
    for (std::size_t j = 0; j < grid.size(); ++j)
      CHECK(curve[j] == doctest::Approx(doe_index(grid[j], d, delta)).epsilon(1e-13));
  }
}

TEST_CASE("index is symmetric under log-reflection") {
  const std::vector<Theta> two{{3.0 * std::exp(-0.2), 0.3}, {3.0 * std::exp(0.2), 0.3}};
  for (double t : {0.05, 0.1, 0.3, 0.7}) {
    const double lo = doe_index(3.0 * std::exp(-t), two, 0.5);
    const double hi = doe_index(3.0 * std::exp(t), two, 0.5);
    CHECK(std::abs(lo - hi) < 1e-12);
  }
}

TEST_CASE("weighted terms reduce to duplicated draws") {
  std::mt19937_64 rng(10);
  const auto d = random_draws(rng, 3);
  const std::vector<double> w{1.0, 2.0, 3.0};
  std::vector<Theta> dup{d[0], d[1], d[1], d[2], d[2], d[2]};
  const double delta = 0.5, c = 6.0 / 3.0;
  for (double a : {1.0, 2.0, 4.0}) {
    const double bw = index_terms_weighted(a, d, w, delta).bracket(delta);
    const double bd = index_terms(a, dup, delta).bracket(delta);
    CHECK(bw == doctest::Approx(std::pow(c, 1.0 + delta) * bd).epsilon(1e-13));
  }
  const std::vector<double> ones(3, 1.0);
  const auto t1 = index_terms_weighted(2.0, d, ones, delta);
  const auto t2 = index_terms(2.0, d, delta);
  CHECK(t1.bracket(delta) == doctest::Approx(t2.bracket(delta)).epsilon(1e-15));
  CHECK_THROWS_AS(index_terms_weighted(2.0, d, std::vector<double>{1.0}, delta), DomainError);
}

TEST_CASE("index argument validation") {
  const std::vector<Theta> one{{3.0, 0.3}};
  CHECK_THROWS_AS(doe_index(2.0, std::vector<Theta>{}, 0.5), DomainError);
  CHECK_THROWS_AS(doe_index(-1.0, one, 0.5), DomainError);
  CHECK_THROWS_AS(doe_index(2.0, one, 1.0), DomainError);
  CHECK_THROWS_AS(doe_index(2.0, one, 0.0), DomainError);
}

TEST_CASE("selection from injected index values") {
  auto c = CandidateSet::from_values({1.0, 2.0, 3.0});
  const Selection s = select_from_values(c, {0.1, 0.3, 0.2});
  CHECK(s.a == 2.0);
  CHECK(s.index == 1);
  CHECK(s.index_value == 0.3);
  c.used[1] = true;
  const Selection t = select_from_values(c, {0.1, 0.3, 0.2});
  CHECK(t.a == 3.0);
  CHECK(std::isnan(t.index_values[1]));
  CHECK(select_from_values(c, {0.5, 0.3, 0.5}).a == 1.0);
  c.used = {true, true, true};
  CHECK_THROWS_AS(select_from_values(c, {0.1, 0.3, 0.2}), ExhaustionError);
  CHECK_THROWS_AS(select_from_values(c, {0.1}), DomainError);
}

TEST_CASE("candidate set construction") {
  const auto c = CandidateSet::from_values({3.0, 1.0, 2.0, 1.0});
  CHECK(c.values == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(c.unused_count() == 3);
  CandidateSet bad{{1.0, 1.0}, {false, false}};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_THROWS_AS(CandidateSet::from_values({1.0, -2.0}), DomainError);
}

TEST_CASE("signal selection examples") {
  auto db = CandidateSet::from_values({1.0, 2.0, 3.0});
  CHECK(select_signal(db, 2.2) == 1);
  CHECK(db.used[1]);
  CHECK(select_signal(db, 2.2) == 2);
  auto tie = CandidateSet::from_values({1.0, 3.0});
  CHECK(select_signal(tie, 2.0) == 0);
}

TEST_CASE("signal selection never repeats and exhausts cleanly") {
  std::mt19937_64 rng(12);
  std::lognormal_distribution<double> im(0.0, 1.0);
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(im(rng));
  auto db = CandidateSet::from_values(v);
  std::vector<bool> seen(db.values.size(), false);
  for (std::size_t k = 0; k < db.values.size(); ++k) {
    const double target = im(rng);
    const std::size_t before = db.unused_count();
    const std::size_t j = select_signal(db, target);
    CHECK_FALSE(seen[j]);
    seen[j] = true;
    CHECK(db.unused_count() == before - 1);
    for (std::size_t i = 0; i < db.values.size(); ++i) {
      if (!seen[i]) CHECK(std::abs(db.values[i] - target) >= std::abs(db.values[j] - target));
    }
  }
  CHECK_THROWS_AS(select_signal(db, 1.0), ExhaustionError);
}

TEST_CASE("stopping index examples") {
  StoppingState s;
  CHECK_FALSE(stopping_vi(s, -2.0).has_value());
  s.last_index_value = -2.0;
  CHECK(*stopping_vi(s, -2.0) == 0.0);
  CHECK(*stopping_vi(s, -1.0) == doctest::Approx(0.5));
  s.last_index_value = 0.0;
  CHECK_FALSE(stopping_vi(s, -1.0).has_value());

  const SimpsonGrid g(1.0, 4.0, 20);
  const std::vector<double> half(g.nodes().size(), 0.5), three(g.nodes().size(), 0.75),
      zero(g.nodes().size(), 0.0);
  CHECK(*stopping_vp(half, half, g) == 0.0);
  CHECK(*stopping_vp(half, three, g) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK_FALSE(stopping_vp(zero, half, g).has_value());
  CHECK_THROWS_AS(stopping_vp(half, std::vector<double>{0.5}, g), DomainError);
}

TEST_CASE("stopping indices become available after two selections") {
  const SimpsonGrid g(1.0, 4.0, 20);
  const std::vector<double> m1(g.nodes().size(), 0.4), m2(g.nodes().size(), 0.5), m3(g.nodes().size(), 0.5);
  StoppingState s;
  record_selection(s, -2.5, m1, g);
  CHECK_FALSE(s.vi.has_value());
  CHECK_FALSE(s.vp.has_value());
  CHECK(s.completed_selections == 1);
  record_selection(s, -2.4, m2, g);
  REQUIRE(s.vi.has_value());
  REQUIRE(s.vp.has_value());
  CHECK(*s.vi == doctest::Approx(0.04));
  CHECK(*s.vp == doctest::Approx(0.25));
  record_selection(s, -2.4, m3, g);
  CHECK(*s.vi == 0.0);
  CHECK(*s.vp == 0.0);
}

TEST_CASE("log-uniform grid and index table") {
  const auto g = log_uniform_grid(1.0, 100.0, 3);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(g[2] == 100.0);
  CHECK(log_uniform_grid(0.5, 8.0).size() == 512);
  CHECK_THROWS_AS(log_uniform_grid(2.0, 1.0, 5), DomainError);
  std::ostringstream os;
  write_index_table(os, g, std::vector<double>{-1.0, -2.0, -3.0});
  CHECK(os.str().rfind("a,index\n", 0) == 0);
}
