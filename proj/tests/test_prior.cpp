#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "fragility/errors.hpp"
#include "fragility/model.hpp"
#include "fragility/prior.hpp"
#include "oracles.hpp"

using namespace fragility;

TEST_CASE("fit_lognormal_im examples") {
  const std::vector<double> a{1.0, std::exp(2.0)};
  const IMStats s = fit_lognormal_im(a);
  CHECK(s.mu == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.sigma == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  const std::vector<double> b{std::exp(-1.0), std::exp(1.0)};
  const IMStats t = fit_lognormal_im(b);
  CHECK(std::abs(t.mu) < 1e-15);
  CHECK(t.sigma == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  const double e = std::exp(1.0);
  CHECK_THROWS_AS(fit_lognormal_im(std::vector<double>{e, e, e}), DomainError);
  CHECK_THROWS_AS(fit_lognormal_im(std::vector<double>{2.0}), DomainError);
  CHECK_THROWS_AS(fit_lognormal_im(std::vector<double>{2.0, -1.0}), DomainError);
}

TEST_CASE("log_prior_unnormalized examples") {
  PriorConfig cfg;
  cfg.gamma = 0.5;
  cfg.im_stats = {0.0, 1.0};
  CHECK(log_prior_unnormalized({1.0, 1.0}, cfg) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  // log α = μ: the Gaussian factor vanishes, leaving -log α - log(β^{1-γ} + β^{3-γ}).
  cfg.im_stats = {std::log(3.0), 0.7};
  const double beta = 0.4;
  CHECK(log_prior_unnormalized({3.0, beta}, cfg) ==
        doctest::Approx(-std::log(3.0) - std::log(std::pow(beta, 0.5) + std::pow(beta, 2.5))).epsilon(1e-14));
}

TEST_CASE("log_prior matches the closed form on random θ") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    PriorConfig cfg;
    cfg.gamma = 1.9 * (u(rng) + 3.0) / 6.0;
    cfg.im_stats = {u(rng), std::exp(u(rng) / 3.0)};
    const Theta t{std::exp(u(rng)), std::exp(u(rng))};
    CHECK(log_prior_unnormalized(t, cfg) ==
          doctest::Approx(oracle::log_prior(t.alpha, t.beta, cfg.gamma, cfg.im_stats.mu, cfg.im_stats.sigma))
              .epsilon(1e-12));
  }
}

TEST_CASE("prior family ratio equals β^γ") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int i = 0; i < 1000; ++i) {
    PriorConfig g, zero;
    g.gamma = 1.99 * (u(rng) + 2.5) / 5.0;
    zero.gamma = 0.0;
    g.im_stats = zero.im_stats = {u(rng), std::exp(u(rng) / 2.0)};
    const Theta t{std::exp(u(rng)), std::exp(u(rng))};
    const double ratio = std::exp(log_prior_unnormalized(t, g) - log_prior_unnormalized(t, zero));
    CHECK(ratio == doctest::Approx(std::pow(t.beta, g.gamma)).epsilon(1e-12));
  }
}

TEST_CASE("prior decays in log α and is proper in β for 0 < γ < 2") {
  PriorConfig cfg;
  cfg.im_stats = {0.5, 1.0};
  for (double beta : {0.1, 1.0, 10.0}) {
    CHECK(log_prior_unnormalized({std::exp(300.0), beta}, cfg) < -100.0);
    CHECK(log_prior_unnormalized({std::exp(-300.0), beta}, cfg) < -100.0);
  }
  // ∫ π(α, β) dβ at fixed α, in t = log β over [-L, L], trapezoid with step 0.01.
  auto mass = [](double gamma, double L) {
    PriorConfig c;
    c.gamma = gamma;
    c.im_stats = {0.5, 1.0};
    const int n = static_cast<int>(2.0 * L / 0.01);
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double t = -L + 2.0 * L * i / n;
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      s += w * std::exp(log_prior_unnormalized({2.0, std::exp(t)}, c) + t);
    }
    return s * 2.0 * L / n;
  };
  for (double gamma : {0.25, 0.5, 1.0, 1.5, 1.9}) {
    const double m200 = mass(gamma, 200.0), m400 = mass(gamma, 400.0);
    CHECK(std::abs(m400 - m200) / m200 < 1e-6);
  }
  // γ = 0: the integrand tends to a constant as β → 0, so the mass keeps growing.
  const double m100 = mass(0.0, 100.0), m200 = mass(0.0, 200.0), m400 = mass(0.0, 400.0);
  CHECK(m200 > 1.5 * m100);
  CHECK(m400 > 1.5 * m200);
}

TEST_CASE("prior config validation") {
  PriorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.within_sanctioned_band());
  cfg.gamma = 1.5;  // above 2/(1+δ) = 4/3
  CHECK_NOTHROW(cfg.validate());
  CHECK_FALSE(cfg.within_sanctioned_band());
  cfg.gamma = 2.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg.gamma = 0.5;
  cfg.delta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("log_psi_hessian matches finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double la = u(rng), beta = std::exp(u(rng)), log_a = la + 2.0 * beta * u(rng);
    for (int z = 0; z <= 1; ++z) {
      auto f = [&](double p, double b) { return log_psi({std::exp(p), b}, std::exp(log_a), z); };
      const FisherMatrix h = log_psi_hessian(log_a, la, beta, z);
      const double e = 1e-4;
      const double hpp = (f(la + e, beta) - 2 * f(la, beta) + f(la - e, beta)) / (e * e);
      const double hbb = (f(la, beta + e) - 2 * f(la, beta) + f(la, beta - e)) / (e * e);
      const double hpb =
          (f(la + e, beta + e) - f(la + e, beta - e) - f(la - e, beta + e) + f(la - e, beta - e)) / (4 * e * e);
      CHECK(h[0][0] == doctest::Approx(hpp).epsilon(1e-5).scale(1.0));
      CHECK(h[1][1] == doctest::Approx(hbb).epsilon(1e-5).scale(1.0));
      CHECK(h[0][1] == doctest::Approx(hpb).epsilon(1e-5).scale(1.0));
      CHECK(h[0][1] == h[1][0]);
    }
  }
}

TEST_CASE("Gauss-Hermite rule integrates Gaussian moments") {
  const auto& rule = gauss_hermite(128);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    m0 += rule.weights[i];
    m2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
    m4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
  }
  CHECK(m0 == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(std::sqrt(M_PI) / 2.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0 * std::sqrt(M_PI) / 4.0).epsilon(1e-12));
}

TEST_CASE("Jeffreys quadrature: Fisher matrix properties") {
  const IMStats im{0.3, 1.0};
  const JeffreysResult r = jeffreys_quadrature({std::exp(im.mu), 1.0}, im);
  CHECK(std::abs(r.fisher[0][1] - r.fisher[1][0]) <= 1e-8 * std::abs(r.fisher[0][1]));
  CHECK(r.fisher[0][0] > 0.0);
  CHECK(r.fisher[1][1] > 0.0);
  CHECK(r.fisher[0][0] * r.fisher[1][1] - r.fisher[0][1] * r.fisher[1][0] >= 0.0);
  CHECK(r.value == doctest::Approx(std::sqrt(r.fisher[0][0] * r.fisher[1][1] - r.fisher[0][1] * r.fisher[1][0])));
}

TEST_CASE("Jeffreys quadrature agrees with the probit Fisher information formula") {
  const IMStats im{0.3, 1.0};
  for (const Theta t : {Theta{std::exp(0.3), 1.0}, Theta{std::exp(1.0), 0.3}, Theta{std::exp(-1.2), 2.0}}) {
    const auto f = jeffreys_quadrature(t, im).fisher;
    const auto g = oracle::fisher_glm(t.alpha, t.beta, im.mu, im.sigma);
    const double scale = std::max(std::abs(g[0][0]), std::abs(g[1][1]));
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) CHECK(std::abs(f[r][c] - g[r][c]) <= 1e-6 * scale);
  }
}

TEST_CASE("Jeffreys quadrature self-convergence and Hessian methods") {
  const IMStats im{0.0, 1.0};
  const Theta t{1.0, 0.5};
  const double j128 = jeffreys_quadrature(t, im, {128, HessianMethod::Analytic}).value;
  const double j256 = jeffreys_quadrature(t, im, {256, HessianMethod::Analytic}).value;
  CHECK(std::abs(j256 - j128) / j128 < 1e-6);
  const double fd = jeffreys_quadrature(t, im, {128, HessianMethod::FiniteDifference}).value;
  CHECK(fd == doctest::Approx(j128).epsilon(1e-6));
  CHECK_THROWS_AS(jeffreys_quadrature(t, im, {32, HessianMethod::Analytic}), DomainError);
}

TEST_CASE("Jeffreys quadrature positivity scan") {
  const IMStats im{0.7, 0.8};
  for (int i = 0; i <= 10; ++i) {
    for (int j = 0; j <= 10; ++j) {
      const double alpha = std::exp(im.mu - 2 * im.sigma + 4 * im.sigma * i / 10.0);
      const double beta = 0.1 + 1.9 * j / 10.0;
      const auto r = jeffreys_quadrature({alpha, beta}, im);
      CHECK(r.value > 0.0);
      CHECK(std::abs(r.fisher[0][1] - r.fisher[1][0]) <= 1e-8 * std::abs(r.fisher[0][1]) + 1e-300);
    }
  }
}
