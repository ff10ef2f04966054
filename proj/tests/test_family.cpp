#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "msgam/error.hpp"
#include "msgam/family.hpp"
#include "msgam/rng.hpp"
#include "oracles.hpp"

using namespace msgam;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments draw_moments(const Family& f, double mu, double phi, int n, std::uint64_t seed) {
  Philox rng(seed);
  double s = 0.0;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = f.sample(mu, Dispersion(phi), rng);
    s += y;
    ss += y * y;
  }
  Moments m;
  m.mean = s / n;
  m.var = (ss - n * m.mean * m.mean) / (n - 1);
  return m;
}

}  // namespace

TEST_SUITE("family") {
  TEST_CASE("density examples") {
    const Family pois(FamilyKind::poisson);
    const Family norm(FamilyKind::normal);
    const Family gam(FamilyKind::gamma);
    CHECK(pois.log_density(0.0, 2.0) == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(norm.log_density(1.7, 1.7, Dispersion(1.0)) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    // shape 2, mean 1: rate 2
    CHECK(gam.log_density(1.0, 1.0, Dispersion(2.0)) == doctest::Approx(oracle::gamma_log_pdf(1.0, 2.0, 2.0)));
    CHECK(gam.log_density(1.0, 1.0, Dispersion(2.0)) == doctest::Approx(std::log(4.0) - 2.0));
  }

  TEST_CASE("densities agree with textbook formulas") {
    const Family pois(FamilyKind::poisson);
    const Family norm(FamilyKind::normal);
    const Family gam(FamilyKind::gamma);
    for (double y : {0.0, 1.0, 4.0, 17.0}) {
      for (double mu : {0.3, 2.0, 11.0}) CHECK(pois.log_density(y, mu) == doctest::Approx(oracle::poisson_log_pmf(y, mu)));
    }
    for (double y : {-2.0, 0.5, 3.0}) {
      CHECK(norm.log_density(y, 0.4, Dispersion(2.5)) == doctest::Approx(oracle::normal_log_pdf(y, 0.4, 2.5)));
    }
    for (double y : {0.1, 1.0, 6.0}) {
      for (double shape : {0.7, 3.0}) {
        const double mu = 2.2;
        CHECK(gam.log_density(y, mu, Dispersion(shape)) ==
              doctest::Approx(oracle::gamma_log_pdf(y, shape, shape / mu)));
      }
    }
  }

  TEST_CASE("links") {
    const Family pois(FamilyKind::poisson);
    const Family norm(FamilyKind::normal);
    CHECK(pois.inverse_link(0.0) == 1.0);
    CHECK(norm.inverse_link(-1.3) == -1.3);
    CHECK(pois.inverse_link(2.0) == doctest::Approx(std::exp(2.0)).epsilon(1e-15));
    for (double mu = 1e-6; mu <= 1e6; mu *= 3.7) {
      CHECK(std::abs(pois.inverse_link(pois.link_function(mu)) - mu) <= 1e-12 * mu);
    }
    double prev = -1.0;
    for (double eta = -20.0; eta <= 20.0; eta += 0.5) {
      CHECK(pois.inverse_link(eta) > prev);
      prev = pois.inverse_link(eta);
    }
  }

  TEST_CASE("unsupported family and link pairs") {
    CHECK_THROWS_AS(Family(FamilyKind::gamma, Link::identity), InputError);
    CHECK_THROWS_AS(Family(FamilyKind::poisson, Link::identity), InputError);
    CHECK_THROWS_AS(Family(FamilyKind::normal, Link::log), InputError);
    CHECK(Family(FamilyKind::gamma).link() == Link::log);
    CHECK_THROWS_AS(parse_family("binomial"), InputError);
    CHECK(parse_family("gamma") == FamilyKind::gamma);
    CHECK(parse_link("identity") == Link::identity);
  }

  TEST_CASE("support checks") {
    const Family pois(FamilyKind::poisson);
    const Family gam(FamilyKind::gamma);
    CHECK(pois.valid_response(3.0));
    CHECK_FALSE(pois.valid_response(2.5));
    CHECK_FALSE(pois.valid_response(-1.0));
    CHECK_FALSE(gam.valid_response(0.0));
    CHECK_THROWS_AS((void)pois.log_density(1.5, 2.0), InputError);
    CHECK_THROWS_AS((void)gam.log_density(1.0, -2.0, Dispersion(1.0)), InputError);
    CHECK_THROWS_AS(Dispersion(0.0), InputError);
  }

  TEST_CASE("densities normalize") {
    const Family pois(FamilyKind::poisson);
    for (double mu : {0.5, 4.0, 30.0}) {
      double s = 0.0;
      for (int y = 0; y < 400; ++y) s += std::exp(pois.log_density(y, mu));
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    const Family norm(FamilyKind::normal);
    {
      // Simpson on [mu - 12 sd, mu + 12 sd]
      const double mu = 1.0;
      const double sd = 2.0;
      const int n = 4000;
      const double a = mu - 12 * sd;
      const double h = 24 * sd / n;
      double s = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        s += w * std::exp(norm.log_density(a + k * h, mu, Dispersion(sd)));
      }
      CHECK(std::abs(s * h / 3.0 - 1.0) < 1e-6);
    }
    const Family gam(FamilyKind::gamma);
    for (double shape : {2.0, 5.0}) {
      // Simpson in u = log y
      const double mu = 3.0;
      const int n = 20000;
      const double a = std::log(mu) - 25.0;
      const double b = std::log(mu) + 5.0;
      const double h = (b - a) / n;
      double s = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double u = a + k * h;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        s += w * std::exp(gam.log_density(std::exp(u), mu, Dispersion(shape)) + u);
      }
      CHECK(std::abs(s * h / 3.0 - 1.0) < 1e-6);
    }
  }

  TEST_CASE("sampler moments") {
    constexpr int n = 100000;
    {
      const Moments m = draw_moments(Family(FamilyKind::poisson), 2.0, 1.0, n, 1);
      CHECK(std::abs(m.mean - 2.0) < 3.0 * std::sqrt(2.0 / n));
      // Var of the sample variance: (mu4 - sigma^4) / n with mu4 = lambda (1 + 3 lambda)
      CHECK(std::abs(m.var - 2.0) < 4.0 * std::sqrt((2.0 * 7.0 - 4.0) / n));
    }
    {
      const Moments m = draw_moments(Family(FamilyKind::normal), 1.0, 3.0, n, 2);
      CHECK(std::abs(m.mean - 1.0) < 4.0 * 3.0 / std::sqrt(n));
      // sd of the sample sd is about sigma / sqrt(2n)
      CHECK(std::abs(std::sqrt(m.var) - 3.0) < 3.0 * 3.0 / std::sqrt(2.0 * n));
    }
    {
      const double mu = 2.5;
      const double shape = 3.0;
      const Moments m = draw_moments(Family(FamilyKind::gamma), mu, shape, n, 3);
      const double var = mu * mu / shape;
      CHECK(std::abs(m.mean - mu) < 4.0 * std::sqrt(var / n));
      const double mu4 = var * var * (3.0 + 6.0 / shape);
      CHECK(std::abs(m.var - var) < 4.0 * std::sqrt((mu4 - var * var) / n));
    }
  }

  TEST_CASE("sampling is deterministic in the seed") {
    const Family f(FamilyKind::gamma);
    Philox a(42);
    Philox b(42);
    for (int i = 0; i < 100; ++i) CHECK(f.sample(1.5, Dispersion(2.0), a) == f.sample(1.5, Dispersion(2.0), b));
  }

  TEST_CASE("derivative terms match finite differences") {
    for (FamilyKind kind : {FamilyKind::poisson, FamilyKind::normal, FamilyKind::gamma}) {
      const Family f(kind);
      const double y = kind == FamilyKind::normal ? -0.7 : 3.0;
      const double c = f.response_constant(y);
      const double eta = 0.8;
      const double phi = 1.7;
      const auto d = f.dispersion_terms(phi);
      const DensityTerms t = f.terms(y, c, eta, d);
      CHECK(t.log_density ==
            doctest::Approx(f.log_density(y, f.inverse_link(eta), Dispersion(f.has_dispersion() ? phi : 1.0))));
      const double h = 1e-6;
      const double fd_eta = (f.terms(y, c, eta + h, d).log_density - f.terms(y, c, eta - h, d).log_density) / (2 * h);
      CHECK(t.d_eta == doctest::Approx(fd_eta).epsilon(1e-6));
      if (f.has_dispersion()) {
        const double up = f.terms(y, c, eta, f.dispersion_terms(phi * std::exp(h))).log_density;
        const double dn = f.terms(y, c, eta, f.dispersion_terms(phi * std::exp(-h))).log_density;
        CHECK(t.d_log_phi == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-6));
      }
    }
  }
}
