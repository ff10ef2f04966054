#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "msgam/error.hpp"
#include "msgam/experiments.hpp"
#include "msgam/fit.hpp"
#include "msgam/model.hpp"
#include "msgam/objective.hpp"
#include "msgam/optimizer.hpp"
#include "oracles.hpp"

using namespace msgam;

namespace {

/// Random valid parameters: coefficients N(0, sd) except the structural zero.
MSGAMParams random_params(const MSGAMSpec& spec, Philox& rng, double sd = 0.3) {
  std::normal_distribution<double> n(0.0, sd);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Eigen::VectorXd b0(spec.n_states);
  Eigen::VectorXd disp(spec.n_states);
  for (int i = 0; i < spec.n_states; ++i) {
    b0[i] = 0.5 + 0.5 * i + n(rng);
    disp[i] = spec.family.has_dispersion() ? u(rng) : 1.0;
  }
  MSGAMParams p = make_params(spec, b0, disp);
  for (int i = 0; i < spec.n_states; ++i) {
    for (int k = 0; k < spec.n_terms(); ++k) {
      Eigen::VectorXd& c = p.coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      for (Eigen::Index j = 0; j < c.size(); ++j) c[j] = n(rng);
      if (spec.terms[static_cast<std::size_t>(k)].kind == TermKind::smooth) {
        c[spec.terms[static_cast<std::size_t>(k)].basis.center_index()] = 0.0;
      }
    }
  }
  p.chain = MarkovChain::stationary(testing::random_tpm(spec.n_states, rng));
  return p;
}

/// Design of an N = 1 model with one smooth: intercept plus every basis
/// function except the centre one, evaluated by Cox-de Boor.
Eigen::MatrixXd glm_design(const MSGAMSpec& spec, const TimeSeriesData& d) {
  const Term& term = spec.terms[0];
  const int K = term.basis.n_basis();
  const int c = term.basis.center_index();
  Eigen::MatrixXd X(d.size(), K);
  for (int t = 0; t < d.size(); ++t) {
    const double z = (d.x(t, 0) - term.standardizer.mean) / term.standardizer.sd;
    X(t, 0) = 1.0;
    int col = 1;
    for (int k = 0; k < K; ++k) {
      if (k == c) continue;
      X(t, col++) = oracle::cox_de_boor(term.basis.knots(), k, 3, z);
    }
  }
  return X;
}

Eigen::VectorXd y_vector(const TimeSeriesData& d) { return Eigen::Map<const Eigen::VectorXd>(d.y.data(), d.size()); }

MSGAMSpec poisson_spec(const TimeSeriesData& d, int states, int K) {
  ModelOptions o;
  o.family = Family(FamilyKind::poisson);
  o.n_states = states;
  o.n_basis = K;
  return make_spec(d, o);
}

}  // namespace

TEST_SUITE("fit") {
  TEST_CASE("pack and unpack") {
    const TimeSeriesData d = testing::make_data(std::vector<double>(50, 1.0), testing::uniform_covariates(50, 2, 1));
    ModelOptions o;
    o.family = Family(FamilyKind::normal);
    o.n_states = 3;
    o.n_basis = 7;
    o.term_kinds = {TermKind::smooth, TermKind::linear};
    for (InitMode mode : {InitMode::stationary, InitMode::estimated}) {
      o.init_mode = mode;
      const MSGAMSpec spec = make_spec(d, o);
      Philox rng(4);
      MSGAMParams p = random_params(spec, rng);
      if (mode == InitMode::estimated) {
        p.chain.init = testing::random_simplex(3, rng);
        p.chain.init_mode = InitMode::estimated;
      }
      const Eigen::VectorXd theta = pack(spec, p);
      CHECK(theta.size() == spec.n_packed());
      const MSGAMParams q = unpack(spec, theta);
      CHECK((q.intercepts - p.intercepts).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((q.dispersions - p.dispersions).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((q.chain.tpm - p.chain.tpm).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((q.chain.init - p.chain.init).cwiseAbs().maxCoeff() < 1e-12);
      for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 2; ++k) {
          CHECK((q.coeffs[i][k] - p.coeffs[i][k]).cwiseAbs().maxCoeff() < 1e-12);
        }
        CHECK(q.coeffs[i][0][spec.terms[0].basis.center_index()] == 0.0);
      }
    }
  }

  TEST_CASE("transform examples") {
    const TimeSeriesData d = testing::make_data(std::vector<double>(20, 1.0), testing::uniform_covariates(20, 1, 2));
    const MSGAMSpec spec = poisson_spec(d, 2, 5);
    MSGAMParams p = make_params(spec, Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d::Ones());
    p.chain = MarkovChain::stationary((Eigen::MatrixXd(2, 2) << 0.9, 0.1, 0.1, 0.9).finished());
    const Eigen::VectorXd theta = pack(spec, p);
    // layout: (b0, 4 free coefficients) per state, then one logit per row
    CHECK(theta.size() == 12);
    CHECK(theta[10] == doctest::Approx(std::log(0.1 / 0.9)).epsilon(1e-14));
    const MSGAMParams q = unpack(spec, theta);
    CHECK(q.chain.tpm(0, 0) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(q.chain.tpm(0, 1) == doctest::Approx(0.1).epsilon(1e-14));

    const MSGAMParams z = unpack(spec, Eigen::VectorXd::Zero(12));
    CHECK(z.chain.tpm(0, 0) == doctest::Approx(0.5));
    CHECK(z.chain.tpm(1, 0) == doctest::Approx(0.5));
    CHECK(z.dispersions.cwiseEqual(1.0).all());
    for (int i = 0; i < 2; ++i) CHECK(z.coeffs[i][0].cwiseAbs().maxCoeff() == 0.0);

    ModelOptions on;
    on.family = Family(FamilyKind::gamma);
    on.n_states = 2;
    on.n_basis = 5;
    const MSGAMSpec gspec = make_spec(d, on);
    const MSGAMParams g = unpack(gspec, Eigen::VectorXd::Zero(gspec.n_packed()));
    CHECK(g.dispersions.cwiseEqual(1.0).all());
  }

  TEST_CASE("predictor matrix") {
    const TimeSeriesData d = testing::make_data(std::vector<double>(40, 1.0), testing::uniform_covariates(40, 1, 3));
    const MSGAMSpec spec = poisson_spec(d, 2, 7);
    MSGAMParams p = make_params(spec, Eigen::Vector2d(1.5, 1.5), Eigen::Vector2d::Ones());
    CHECK((predictor_matrix(spec, p, d).array() - 1.5).abs().maxCoeff() == 0.0);

    // straight-line coefficients give an affine predictor, checked by direct summation
    const Term& term = spec.terms[0];
    const int c = term.basis.center_index();
    for (int k = 0; k < 7; ++k) p.coeffs[0][0][k] = 0.4 * (k - c);
    const Eigen::MatrixXd eta = predictor_matrix(spec, p, d);
    std::vector<double> z(40);
    for (int t = 0; t < 40; ++t) {
      z[t] = term.standardizer.apply(d.x(t, 0));
      double direct = 1.5;
      for (int k = 0; k < 7; ++k) direct += p.coeffs[0][0][k] * oracle::cox_de_boor(term.basis.knots(), k, 3, z[t]);
      CHECK(eta(t, 0) == doctest::Approx(direct).epsilon(1e-12));
    }
    const double slope = (eta(1, 0) - eta(0, 0)) / (z[1] - z[0]);
    for (int t = 2; t < 40; ++t) CHECK(eta(t, 0) == doctest::Approx(eta(0, 0) + slope * (z[t] - z[0])).epsilon(1e-10));
  }

  TEST_CASE("scenario I truth at the origin") {
    const ScenarioConfig c = scenario_one();
    for (int i = 0; i < 2; ++i) {
      CHECK(c.intercepts[i] + c.truths[i][0].f(0.0) == 2.0);
    }
  }

  TEST_CASE("objective: lambda zero and null-space penalty") {
    Philox rng(5);
    const TimeSeriesData d = testing::poisson_linear_data(60, 1.0, 0.3, 5);
    const MSGAMSpec spec = poisson_spec(d, 2, 5);
    const MSGAMParams p = random_params(spec, rng);
    const Eigen::VectorXd theta = pack(spec, p);
    const PenalizedObjective zero(spec, d, SmoothingVector(2, 1, 0.0));
    CHECK(zero(theta) == -zero.loglik(theta));
    CHECK(zero.loglik(theta) == forward_loglik(p.chain, state_log_densities(spec, p, d)).log_likelihood);

    MSGAMParams line = p;
    for (int i = 0; i < 2; ++i) {
      for (int k = 0; k < 5; ++k) line.coeffs[i][0][k] = 0.2 * (k - 2) * (i + 1);
    }
    const PenalizedObjective big(spec, d, SmoothingVector(2, 1, 1e4));
    CHECK(std::abs(big.penalty(pack(spec, line))) < 1e-9);
  }

  TEST_CASE("objective: penalty recomputed by loops") {
    Philox rng(6);
    const TimeSeriesData d = testing::poisson_linear_data(80, 1.0, 0.3, 6);
    const MSGAMSpec spec = poisson_spec(d, 2, 5);
    SmoothingVector lam(2, 1);
    lam(0, 0) = 8.0;
    lam(1, 0) = 64.0;
    const MSGAMParams p = random_params(spec, rng, 0.5);
    const Eigen::VectorXd theta = pack(spec, p);
    double pen = 0.0;
    for (int i = 0; i < 2; ++i) {
      const Eigen::VectorXd& g = p.coeffs[i][0];
      double s = 0.0;
      for (int k = 2; k < 5; ++k) s += std::pow(g[k] - 2.0 * g[k - 1] + g[k - 2], 2);
      pen += lam(i, 0) / 2.0 * s;
    }
    const double ll = oracle::forward_loglik(p.chain.tpm, p.chain.init, state_log_densities(spec, p, d));
    CHECK(penalized_negloglik(theta, spec, d, lam) == doctest::Approx(-ll + pen).epsilon(1e-12));
  }

  TEST_CASE("objective: monotone in every smoothing parameter") {
    Philox rng(7);
    const TimeSeriesData d = testing::make_data(std::vector<double>(60, 0.5), testing::uniform_covariates(60, 2, 7));
    ModelOptions o;
    o.n_states = 2;
    o.n_basis = 7;
    const MSGAMSpec spec = make_spec(d, o);
    const Eigen::VectorXd theta = pack(spec, random_params(spec, rng));
    for (int i = 0; i < 2; ++i) {
      for (int k = 0; k < 2; ++k) {
        double prev = -1e300;
        for (double v : {0.0, 0.5, 4.0, 100.0}) {
          SmoothingVector lam(2, 2, 1.0);
          lam(i, k) = v;
          const double f = penalized_negloglik(theta, spec, d, lam);
          CHECK(f >= prev);
          prev = f;
        }
      }
    }
  }

  TEST_CASE("objective: analytic and finite-difference gradients") {
    Philox rng(8);
    for (FamilyKind kind : {FamilyKind::poisson, FamilyKind::normal, FamilyKind::gamma}) {
      const Eigen::MatrixXd x = testing::uniform_covariates(70, 2, 8);
      std::vector<double> y(70);
      std::uniform_real_distribution<double> u(0.2, 6.0);
      for (double& v : y) v = kind == FamilyKind::poisson ? std::floor(u(rng)) : u(rng);
      TimeSeriesData d = testing::make_data(y, x);
      d.missing.assign(70, 0);
      d.missing[10] = 1;
      ModelOptions o;
      o.family = Family(kind);
      o.n_states = 2;
      o.n_basis = 7;
      o.term_kinds = {TermKind::smooth, TermKind::linear};
      o.init_mode = kind == FamilyKind::gamma ? InitMode::estimated : InitMode::stationary;
      const MSGAMSpec spec = make_spec(d, o);
      SmoothingVector lam(2, 2, 3.0);
      const PenalizedObjective obj(spec, d, lam);
      for (int rep = 0; rep < 20; ++rep) {
        MSGAMParams p = random_params(spec, rng, 0.2);
        if (kind == FamilyKind::poisson) p.intercepts.array() += 0.5;
        const Eigen::VectorXd theta = pack(spec, p);
        Eigen::VectorXd g;
        obj.value_and_gradient(theta, g);
        const Eigen::VectorXd fd1 = finite_difference_gradient(obj, theta);
        const Eigen::VectorXd fd2 = finite_difference_gradient(obj, theta, 0.5);
        const double scale = 1.0 + fd1.cwiseAbs().maxCoeff();
        CHECK((fd1 - fd2).cwiseAbs().maxCoeff() / scale < 1e-4);
        CHECK((g - fd1).cwiseAbs().maxCoeff() / scale < 1e-5);
      }
    }
  }

  TEST_CASE("label switching leaves the likelihood unchanged") {
    Philox rng(9);
    const TimeSeriesData d = testing::poisson_linear_data(90, 1.0, 0.3, 9);
    const MSGAMSpec spec = poisson_spec(d, 3, 5);
    const MSGAMParams p = random_params(spec, rng);
    const std::vector<int> order{2, 0, 1};
    const MSGAMParams q = permute_states(p, order);
    const SmoothingVector zero(3, 1, 0.0);
    CHECK(penalized_negloglik(pack(spec, q), spec, d, zero) ==
          doctest::Approx(penalized_negloglik(pack(spec, p), spec, d, zero)).epsilon(1e-12));
    CHECK(q.intercepts[0] == p.intercepts[2]);
    CHECK(q.chain.tpm(0, 1) == p.chain.tpm(2, 0));
  }

  TEST_CASE("numerical hessian is exact on quadratics") {
    Eigen::MatrixXd A(3, 3);
    A << 4, 1, 0.5, 1, 3, -0.2, 0.5, -0.2, 2;
    const Eigen::Vector3d b(0.3, -1.0, 2.0);
    auto grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x + b; };
    const Eigen::MatrixXd H = numerical_hessian(grad, Eigen::Vector3d(0.7, -2.0, 5.0));
    CHECK((H - A).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("bfgs minimizes a Rosenbrock function") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g.resize(2);
      g[0] = -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]);
      g[1] = 200 * (x[1] - x[0] * x[0]);
      return std::pow(1 - x[0], 2) + 100 * std::pow(x[1] - x[0] * x[0], 2);
    };
    const OptimizerResult r = minimize_bfgs(f, Eigen::Vector2d(-1.2, 1.0));
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
  }

  TEST_CASE("effective degrees of freedom algebra") {
    CHECK(effective_dof(Eigen::Vector2d(2, 4).asDiagonal().toDenseMatrix(),
                        Eigen::Vector2d(2, 2).asDiagonal().toDenseMatrix()) == doctest::Approx(1.5));
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 0, 0, -1;
    CHECK_THROWS_AS(effective_dof(bad, Eigen::MatrixXd::Identity(2, 2)), NumericalError);
    // indefinite unpenalized information driving nu negative
    Eigen::MatrixXd un(2, 2);
    un << -5, 0, 0, 1;
    CHECK_THROWS_AS(effective_dof(Eigen::MatrixXd::Identity(2, 2), un), NumericalError);
  }

  TEST_CASE("information of an N = 1 Poisson model") {
    const TimeSeriesData d = testing::poisson_linear_data(200, 1.0, 0.4, 10);
    const MSGAMSpec spec = poisson_spec(d, 1, 7);
    Philox rng(10);
    const MSGAMParams p = random_params(spec, rng, 0.2);
    const Eigen::VectorXd theta = pack(spec, p);
    SmoothingVector lam(1, 1, 5.0);
    const FisherInformation info = observed_fisher(theta, spec, d, lam, {}, 1e300);
    const Eigen::MatrixXd X = glm_design(spec, d);
    const Eigen::VectorXd mu = (X * theta).array().exp();
    const Eigen::MatrixXd glm = X.transpose() * mu.asDiagonal() * X;
    CHECK((info.unpenalized - glm).cwiseAbs().maxCoeff() / glm.cwiseAbs().maxCoeff() < 1e-3);
    const PenalizedObjective obj(spec, d, lam);
    CHECK((info.penalized - info.unpenalized - obj.penalty_hessian()).cwiseAbs().maxCoeff() < 1e-4);
    // penalty Hessian is lambda times the penalty without the centre row and column
    const Eigen::MatrixXd M = penalty_matrix(7, 2).matrix;
    const Eigen::MatrixXd ph = obj.penalty_hessian();
    int r = 1;
    for (int a = 0; a < 7; ++a) {
      if (a == 3) continue;
      int c = 1;
      for (int b = 0; b < 7; ++b) {
        if (b == 3) continue;
        CHECK(ph(r, c) == doctest::Approx(5.0 * M(a, b)));
        ++c;
      }
      ++r;
    }
  }

  TEST_CASE("N = 1 Poisson fit equals a GLM fit") {
    const TimeSeriesData d = testing::poisson_linear_data(250, 1.2, 0.35, 11);
    const MSGAMSpec spec = poisson_spec(d, 1, 5);
    FitOptions fo;
    fo.n_restarts = 1;
    const FitResult r = fit(spec, d, SmoothingVector(1, 1, 0.0), fo);
    REQUIRE(r.converged);
    const oracle::GlmFit glm = oracle::poisson_irls(glm_design(spec, d), y_vector(d));
    CHECK(std::abs(r.loglik_unpenalized - glm.loglik) < 1e-6);
    CHECK(std::abs(r.edf - spec.n_packed()) < 1e-6);

    // penalized: the fitted log-likelihood matches penalized IRLS
    Eigen::MatrixXd M = penalty_matrix(5, 2).matrix;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(5, 5);
    const int keep[4] = {0, 1, 3, 4};
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) S(a + 1, b + 1) = 20.0 * M(keep[a], keep[b]);
    }
    const FitResult pen = fit(spec, d, SmoothingVector(1, 1, 20.0), fo);
    const oracle::GlmFit pglm = oracle::poisson_irls(glm_design(spec, d), y_vector(d), S);
    CHECK(std::abs(pen.loglik_unpenalized - pglm.loglik) < 1e-4);
  }

  TEST_CASE("heavy smoothing recovers the linear GLM") {
    const TimeSeriesData d = testing::poisson_linear_data(300, 1.0, 0.4, 12);
    const MSGAMSpec spec = poisson_spec(d, 1, 15);
    FitOptions fo;
    fo.n_restarts = 1;
    const FitResult r = fit(spec, d, SmoothingVector(1, 1, 1e6), fo);
    REQUIRE(r.converged);
    const Eigen::VectorXd& g = r.params.coeffs[0][0];
    double worst = 0.0;
    for (int k = 2; k < 15; ++k) worst = std::max(worst, std::abs(g[k] - 2 * g[k - 1] + g[k - 2]));
    CHECK(worst < 1e-3);
    Eigen::MatrixXd X(d.size(), 2);
    for (int t = 0; t < d.size(); ++t) X.row(t) << 1.0, d.x(t, 0);
    const oracle::GlmFit glm = oracle::poisson_irls(X, y_vector(d));
    const Term& term = spec.terms[0];
    const double at0 = r.params.intercepts[0] + term.eval(g, 0.0);
    const double slope = (term.eval(g, 1.0) - term.eval(g, -1.0)) / 2.0;
    CHECK(std::abs(at0 - glm.beta[0]) < 1e-2);
    CHECK(std::abs(slope - glm.beta[1]) < 1e-2);
    CHECK(std::abs(r.edf - spec.n_parametric()) < 0.5);
  }

  TEST_CASE("edf endpoints for a two-state model") {
    const ScenarioConfig sc = scenario_one();
    const ScenarioSample s = simulate_scenario(sc, 0);
    ModelOptions o;
    o.family = sc.family;
    o.n_states = 2;
    o.n_basis = 7;
    const MSGAMSpec spec = make_spec(s.series.data, o);
    FitOptions fo;
    const FitResult zero = fit(spec, s.series.data, SmoothingVector(2, 1, 0.0), fo);
    REQUIRE_MESSAGE(zero.converged, zero.message);
    CHECK(std::abs(zero.edf - spec.n_packed()) < 1e-6);
    const FitResult big = fit(spec, s.series.data, SmoothingVector(2, 1, 4096.0), fo);
    REQUIRE_MESSAGE(big.converged, big.message);
    CHECK(std::abs(big.edf - spec.n_parametric()) < 0.5);
  }

  TEST_CASE("scenario I single run") {
    const ScenarioConfig sc = scenario_one();
    const ScenarioSample s = simulate_scenario(sc, 3);
    ModelOptions o;
    o.family = sc.family;
    o.n_states = 2;
    const MSGAMSpec spec = make_spec(s.series.data, o);
    const FitResult r = fit(spec, s.series.data, SmoothingVector(2, 1, 8.0));
    REQUIRE(r.converged);
    CHECK(r.params.chain.tpm(0, 0) > 0.75);
    CHECK(r.params.chain.tpm(0, 0) < 0.99);
    CHECK(r.params.chain.tpm(1, 1) > 0.75);
    CHECK(r.params.chain.tpm(1, 1) < 0.99);
    CHECK(r.params.intercepts[0] <= r.params.intercepts[1]);
    CHECK(r.state_order.size() == 2);
  }

  TEST_CASE("segmentation starts find the persistent optimum") {
    const ScenarioSample s = simulate_scenario(scenario_one(), 1);
    const MSGAMSpec spec = poisson_spec(s.series.data, 2, 9);
    FitOptions fo;
    fo.n_restarts = 6;
    fo.seed = 4;
    fo.permutation_starts = false;
    const FitResult seg = fit(spec, s.series.data, SmoothingVector(2, 1, 1.0), fo);
    REQUIRE(seg.converged);
    CHECK(seg.params.chain.tpm(0, 0) > 0.8);
    CHECK(seg.params.chain.tpm(1, 1) > 0.8);
    fo.segment_starts = false;
    const FitResult noise = fit(spec, s.series.data, SmoothingVector(2, 1, 1.0), fo);
    CHECK(seg.loglik_penalized >= noise.loglik_penalized - 1e-3);
  }

  TEST_CASE("single-state fit recovers the intercept") {
    const TimeSeriesData d = testing::poisson_linear_data(400, 1.5, 0.0, 13);
    const MSGAMSpec spec = poisson_spec(d, 1, 7);
    const FitResult r = fit(spec, d, SmoothingVector(1, 1, 1e5));
    REQUIRE(r.converged);
    const FisherInformation info = observed_fisher(r.raw_packed, spec, d, r.lambda);
    const double se = std::sqrt(info.penalized.inverse()(0, 0));
    CHECK(std::abs(r.params.intercepts[0] + spec.terms[0].eval(r.params.coeffs[0][0], 0.0) - 1.5) < 3.0 * se + 0.05);
  }

  TEST_CASE("fits are deterministic and gradient modes agree") {
    const ScenarioSample s = simulate_scenario(scenario_one(), 4);
    ModelOptions o;
    o.family = Family(FamilyKind::poisson);
    o.n_states = 2;
    o.n_basis = 9;
    const MSGAMSpec spec = make_spec(s.series.data, o);
    FitOptions fo;
    fo.n_restarts = 2;
    fo.seed = 99;
    const FitResult a = fit(spec, s.series.data, SmoothingVector(2, 1, 8.0), fo);
    const FitResult b = fit(spec, s.series.data, SmoothingVector(2, 1, 8.0), fo);
    CHECK(a.loglik_penalized == b.loglik_penalized);
    CHECK(a.raw_packed == b.raw_packed);
    fo.gradient = GradientMode::central_difference;
    fo.start = a.raw_packed;
    fo.n_restarts = 1;
    const FitResult c = fit(spec, s.series.data, SmoothingVector(2, 1, 8.0), fo);
    CHECK(c.loglik_penalized == doctest::Approx(a.loglik_penalized).epsilon(1e-6));
  }

  TEST_CASE("collapsed states are never reported as converged") {
    // a third of the responses sit exactly on one value: a Normal state can
    // shrink its standard deviation towards zero around them
    Philox rng(15);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> y(150);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] = (t % 3 == 0) ? 2.0 : n(rng);
    const TimeSeriesData d = testing::make_data(y, testing::uniform_covariates(150, 1, 15));
    ModelOptions o;
    o.n_states = 2;
    o.n_basis = 5;
    const MSGAMSpec spec = make_spec(d, o);
    FitOptions fo;
    fo.n_restarts = 5;
    const FitResult r = fit(spec, d, SmoothingVector(2, 1, 1.0), fo);
    double sd = 0.0;
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 150.0;
    for (double v : y) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / 149.0);
    if (r.converged) CHECK(r.params.dispersions.minCoeff() >= fo.collapse_ratio * sd);
  }

  TEST_CASE("invalid inputs") {
    Eigen::MatrixXd flat = testing::uniform_covariates(30, 1, 1);
    flat.setConstant(2.0);
    const TimeSeriesData d = testing::make_data(std::vector<double>(30, 1.0), flat);
    ModelOptions o;
    o.family = Family(FamilyKind::poisson);
    CHECK_THROWS_AS(make_spec(d, o), InputError);
    const TimeSeriesData ok = testing::poisson_linear_data(40, 1.0, 0.2, 2);
    const MSGAMSpec spec = poisson_spec(ok, 2, 5);
    CHECK_THROWS_AS(fit(spec, ok, SmoothingVector(1, 1, 0.0)), InputError);
    TimeSeriesData bad = ok;
    bad.y[3] = 2.5;
    CHECK_THROWS_AS(fit(spec, bad, SmoothingVector(2, 1, 0.0)), InputError);
    ModelOptions e = o;
    e.n_basis = 14;
    CHECK_THROWS_AS(make_spec(ok, e), InputError);
  }
}
