#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "msgam/error.hpp"
#include "msgam/experiments.hpp"
#include "msgam/smoothing.hpp"
#include "oracles.hpp"

using namespace msgam;

namespace {

MSGAMSpec spec_for(const TimeSeriesData& d, int states, int K, int covariates = 1) {
  ModelOptions o;
  o.family = Family(FamilyKind::poisson);
  o.n_states = states;
  o.n_basis = K;
  o.term_kinds.assign(static_cast<std::size_t>(covariates), TermKind::smooth);
  return make_spec(d, o);
}

TimeSeriesData two_state_data(int T, std::uint64_t seed) {
  ScenarioConfig c = scenario_one();
  c.n_obs = T;
  c.seed = seed;
  return simulate_scenario(c, 0).series.data;
}

ScoreRow row(std::size_t point, double lambda, double score) {
  return {point, -1, SmoothingVector(1, 1, lambda), score};
}

}  // namespace

TEST_SUITE("smoothing") {
  TEST_CASE("cross-validation masks") {
    const auto masks = cv_masks(200, 25, 0.9, 7);
    CHECK(masks.size() == 25);
    for (const auto& m : masks) {
      CHECK(m.size() == 200);
      CHECK(std::count(m.begin(), m.end(), 1) == 20);
      CHECK(std::count(m.begin(), m.end(), 0) == 180);
    }
    CHECK(masks == cv_masks(200, 25, 0.9, 7));
    CHECK(masks != cv_masks(200, 25, 0.9, 8));
    CHECK(masks[0] != masks[1]);

    for (const auto& m : cv_masks(101, 10, 0.8, 3, FoldMode::block)) {
      const auto first = std::find(m.begin(), m.end(), 1);
      const auto last = std::find(first, m.end(), 0);
      CHECK(std::count(m.begin(), m.end(), 1) == 20);
      CHECK(last - first == 20);
    }
    CHECK_THROWS_AS(cv_masks(100, 1, 0.9, 1), InputError);
    CHECK_THROWS_AS(cv_masks(100, 5, 0.5, 1), InputError);
    CHECK_THROWS_AS(cv_masks(100, 5, 1.0, 1), InputError);
  }

  TEST_CASE("grid enumeration and tying") {
    const TimeSeriesData d = testing::make_data(std::vector<double>(30, 1.0), testing::uniform_covariates(30, 2, 1));
    const MSGAMSpec spec = spec_for(d, 2, 5, 2);
    const LambdaGrid full(spec, std::vector<double>{1.0, 8.0, 64.0});
    CHECK(full.n_coordinates() == 4);
    CHECK(full.size() == 81);
    // last coordinate varies fastest; coordinates run over (state, covariate)
    const SmoothingVector p1 = full.point(1);
    CHECK(p1(0, 0) == 1.0);
    CHECK(p1(1, 1) == 8.0);
    const SmoothingVector p27 = full.point(27);
    CHECK(p27(0, 0) == 8.0);
    CHECK(p27(1, 1) == 1.0);

    const LambdaGrid states(spec, std::vector<double>{1.0, 8.0}, Tie::states);
    CHECK(states.size() == 4);
    const SmoothingVector s = states.point(2);
    CHECK(s(0, 0) == 8.0);
    CHECK(s(1, 0) == 8.0);
    CHECK(s(0, 1) == 1.0);
    CHECK(LambdaGrid(spec, std::vector<double>{1.0, 8.0, 5.0}, Tie::all).size() == 3);
    CHECK(LambdaGrid(spec, std::vector<double>{64.0, 1.0}).candidates()[0] == std::vector<double>{1.0, 64.0});
    CHECK_THROWS_AS(LambdaGrid(spec, std::vector<double>{}), InputError);
    CHECK_THROWS_AS(LambdaGrid(spec, {-1.0, 2.0}), InputError);
    CHECK_THROWS_AS(LambdaGrid(spec, std::vector<std::vector<double>>{{1.0}, {2.0}}), InputError);

    ModelOptions lin;
    lin.term_kinds = {TermKind::smooth, TermKind::linear};
    lin.n_basis = 5;
    const LambdaGrid partial(make_spec(d, lin), {1.0, 2.0});
    CHECK(partial.n_coordinates() == 1);
  }

  TEST_CASE("warm-start order visits parents first") {
    const TimeSeriesData d = testing::make_data(std::vector<double>(30, 1.0), testing::uniform_covariates(30, 2, 1));
    const MSGAMSpec spec = spec_for(d, 2, 5, 2);
    for (GridPath path : {GridPath::from_smallest, GridPath::from_largest}) {
      LambdaGrid grid(spec, std::vector<std::vector<double>>{{1, 2, 3}, {1, 2}, {1, 2, 3, 4}, {5, 6}});
      grid.set_path(path);
      const auto order = grid.order();
      CHECK(order.size() == grid.size());
      CHECK(std::set<std::size_t>(order.begin(), order.end()).size() == grid.size());
      std::vector<int> position(grid.size());
      for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = static_cast<int>(k);
      int cold = 0;
      for (std::size_t p = 0; p < grid.size(); ++p) {
        const std::size_t parent = grid.parent(p);
        if (parent == LambdaGrid::npos) {
          ++cold;
          continue;
        }
        CHECK(position[parent] < position[p]);
        const auto a = grid.digits(p);
        const auto b = grid.digits(parent);
        int changed = 0;
        for (std::size_t j = 0; j < a.size(); ++j) {
          if (a[j] != b[j]) {
            ++changed;
            CHECK(std::abs(a[j] - b[j]) == 1);
            const bool stepped_down = b[j] < a[j];
            CHECK(stepped_down == (path == GridPath::from_smallest));
          }
        }
        CHECK(changed == 1);
      }
      CHECK(cold == (path == GridPath::from_smallest ? 3 : 1));
    }
  }

  TEST_CASE("best row ordering, ties and shifts") {
    std::vector<ScoreRow> rows{row(0, 1.0, 5.0), row(1, 8.0, 3.0), row(2, 64.0, 4.0)};
    CHECK(best_row(rows, false) == 1);
    CHECK(best_row(rows, true) == 0);
    rows[2].score = 3.0;
    CHECK(best_row(rows, false) == 2);
    for (auto& r : rows) r.score += 1234.5;
    CHECK(best_row(rows, false) == 2);
    // equal log-likelihood: the smaller effective dimension has the lower AIC_p
    const double ll = -100.0;
    std::vector<ScoreRow> aic{row(0, 1.0, -2.0 * ll + 2.0 * 9.0), row(1, 8.0, -2.0 * ll + 2.0 * 4.5)};
    CHECK(best_row(aic, false) == 1);
    CHECK_THROWS_AS(best_row({}, true), InputError);
    std::vector<ScoreRow> inf{row(0, 1.0, -std::numeric_limits<double>::infinity()), row(1, 2.0, -7.0)};
    CHECK(best_row(inf, true) == 1);
  }

  TEST_CASE("single-point grids") {
    const TimeSeriesData d = testing::poisson_linear_data(120, 1.0, 0.3, 4);
    const MSGAMSpec spec = spec_for(d, 1, 5);
    const LambdaGrid grid(spec, std::vector<double>{10.0});
    const SelectionResult a = aicp_select(spec, d, grid);
    CHECK(a.scores.size() == 1);
    CHECK(a.chosen(0, 0) == 10.0);
    REQUIRE(a.best_fit.has_value());
    const SelectionResult c = cv_select(spec, d, grid, 3, 0.9, 2);
    CHECK(c.scores.size() == 1);
    CHECK(c.fold_scores.size() == 3);
    CHECK(c.chosen(0, 0) == 10.0);
  }

  TEST_CASE("AIC_p at lambda zero uses the full parameter count") {
    const TimeSeriesData d = testing::poisson_linear_data(150, 1.0, 0.3, 5);
    const MSGAMSpec spec = spec_for(d, 1, 5);
    const SelectionResult a = aicp_select(spec, d, LambdaGrid(spec, std::vector<double>{0.0}));
    REQUIRE(a.best_fit.has_value());
    const double expected = -2.0 * a.best_fit->loglik_unpenalized + 2.0 * spec.n_packed();
    CHECK(std::abs(a.scores[0].score - expected) < 1e-5);
  }

  TEST_CASE("score tables and determinism") {
    const TimeSeriesData d = two_state_data(150, 11);
    const MSGAMSpec spec = spec_for(d, 2, 7);
    const LambdaGrid grid(spec, std::vector<double>{1.0, 64.0, 4096.0});
    SelectionOptions so;
    so.fit.n_restarts = 2;
    const SelectionResult a = aicp_select(spec, d, grid, so);
    CHECK(a.scores.size() == 9);
    std::set<std::size_t> points;
    for (const auto& r : a.scores) points.insert(r.point);
    CHECK(points.size() == 9);
    const std::size_t best = best_row(a.scores, false);
    for (const auto& r : a.scores) CHECK(r.score >= a.scores[best].score);
    CHECK(a.chosen.values() == grid.point(a.chosen_point).values());

    so.execution = Execution::serial;
    const SelectionResult s = aicp_select(spec, d, grid, so);
    set_thread_count(3);
    so.execution = Execution::parallel;
    const SelectionResult p = aicp_select(spec, d, grid, so);
    set_thread_count(1);
    REQUIRE(s.scores.size() == p.scores.size());
    for (std::size_t k = 0; k < s.scores.size(); ++k) {
      CHECK(s.scores[k].point == p.scores[k].point);
      CHECK(s.scores[k].score == p.scores[k].score);
      CHECK(s.scores[k].score == a.scores[k].score);
    }
    CHECK(s.chosen_point == p.chosen_point);

    const LambdaGrid tied(spec, std::vector<double>{1.0, 4096.0}, Tie::states);
    const SelectionResult c1 = cv_select(spec, d, tied, 4, 0.9, 3, so);
    const SelectionResult c2 = cv_select(spec, d, tied, 4, 0.9, 3, so);
    CHECK(c1.fold_scores.size() == 8);
    CHECK(c1.scores.size() == 2);
    for (std::size_t k = 0; k < c1.fold_scores.size(); ++k) CHECK(c1.fold_scores[k].score == c2.fold_scores[k].score);
    for (std::size_t p2 = 0; p2 < 2; ++p2) {
      double sum = 0.0;
      for (const auto& r : c1.fold_scores) {
        if (r.point == p2) sum += r.score;
      }
      CHECK(c1.scores[p2].score == doctest::Approx(sum / 4.0).epsilon(1e-14));
    }
  }

  TEST_CASE("validation scores match an independent forward pass") {
    TimeSeriesData d = two_state_data(140, 21);
    d.missing.assign(140, 0);
    d.missing[17] = 1;
    const MSGAMSpec spec = spec_for(d, 2, 5);
    const LambdaGrid grid(spec, std::vector<double>{2.0, 200.0}, Tie::none);
    REQUIRE(grid.parent(1) == 0);
    SelectionOptions so;
    so.fit.n_restarts = 2;
    const int folds = 3;
    const SelectionResult r = cv_select(spec, d, grid, folds, 0.85, 5, so);
    const auto masks = cv_masks(d.size(), folds, 0.85, 5);
    const std::size_t n = grid.size();
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::VectorXd> optimum(n);
      for (std::size_t p : grid.order()) {
        const std::size_t parent = grid.parent(p);
        const bool warm = parent != LambdaGrid::npos;
        FitOptions fo = job_options(so.fit, p, f, warm);
        fo.compute_edf = false;
        fo.sort_states = false;
        if (warm) fo.start = optimum[parent];
        const FitResult fr = fit(spec, d, grid.point(p), fo, masks[static_cast<std::size_t>(f)]);
        REQUIRE(fr.converged);
        optimum[p] = fr.raw_packed;
        const MSGAMParams params = unpack(spec, fr.raw_packed);
        std::vector<std::uint8_t> calib(d.missing.size());
        for (std::size_t t = 0; t < calib.size(); ++t) calib[t] = (d.missing[t] || !masks[f][t]) ? 1 : 0;
        const double oracle_score =
            oracle::forward_loglik(params.chain.tpm, params.chain.init, state_log_densities(spec, params, d), calib);
        const ScoreRow& stored = r.fold_scores[static_cast<std::size_t>(f) * n + p];
        CHECK(stored.fold == f);
        CHECK(stored.point == p);
        CHECK(std::abs(stored.score - oracle_score) < 1e-10);
      }
    }
  }

  TEST_CASE("failed fits are scored, not fatal") {
    const TimeSeriesData d = two_state_data(120, 31);
    const MSGAMSpec spec = spec_for(d, 2, 5);
    SelectionOptions so;
    so.fit.n_restarts = 1;
    so.fit.optimizer.max_iterations = 1;
    const LambdaGrid grid(spec, std::vector<double>{1.0, 10.0}, Tie::all);
    const SelectionResult a = aicp_select(spec, d, grid, so);
    CHECK(a.warnings.size() == 2);
    for (const auto& r : a.scores) CHECK(r.score == std::numeric_limits<double>::infinity());
    const SelectionResult c = cv_select(spec, d, grid, 2, 0.9, 1, so);
    CHECK(!c.warnings.empty());
    for (const auto& r : c.fold_scores) CHECK(r.score == -std::numeric_limits<double>::infinity());
  }

  TEST_CASE("job seeds differ across points and folds") {
    FitOptions base;
    base.seed = 5;
    std::set<std::uint64_t> seeds;
    for (std::size_t p = 0; p < 10; ++p) {
      for (int f = -1; f < 5; ++f) seeds.insert(job_options(base, p, f, false).seed);
    }
    CHECK(seeds.size() == 60);
    CHECK(job_options(base, 3, 1, true).n_restarts == 1);
    CHECK(job_options(base, 3, 1, false).n_restarts == base.n_restarts);
  }
}
