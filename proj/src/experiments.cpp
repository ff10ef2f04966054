#include "msgam/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "msgam/error.hpp"
#include "msgam/rng.hpp"

namespace msgam {

ScenarioId parse_scenario_id(std::string_view name) {
  if (name == "I" || name == "1") return ScenarioId::one;
  if (name == "II" || name == "2") return ScenarioId::two;
  if (name == "III" || name == "3") return ScenarioId::three;
  throw InputError("unknown scenario '" + std::string(name) + "' (expected I, II or III)");
}

std::string_view scenario_label(ScenarioId id) {
  switch (id) {
    case ScenarioId::one:
      return "I";
    case ScenarioId::two:
      return "II";
    case ScenarioId::three:
      return "III";
    case ScenarioId::custom:
      return "custom";
  }
  return "custom";
}

void ScenarioConfig::validate() const {
  const int n = n_states();
  if (n < 1 || tpm.cols() != n) throw InputError("scenario: t.p.m. must be square");
  MarkovChain::stationary(tpm).validate();
  if (intercepts.size() != n) throw InputError("scenario: one intercept per state required");
  if (family.has_dispersion() && dispersions.size() != n) throw InputError("scenario: one dispersion per state required");
  if (static_cast<int>(truths.size()) != n) throw InputError("scenario: one truth row per state required");
  for (const auto& row : truths) {
    if (static_cast<int>(row.size()) != n_covariates() || row.empty()) {
      throw InputError("scenario: every state needs the same non-empty set of truth curves");
    }
    for (const auto& c : row) {
      if (!c.f) throw InputError("scenario: truth curve '" + c.label + "' is empty");
    }
  }
  if (n_obs < 10) throw InputError("scenario: at least 10 observations required");
  if (runs < 1) throw InputError("scenario: at least one run required");
  if (!(x_lower < x_upper)) throw InputError("scenario: empty covariate range");
  if (lambda_grid.empty()) throw InputError("scenario: empty lambda grid");
  if (curve_points < 2) throw InputError("scenario: curve grid needs at least 2 points");
}

ScenarioConfig scenario_one() {
  ScenarioConfig c;
  c.id = ScenarioId::one;
  c.family = Family(FamilyKind::poisson);
  c.tpm.resize(2, 2);
  c.tpm << 0.9, 0.1, 0.1, 0.9;
  c.intercepts = Eigen::Vector2d(2.0, 2.0);
  c.dispersions = Eigen::Vector2d::Ones();
  c.truths = {{{"f1", [](double x) { return 1.5 * std::sin(x); }}},
              {{"f2", [](double x) { return 0.15 * x * x - 0.3 * x; }}}};
  c.n_obs = 300;
  c.runs = 200;
  c.lambda_grid = {0.125, 1.0, 8.0, 64.0, 512.0, 4096.0};
  return c;
}

ScenarioConfig scenario_two() {
  ScenarioConfig c;
  c.id = ScenarioId::two;
  c.family = Family(FamilyKind::normal);
  c.tpm.resize(2, 2);
  c.tpm << 0.95, 0.05, 0.05, 0.95;
  c.intercepts = Eigen::Vector2d(1.0, -1.0);
  c.dispersions = Eigen::Vector2d(3.0, 2.0);
  c.truths = {{{"f1_1", [](double x) { return 2.5 * std::sin(x); }},
               {"f2_1", [](double x) { return 1.5 * (1.0 - std::cos(x)); }}},
              {{"f1_2", [](double x) { return 0.8 * x; }}, {"f2_2", [](double x) { return -0.3 * x * x; }}}};
  c.n_obs = 1000;
  c.runs = 200;
  c.lambda_grid = {0.25, 4.0, 64.0, 1024.0, 16384.0};
  return c;
}

ScenarioConfig scenario_three() {
  ScenarioConfig c = scenario_one();
  c.id = ScenarioId::three;
  c.tpm << 0.6, 0.4, 0.4, 0.6;
  return c;
}

ScenarioConfig builtin_scenario(ScenarioId id) {
  switch (id) {
    case ScenarioId::one:
      return scenario_one();
    case ScenarioId::two:
      return scenario_two();
    case ScenarioId::three:
      return scenario_three();
    case ScenarioId::custom:
      break;
  }
  throw InputError("custom scenarios have no built-in configuration");
}

namespace {

std::uint64_t run_seed(std::uint64_t seed, int run, std::uint64_t purpose) {
  return Philox::mix(seed ^ Philox::mix((static_cast<std::uint64_t>(run) << 8) + purpose));
}

std::vector<double> report_grid(const ScenarioConfig& c) {
  std::vector<double> g(static_cast<std::size_t>(c.curve_points));
  for (int k = 0; k < c.curve_points; ++k) {
    g[static_cast<std::size_t>(k)] = c.x_lower + (c.x_upper - c.x_lower) * k / (c.curve_points - 1);
  }
  return g;
}

Eigen::VectorXd truth_on_grid(const TruthCurve& curve, const std::vector<double>& grid) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) v[static_cast<Eigen::Index>(k)] = curve.f(grid[k]);
  return v;
}

Eigen::VectorXd fitted_on_grid(const Term& term, const Eigen::VectorXd& coeffs, const std::vector<double>& grid) {
  const double at_zero = term.eval(coeffs, 0.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) v[static_cast<Eigen::Index>(k)] = term.eval(coeffs, grid[k]) - at_zero;
  return v;
}

}  // namespace

ScenarioSample simulate_scenario(const ScenarioConfig& config, int run) {
  config.validate();
  const int T = config.n_obs;
  const int P = config.n_covariates();
  const int N = config.n_states();
  Philox rng = Philox::for_job(config.seed, static_cast<std::uint64_t>(run), 0xC0);
  std::uniform_real_distribution<double> unif(config.x_lower, config.x_upper);
  Eigen::MatrixXd x(T, P);
  for (int t = 0; t < T; ++t) {
    for (int p = 0; p < P; ++p) x(t, p) = unif(rng);
  }
  ScenarioSample out;
  out.eta.resize(T, N);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) {
      double e = config.intercepts[i];
      for (int p = 0; p < P; ++p) e += config.truths[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)].f(x(t, p));
      out.eta(t, i) = e;
    }
  }
  const Eigen::VectorXd disp = config.family.has_dispersion() ? config.dispersions : Eigen::VectorXd::Ones(N);
  out.series = simulate_from_predictor(config.family, MarkovChain::stationary(config.tpm), out.eta, disp,
                                       run_seed(config.seed, run, 0x51));
  out.series.data.x = std::move(x);
  for (int p = 0; p < P; ++p) out.series.data.covariate_names.push_back("x" + std::to_string(p + 1));
  return out;
}

double mise(const std::vector<double>& grid, const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (grid.size() < 2 || estimate.size() != static_cast<Eigen::Index>(grid.size()) ||
      truth.size() != estimate.size()) {
    throw InputError("mise: estimate, truth and grid must have the same length (at least 2)");
  }
  double total = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(k - 1);
    const auto b = static_cast<Eigen::Index>(k);
    const double da = estimate[a] - truth[a];
    const double db = estimate[b] - truth[b];
    total += 0.5 * (grid[k] - grid[k - 1]) * (da * da + db * db);
  }
  return total;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) {
    s.mean = s.sd = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.count;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
  return s;
}

RunOutcome run_scenario_once(const ScenarioConfig& config, int run) {
  const ScenarioSample sample = simulate_scenario(config, run);
  const TimeSeriesData& data = sample.series.data;
  const int N = config.n_states();
  const int P = config.n_covariates();

  ModelOptions mo;
  mo.family = config.family;
  mo.n_states = N;
  mo.n_basis = config.n_basis;
  mo.penalty_order = config.penalty_order;
  const MSGAMSpec spec = make_spec(data, mo);
  const LambdaGrid grid(spec, config.lambda_grid, config.tie);

  SelectionOptions so;
  so.fit.n_restarts = config.n_restarts;
  so.fit.seed = run_seed(config.seed, run, 0xF1);
  so.execution = Execution::serial;

  RunOutcome out;
  out.run = run;
  FitResult result;
  if (config.method == SelectionMethod::aicp) {
    SelectionResult sel = aicp_select(spec, data, grid, so);
    result = std::move(*sel.best_fit);
  } else {
    const SelectionResult sel = cv_select(spec, data, grid, config.folds, config.calib_fraction,
                                          run_seed(config.seed, run, 0xCF), so);
    FitOptions fo = so.fit;
    fo.compute_edf = false;
    result = fit(spec, data, sel.chosen, fo);
  }
  out.converged = result.converged;
  out.message = result.message;
  if (!out.converged) return out;

  // match estimated states to true states by predictor distance over the grid
  const std::vector<double> g = report_grid(config);
  std::vector<std::vector<Eigen::VectorXd>> truth(static_cast<std::size_t>(N));
  std::vector<std::vector<Eigen::VectorXd>> est(static_cast<std::size_t>(N));
  Eigen::VectorXd est_zero(N);
  for (int i = 0; i < N; ++i) {
    est_zero[i] = result.params.intercepts[i];
    for (int p = 0; p < P; ++p) {
      const Term& term = spec.terms[static_cast<std::size_t>(p)];
      const Eigen::VectorXd& c = result.params.coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
      est_zero[i] += term.eval(c, 0.0);
      truth[static_cast<std::size_t>(i)].push_back(
          truth_on_grid(config.truths[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)], g));
      est[static_cast<std::size_t>(i)].push_back(fitted_on_grid(term, c, g));
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    // perm[true state] = estimated state
    double cost = 0.0;
    for (int i = 0; i < N; ++i) {
      const int e = perm[static_cast<std::size_t>(i)];
      const double shift = est_zero[e] - config.intercepts[i];
      for (int p = 0; p < P; ++p) {
        const Eigen::VectorXd& fe = est[static_cast<std::size_t>(e)][static_cast<std::size_t>(p)];
        const Eigen::VectorXd& ft = truth[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
        cost += mise(g, fe.array() + shift, ft);
      }
    }
    if (cost < best_cost) {
      best_cost = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  out.alignment = best_perm;
  out.params = permute_states(result.params, best_perm);
  out.lambda = permute_states(result.lambda, best_perm);
  out.predictor_at_zero.resize(N);
  out.ise.resize(N, P);
  out.curves.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const int e = best_perm[static_cast<std::size_t>(i)];
    out.predictor_at_zero[i] = est_zero[e];
    for (int p = 0; p < P; ++p) {
      const Eigen::VectorXd& fe = est[static_cast<std::size_t>(e)][static_cast<std::size_t>(p)];
      out.ise(i, p) = mise(g, fe, truth[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)]);
      out.curves[static_cast<std::size_t>(i)].push_back(fe);
    }
  }
  return out;
}

ScenarioReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  const int N = config.n_states();
  const int P = config.n_covariates();
  ScenarioReport report;
  report.id = config.id;
  report.runs = config.runs;
  report.grid = report_grid(config);
  report.outcomes = map_indexed(
      static_cast<std::size_t>(config.runs),
      [&](std::size_t r) {
        try {
          return run_scenario_once(config, static_cast<int>(r));
        } catch (const NumericalError& e) {
          RunOutcome failed;
          failed.run = static_cast<int>(r);
          failed.message = e.what();
          return failed;
        }
      },
      config.execution);

  std::vector<const RunOutcome*> ok;
  for (const RunOutcome& o : report.outcomes) {
    if (o.converged) {
      ok.push_back(&o);
    } else {
      ++report.failures;
    }
  }
  if (2 * report.failures > config.runs) {
    throw NumericalError("scenario " + std::string(scenario_label(config.id)) + ": " +
                         std::to_string(report.failures) + " of " + std::to_string(config.runs) + " runs failed");
  }
  report.mise = Eigen::MatrixXd::Zero(N, P);
  for (const RunOutcome* o : ok) report.mise += o->ise;
  if (!ok.empty()) report.mise /= static_cast<double>(ok.size());

  report.chosen_lambda.assign(static_cast<std::size_t>(N), std::vector<std::vector<double>>(static_cast<std::size_t>(P)));
  for (int i = 0; i < N; ++i) {
    std::vector<double> diag, zero, disp;
    for (const RunOutcome* o : ok) {
      diag.push_back(o->params.chain.tpm(i, i));
      zero.push_back(o->predictor_at_zero[i]);
      disp.push_back(o->params.dispersions[i]);
      for (int p = 0; p < P; ++p) {
        report.chosen_lambda[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)].push_back(o->lambda(i, p));
      }
    }
    report.tpm_diagonal.push_back(summarize(diag));
    report.predictor_at_zero.push_back(summarize(zero));
    report.dispersions.push_back(summarize(disp));
  }
  return report;
}

double one_step_score(const MSGAMSpec& spec, const MSGAMParams& params, const TimeSeriesData& data, int u) {
  if (u < 0 || u >= data.size()) throw InputError("one_step_score: index out of range");
  const TimeSeriesData window = data.head(u + 1);
  if (window.is_missing(u)) return 0.0;
  const Eigen::MatrixXd logd = state_log_densities(spec, params, window);
  const ForwardResult fr = forward_loglik(params.chain, logd, window.missing);
  return fr.log_scale[u];
}

namespace {

ForecastResult forecast_one(const ForecastModel& model, const TimeSeriesData& data, const ForecastOptions& options) {
  const int T = data.size();
  if (options.u_start < 2 || options.u_start > T) {
    throw InputError("forecast: u_start must lie in [2, " + std::to_string(T) + "], got " +
                     std::to_string(options.u_start));
  }
  if (options.stride < 1) throw InputError("forecast: stride must be positive");

  ForecastResult out;
  out.model = model.name;

  FitOptions fo;
  fo.n_restarts = options.n_restarts;
  fo.optimizer = options.optimizer;
  fo.compute_edf = false;
  fo.seed = options.seed;

  // smoothing parameters: chosen once on the first training window
  const TimeSeriesData first = data.head(options.u_start - 1);
  const MSGAMSpec first_spec = make_spec(first, model.options);
  SmoothingVector lambda(first_spec.n_states, first_spec.n_terms(), 0.0);
  std::optional<Eigen::VectorXd> warm;
  if (model.fixed_lambda) {
    lambda = SmoothingVector(first_spec.n_states, first_spec.n_terms(), *model.fixed_lambda);
  } else if (!model.lambda_grid.empty()) {
    SelectionOptions so;
    so.fit = fo;
    so.execution = Execution::serial;
    SelectionResult sel = aicp_select(first_spec, first, LambdaGrid(first_spec, model.lambda_grid, model.tie), so);
    if (sel.best_fit && sel.best_fit->converged) {
      lambda = sel.best_fit->lambda;
      warm = pack(first_spec, sel.best_fit->params);
    } else {
      lambda = sel.chosen;
    }
    out.warnings.insert(out.warnings.end(), sel.warnings.begin(), sel.warnings.end());
  }
  out.lambda = lambda;

  std::optional<MSGAMSpec> spec;
  std::optional<MSGAMParams> params;
  for (int u = options.u_start; u <= T; u += options.stride) {
    const TimeSeriesData train = data.head(u - 1);
    MSGAMSpec s = make_spec(train, model.options);
    FitOptions f = fo;
    f.seed = Philox::mix(options.seed ^ static_cast<std::uint64_t>(u));
    if (params) {
      f.start = pack(s, *params);
      f.n_restarts = 1;
    } else if (warm) {
      f.start = *warm;
    }
    FitResult r = fit(s, train, lambda, f);
    if (!r.converged && f.n_restarts == 1 && options.n_restarts > 1) {
      // a failed warm start gets the full multi-start treatment once
      f.start.reset();
      f.n_restarts = options.n_restarts;
      r = fit(s, train, lambda, f);
    }
    if (r.converged || !params) {
      if (!r.converged) out.warnings.push_back("u = " + std::to_string(u) + ": fit did not converge, used anyway");
      spec = std::move(s);
      params = r.params;
      lambda = r.lambda;
    } else {
      out.warnings.push_back("u = " + std::to_string(u) + ": fit did not converge, previous fit carried forward");
    }
    // score u..block end under this fit; one forward pass, causal in time
    const int last = std::min(T, u + options.stride - 1);
    const TimeSeriesData window = data.head(last);
    const ForwardResult fr =
        forward_loglik(params->chain, state_log_densities(*spec, *params, window), window.missing);
    for (int v = u; v <= last; ++v) {
      const double score = window.is_missing(v - 1) ? 0.0 : fr.log_scale[v - 1];
      out.u.push_back(v);
      out.scores.push_back(score);
    }
  }
  out.total = std::accumulate(out.scores.begin(), out.scores.end(), 0.0);
  return out;
}

}  // namespace

ForecastResult forecast_scores(const ForecastModel& model, const TimeSeriesData& data, const ForecastOptions& options) {
  return forecast_one(model, data, options);
}

std::vector<ForecastResult> compare_forecasts(const std::vector<ForecastModel>& models, const TimeSeriesData& data,
                                              const ForecastOptions& options) {
  if (models.empty()) throw InputError("forecast: no models listed");
  return map_indexed(
      models.size(), [&](std::size_t m) { return forecast_one(models[m], data, options); }, options.execution);
}

ScenarioConfig forecast_study_config() {
  ScenarioConfig c;
  c.family = Family(FamilyKind::gamma, Link::log);
  c.tpm.resize(2, 2);
  c.tpm << 0.95, 0.05, 0.05, 0.95;
  c.intercepts = Eigen::Vector2d(2.5, 3.5);
  c.dispersions = Eigen::Vector2d(8.0, 4.0);
  c.truths = {{{"g_1", [](double x) { return 0.8 * std::sin(1.5 * x); }}},
              {{"g_2", [](double x) { return 0.25 * x * x; }}}};
  c.n_obs = 600;
  c.runs = 10;
  c.lambda_grid = {1.0, 16.0, 256.0, 4096.0};
  return c;
}

ScenarioSample forecast_study_sample(std::uint64_t seed, int n_obs) {
  const ScenarioConfig c = forecast_study_config();
  if (n_obs < 10) throw InputError("forecast study: at least 10 observations are required");
  Philox rng = Philox::for_job(seed, 0, 0xFC);
  std::normal_distribution<double> z(0.0, 1.0);
  constexpr double phi = 0.97;
  const double innovation = 1.2 * std::sqrt(1.0 - phi * phi);
  Eigen::MatrixXd x(n_obs, 1);
  x(0, 0) = 1.2 * z(rng);
  for (int t = 1; t < n_obs; ++t) x(t, 0) = phi * x(t - 1, 0) + innovation * z(rng);
  ScenarioSample out;
  out.eta.resize(n_obs, 2);
  for (int t = 0; t < n_obs; ++t) {
    for (int i = 0; i < 2; ++i) out.eta(t, i) = c.intercepts[i] + c.truths[static_cast<std::size_t>(i)][0].f(x(t, 0));
  }
  out.series = simulate_from_predictor(c.family, MarkovChain::stationary(c.tpm), out.eta, c.dispersions,
                                       Philox::mix(seed ^ 0xFC51ULL));
  out.series.data.x = std::move(x);
  out.series.data.covariate_names = {"x"};
  return out;
}

std::vector<ForecastModel> forecast_study_models(const std::vector<double>& lambda_grid) {
  std::vector<ForecastModel> models;
  for (int states : {1, 2}) {
    for (bool smooth : {false, true}) {
      ForecastModel m;
      m.name = std::string(states == 2 ? "MS-" : "") + (smooth ? "GAM" : "LIN");
      // linear benchmarks have normal responses, smooth models gamma ones
      m.options.family = smooth ? Family(FamilyKind::gamma, Link::log) : Family(FamilyKind::normal);
      m.options.n_states = states;
      m.options.term_kinds = {smooth ? TermKind::smooth : TermKind::linear};
      if (smooth) m.lambda_grid = lambda_grid;
      models.push_back(std::move(m));
    }
  }
  return models;
}

}  // namespace msgam
