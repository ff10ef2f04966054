#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "msgam/bootstrap.hpp"
#include "msgam/error.hpp"
#include "msgam/experiments.hpp"
#include "msgam/fit.hpp"
#include "msgam/io.hpp"
#include "msgam/parallel.hpp"
#include "msgam/smoothing.hpp"

namespace fs = std::filesystem;
using namespace msgam;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct Args {
  std::string config;
  std::string data;
  std::string model;
  std::string scenario;
  std::string out = ".";
  int threads = 0;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

bool g_verbose = false;

void note(const std::string& message) {
  if (g_verbose) std::cerr << "msgam: " << message << '\n';
}

std::ofstream open_file(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  note("writing " + path.string());
  return out;
}

RunConfig load_config(const Args& args, bool required) {
  RunConfig config;
  if (!args.config.empty()) {
    config = read_run_config(args.config);
  } else if (required) {
    throw InputError("--config is required for this command");
  }
  if (args.seed) config.seed = *args.seed;
  return config;
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw InputError(std::string(flag) + " is required for this command");
}

fs::path out_dir(const Args& args) {
  fs::path dir(args.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string());
  return dir;
}

/// Fixed lambda when no grid is configured, otherwise the selection result.
struct Selected {
  SmoothingVector lambda;
  std::optional<SelectionResult> selection;
};

Selected choose_lambda(const RunConfig& config, const MSGAMSpec& spec, const TimeSeriesData& data) {
  Selected out;
  if (config.selection == "none" || config.lambda_grid.empty()) {
    if (!config.lambda) throw InputError("config: set lambda, or lambda_grid with a selection method");
    out.lambda = SmoothingVector(spec.n_states, spec.n_terms(), *config.lambda);
    return out;
  }
  const LambdaGrid grid(spec, config.lambda_grid, parse_tie(config.tie));
  SelectionOptions so;
  so.fit = config.fit_options();
  so.fold_mode = parse_fold_mode(config.fold_mode);
  note("selecting smoothing parameters over " + std::to_string(grid.size()) + " grid points by " + config.selection);
  if (config.selection == "cv") {
    out.selection = cv_select(spec, data, grid, config.folds, config.calib_fraction, config.seed, so);
  } else {
    out.selection = aicp_select(spec, data, grid, so);
  }
  for (const auto& w : out.selection->warnings) note("warning: " + w);
  out.lambda = out.selection->chosen;
  return out;
}

void check_covariates(const SavedModel& model, const Dataset& dataset) {
  if (dataset.data.n_covariates() != model.spec.n_terms()) {
    throw InputError("model has " + std::to_string(model.spec.n_terms()) + " covariates but the data has " +
                     std::to_string(dataset.data.n_covariates()));
  }
}

/// Columns for data scored by a saved model: the model's covariate names.
DatasetColumns model_columns(const SavedModel& model, const RunConfig& config) {
  DatasetColumns c;
  c.response = model.response_name;
  c.time_column = config.time_column;
  for (const Term& t : model.spec.terms) c.covariates.push_back(t.name);
  return c;
}

int cmd_fit(const Args& args) {
  const RunConfig config = load_config(args, true);
  require_path(args.data, "--data");
  const Dataset dataset = read_dataset(args.data, config.columns());
  const MSGAMSpec spec = make_spec(dataset.data, config.model_options(dataset.data.covariate_names));
  const fs::path dir = out_dir(args);

  const Selected sel = choose_lambda(config, spec, dataset.data);
  FitResult result;
  if (sel.selection && sel.selection->best_fit) {
    result = *sel.selection->best_fit;
  } else {
    note("fitting");
    result = fit(spec, dataset.data, sel.lambda, config.fit_options());
  }
  if (sel.selection) {
    auto out = open_file(dir / "scores.csv");
    write_score_table(out, spec, *sel.selection);
  }
  const SavedModel model{spec, result, dataset.data.response_name};
  save_model(dir / "model.json", model);
  {
    auto out = open_file(dir / "summary.txt");
    write_fit_summary(out, model);
  }
  {
    auto out = open_file(dir / "curves.csv");
    write_curves(out, model_curves(spec, result.params, config.bootstrap.grid_size));
  }
  write_fit_summary(std::cout, model);
  if (!result.converged) {
    std::cerr << "msgam: fit did not converge: " << result.message << '\n';
    return kExitNumerical;
  }
  return 0;
}

int cmd_select(const Args& args) {
  RunConfig config = load_config(args, true);
  require_path(args.data, "--data");
  if (config.lambda_grid.empty()) throw InputError("config: lambda_grid is required for select");
  if (config.selection == "none") config.selection = "aicp";
  const Dataset dataset = read_dataset(args.data, config.columns());
  const MSGAMSpec spec = make_spec(dataset.data, config.model_options(dataset.data.covariate_names));
  const Selected sel = choose_lambda(config, spec, dataset.data);
  const fs::path dir = out_dir(args);
  auto out = open_file(dir / "scores.csv");
  write_score_table(out, spec, *sel.selection);
  std::cout << "chosen lambda:";
  for (int i = 0; i < sel.lambda.n_states(); ++i) {
    for (int p = 0; p < sel.lambda.n_terms(); ++p) std::cout << ' ' << format_double(sel.lambda(i, p));
  }
  std::cout << '\n';
  const bool finite = std::any_of(sel.selection->scores.begin(), sel.selection->scores.end(),
                                  [](const ScoreRow& r) { return std::isfinite(r.score); });
  return finite ? 0 : kExitNumerical;
}

void write_truth(const fs::path& path, const ScenarioConfig& sc, int grid_size) {
  std::vector<CurveRow> rows;
  for (int i = 0; i < sc.n_states(); ++i) {
    for (int p = 0; p < sc.n_covariates(); ++p) {
      const TruthCurve& c = sc.truths[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
      for (int g = 0; g < grid_size; ++g) {
        const double x = sc.x_lower + (sc.x_upper - sc.x_lower) * g / (grid_size - 1);
        rows.push_back({0, i + 1, "x" + std::to_string(p + 1), x, c.f(x)});
      }
    }
  }
  auto out = open_file(path);
  write_curves(out, rows);
}

int cmd_simulate(const Args& args) {
  const RunConfig config = load_config(args, false);
  const fs::path dir = out_dir(args);
  const std::string stamp = "seed" + std::to_string(config.seed);

  if (!args.model.empty()) {
    require_path(args.data, "--data");
    const SavedModel model = load_model(args.model);
    const Dataset covariates = read_dataset(args.data, model_columns(model, config));
    check_covariates(model, covariates);
    const SimulatedSeries sim = simulate_series(model.spec, model.fit.params, covariates.data.x, config.seed);
    Dataset out{sim.data, covariates.time};
    auto data_out = open_file(dir / ("simulated_" + stamp + ".csv"));
    write_dataset(data_out, out);
    auto state_out = open_file(dir / ("simulated_" + stamp + "_states.csv"));
    std::vector<int> states = sim.states;
    write_states(state_out, out.time, states);
    return 0;
  }

  const std::string id_text = !args.scenario.empty() ? args.scenario : config.scenario;
  if (id_text.empty()) throw InputError("simulate needs --scenario, a config scenario, or --model with --data");
  ScenarioConfig sc = builtin_scenario(parse_scenario_id(id_text));
  sc.seed = config.seed;
  if (config.n_obs) sc.n_obs = *config.n_obs;
  if (!config.lambda_grid.empty()) sc.lambda_grid = config.lambda_grid;
  sc.n_restarts = config.restarts;
  const std::string base = "scenario_" + std::string(scenario_label(sc.id)) + "_" + stamp;

  if (config.runs) {
    sc.runs = *config.runs;
    note("running " + std::to_string(sc.runs) + " simulation runs");
    const ScenarioReport report = run_scenario(sc);
    {
      auto out = open_file(dir / (base + "_report.csv"));
      write_scenario_report(out, report);
    }
    std::vector<CurveRow> rows;
    for (const RunOutcome& o : report.outcomes) {
      if (!o.converged) continue;
      for (std::size_t i = 0; i < o.curves.size(); ++i) {
        for (std::size_t p = 0; p < o.curves[i].size(); ++p) {
          for (std::size_t g = 0; g < report.grid.size(); ++g) {
            rows.push_back({o.run + 1, static_cast<int>(i) + 1, "x" + std::to_string(p + 1), report.grid[g],
                            o.curves[i][p][static_cast<Eigen::Index>(g)]});
          }
        }
      }
    }
    {
      auto out = open_file(dir / (base + "_curves.csv"));
      write_curves(out, rows);
    }
    write_truth(dir / (base + "_truth.csv"), sc, sc.curve_points);
    write_scenario_report(std::cout, report);
    return report.failures > 0 ? kExitNumerical : 0;
  }

  const ScenarioSample sample = simulate_scenario(sc, 0);
  Dataset out{sample.series.data, {}};
  {
    auto data_out = open_file(dir / (base + ".csv"));
    write_dataset(data_out, out);
  }
  {
    auto state_out = open_file(dir / (base + "_states.csv"));
    write_states(state_out, {}, sample.series.states);
  }
  write_truth(dir / (base + "_truth.csv"), sc, sc.curve_points);
  return 0;
}

int cmd_decode(const Args& args) {
  const RunConfig config = load_config(args, false);
  require_path(args.model, "--model");
  require_path(args.data, "--data");
  const SavedModel model = load_model(args.model);
  const Dataset dataset = read_dataset(args.data, model_columns(model, config));
  check_covariates(model, dataset);
  validate_response(model.spec.family, dataset.data);
  const Eigen::MatrixXd logd = state_log_densities(model.spec, model.fit.params, dataset.data);
  const std::vector<int> states = viterbi_decode(model.fit.params.chain, logd, dataset.data.missing);
  const fs::path dir = out_dir(args);
  auto out = open_file(dir / "states.csv");
  write_states(out, dataset.time, states);
  return 0;
}

int cmd_bands(const Args& args) {
  const RunConfig config = load_config(args, false);
  require_path(args.model, "--model");
  require_path(args.data, "--data");
  const SavedModel model = load_model(args.model);
  const Dataset dataset = read_dataset(args.data, model_columns(model, config));
  check_covariates(model, dataset);
  BootstrapOptions bo;
  bo.replicates = config.bootstrap.replicates;
  bo.level = config.bootstrap.level;
  bo.grid_size = config.bootstrap.grid_size;
  bo.seed = config.seed;
  note("bootstrapping " + std::to_string(bo.replicates) + " replicates");
  const BandSet bands = bootstrap_bands(model.spec, model.fit, dataset.data, model.fit.lambda, bo);
  if (bands.failures > 0) note(std::to_string(bands.failures) + " replicate fits failed and were excluded");
  const fs::path dir = out_dir(args);
  auto out = open_file(dir / "bands.csv");
  write_bands(out, model.spec, bands);
  return 0;
}

int cmd_forecast(const Args& args) {
  const RunConfig config = load_config(args, true);
  require_path(args.data, "--data");
  if (config.forecast.models.empty()) throw InputError("config: forecast.models must list at least one model");
  const Dataset dataset = read_dataset(args.data, config.columns());
  const int T = dataset.data.size();
  if (config.forecast.u_start < 2 || config.forecast.u_start > T) {
    throw InputError("forecast.u_start must lie in [2, " + std::to_string(T) + "]");
  }
  std::vector<ForecastModel> models;
  for (const ForecastModelConfig& m : config.forecast.models) {
    ForecastModel fm;
    fm.name = m.name;
    fm.options.family = m.link ? Family(parse_family(m.family), parse_link(*m.link)) : Family(parse_family(m.family));
    fm.options.n_states = m.states;
    fm.options.n_basis = config.K;
    fm.options.penalty_order = config.penalty_order;
    fm.options.init_mode = parse_init_mode(config.init_mode);
    fm.options.term_kinds.assign(static_cast<std::size_t>(dataset.data.n_covariates()),
                                 m.linear ? TermKind::linear : TermKind::smooth);
    fm.fixed_lambda = m.lambda;
    fm.lambda_grid = m.lambda_grid;
    fm.tie = parse_tie(m.tie);
    if (!m.linear && !fm.fixed_lambda && fm.lambda_grid.empty()) {
      throw InputError("forecast model " + m.name + ": set lambda or lambda_grid");
    }
    models.push_back(std::move(fm));
  }
  ForecastOptions fo;
  fo.u_start = config.forecast.u_start;
  fo.stride = config.forecast.stride;
  fo.n_restarts = config.restarts;
  fo.seed = config.seed;
  fo.optimizer.max_iterations = config.max_iterations;
  note("scoring " + std::to_string(models.size()) + " models");
  const std::vector<ForecastResult> results = compare_forecasts(models, dataset.data, fo);
  const fs::path dir = out_dir(args);
  {
    auto out = open_file(dir / "forecast.csv");
    write_forecast_table(out, results);
  }
  {
    auto out = open_file(dir / "forecast_trajectory.csv");
    write_forecast_trajectory(out, results);
  }
  write_forecast_table(std::cout, results);
  for (const auto& r : results) {
    for (const auto& w : r.warnings) note(r.model + ": " + w);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov-switching generalized additive models"};
  app.require_subcommand(1);
  Args args;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "run configuration (JSON)");
    sub->add_option("--data", args.data, "dataset (CSV)");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--threads", args.threads, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", args.seed, "overrides the config seed");
    sub->add_flag("--verbose", args.verbose, "progress messages on stderr");
  };
  std::function<int(const Args&)> handler;
  auto add = [&](const char* name, const char* help, int (*fn)(const Args&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    sub->callback([&handler, fn] { handler = fn; });
    return sub;
  };
  add("fit", "fit a model, selecting smoothing parameters when a grid is given", cmd_fit);
  add("select", "smoothing parameter selection only; writes the score table", cmd_select);
  CLI::App* sim = add("simulate", "simulate a built-in scenario or from a fitted model", cmd_simulate);
  sim->add_option("--scenario", args.scenario, "I, II or III");
  sim->add_option("--model", args.model, "fitted model file");
  add("decode", "Viterbi state sequence", cmd_decode)->add_option("--model", args.model, "fitted model file");
  add("bands", "parametric bootstrap confidence bands", cmd_bands)->add_option("--model", args.model, "fitted model file");
  add("forecast", "rolling one-step-ahead forecast scores", cmd_forecast);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  g_verbose = args.verbose;
  set_thread_count(args.threads);
  try {
    return handler(args);
  } catch (const InputError& e) {
    std::cerr << "msgam: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "msgam: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "msgam: " << e.what() << '\n';
    return kExitInput;
  }
}
