#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "msgam/bootstrap.hpp"
#include "msgam/fit.hpp"
#include "msgam/model.hpp"
#include "msgam/parallel.hpp"
#include "msgam/smoothing.hpp"

namespace msgam {

/// A named true curve on the raw covariate scale.
struct TruthCurve {
  std::string label;
  std::function<double(double)> f;
};

enum class ScenarioId { one, two, three, custom };
ScenarioId parse_scenario_id(std::string_view name);
std::string_view scenario_label(ScenarioId id);

struct ScenarioConfig {
  ScenarioId id = ScenarioId::custom;
  Family family{FamilyKind::poisson};
  Eigen::MatrixXd tpm;
  Eigen::VectorXd intercepts;
  Eigen::VectorXd dispersions;  ///< ignored for Poisson
  /// truths[state][covariate]
  std::vector<std::vector<TruthCurve>> truths;
  int n_obs = 300;
  int runs = 200;
  double x_lower = -3.0;
  double x_upper = 3.0;
  int n_basis = 15;
  int penalty_order = 2;
  std::vector<double> lambda_grid;
  Tie tie = Tie::none;
  SelectionMethod method = SelectionMethod::aicp;
  int folds = 25;
  double calib_fraction = 0.9;
  int n_restarts = 5;
  int curve_points = 200;
  std::uint64_t seed = 1;
  Execution execution = Execution::parallel;

  [[nodiscard]] int n_states() const noexcept { return static_cast<int>(tpm.rows()); }
  [[nodiscard]] int n_covariates() const noexcept {
    return truths.empty() ? 0 : static_cast<int>(truths.front().size());
  }
  /// Throws InputError on inconsistent dimensions.
  void validate() const;
};

/// Poisson, two states, one covariate, T = 300.
ScenarioConfig scenario_one();
/// Normal, two states, two covariates, T = 1000; f_1 in state 2 is linear.
ScenarioConfig scenario_two();
/// Scenario one with a weakly persistent chain (diagonal 0.6).
ScenarioConfig scenario_three();
ScenarioConfig builtin_scenario(ScenarioId id);

/// Data of one run plus the true states and predictors.
struct ScenarioSample {
  SimulatedSeries series;
  Eigen::MatrixXd eta;  ///< T x N true predictors
};

/// Simulated dataset of run `run`: covariates uniform on [x_lower, x_upper].
ScenarioSample simulate_scenario(const ScenarioConfig& config, int run);

/// Trapezoidal integral of (estimate - truth)^2 over the grid.
double mise(const std::vector<double>& grid, const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

struct RunOutcome {
  int run = 0;
  bool converged = false;
  std::string message;
  /// Estimated state i corresponds to true state alignment[i] before
  /// relabelling; everything below is in the true labelling.
  std::vector<int> alignment;
  MSGAMParams params;
  SmoothingVector lambda;
  Eigen::VectorXd predictor_at_zero;
  /// curves[state][covariate] on the report grid, through the origin
  std::vector<std::vector<Eigen::VectorXd>> curves;
  Eigen::MatrixXd ise;  ///< N x P integrated squared errors
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  ///< Monte Carlo (n - 1) standard deviation
  int count = 0;
};
Summary summarize(const std::vector<double>& values);

struct ScenarioReport {
  ScenarioId id = ScenarioId::custom;
  int runs = 0;
  int failures = 0;
  std::vector<double> grid;
  std::vector<RunOutcome> outcomes;
  Eigen::MatrixXd mise;  ///< N x P, over converged runs
  std::vector<Summary> tpm_diagonal;
  std::vector<Summary> predictor_at_zero;
  std::vector<Summary> dispersions;
  /// selected lambda per converged run, [state][covariate][run]
  std::vector<std::vector<std::vector<double>>> chosen_lambda;
};

/// Simulate, select lambda, fit and score every run. Failed runs are counted;
/// more than half failing throws NumericalError.
ScenarioReport run_scenario(const ScenarioConfig& config);

/// One run of a scenario (exposed for tests and benchmarks).
RunOutcome run_scenario_once(const ScenarioConfig& config, int run);

/// Candidate model for rolling one-step-ahead scoring.
struct ForecastModel {
  std::string name;
  ModelOptions options;
  /// Used when set; otherwise lambda is chosen by AIC_p on the first window.
  std::optional<double> fixed_lambda;
  std::vector<double> lambda_grid;
  Tie tie = Tie::none;
};

struct ForecastOptions {
  int u_start = 0;  ///< 1-based first scored observation
  int stride = 1;
  int n_restarts = 5;
  std::uint64_t seed = 1;
  OptimizerOptions optimizer{};
  Execution execution = Execution::parallel;
};

struct ForecastResult {
  std::string model;
  std::vector<int> u;  ///< 1-based
  std::vector<double> scores;
  double total = 0.0;
  SmoothingVector lambda;
  std::vector<std::string> warnings;
};

/// Log one-step predictive density of observation `u` (0-based) given the
/// preceding observations. Reads nothing at or beyond u except y_u itself.
double one_step_score(const MSGAMSpec& spec, const MSGAMParams& params, const TimeSeriesData& data, int u);

/// Rolling forecast evaluation of one model.
ForecastResult forecast_scores(const ForecastModel& model, const TimeSeriesData& data, const ForecastOptions& options);

/// Several models; compared in parallel.
std::vector<ForecastResult> compare_forecasts(const std::vector<ForecastModel>& models, const TimeSeriesData& data,
                                              const ForecastOptions& options);

/// Synthetic two-regime series for forecast comparisons: Gamma responses
/// (log link, state-dependent shape), one persistent AR(1) covariate and
/// nonlinear state-dependent effects.
ScenarioConfig forecast_study_config();
ScenarioSample forecast_study_sample(std::uint64_t seed, int n_obs = 600);

/// LIN, GAM, MS-LIN and MS-GAM: the linear models with normal responses, the
/// smooth ones with gamma responses and a log link.
std::vector<ForecastModel> forecast_study_models(const std::vector<double>& lambda_grid);

}  // namespace msgam
