#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msgam/bootstrap.hpp"
#include "msgam/experiments.hpp"
#include "msgam/fit.hpp"
#include "msgam/model.hpp"
#include "msgam/smoothing.hpp"

namespace msgam {

/// Header plus raw string cells of a comma-separated file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number of each row in the source
  std::vector<int> lines;

  [[nodiscard]] int column(const std::string& name) const;  ///< -1 when absent
};

/// Throws InputError naming the line of any row whose field count differs
/// from the header's.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest text that reads back to the same double.
std::string format_double(double value);
/// Strict number parsing; throws InputError mentioning `what`.
double parse_double(const std::string& text, const std::string& what);

struct DatasetColumns {
  std::string response = "y";
  /// Empty: every column other than the response and time column.
  std::vector<std::string> covariates;
  std::string time_column;  ///< optional
};

struct Dataset {
  TimeSeriesData data;
  std::vector<long long> time;  ///< time index, 1..T when the file has none
};

/// Empty response fields are missing observations. An empty covariate field
/// stores NaN and marks the row missing. At least 10 rows are required.
/// Without a configured time column, a column named "t" that is not listed as
/// a covariate is taken as the time index.
Dataset parse_dataset(const CsvTable& table, const DatasetColumns& columns);
Dataset read_dataset(const std::filesystem::path& path, const DatasetColumns& columns);
void write_dataset(std::ostream& out, const Dataset& dataset);

struct BootstrapConfig {
  int replicates = 999;
  double level = 0.95;
  int grid_size = 100;
};

struct ForecastModelConfig {
  std::string name;
  std::string family = "normal";
  std::optional<std::string> link;
  int states = 1;
  bool linear = false;  ///< every covariate enters linearly
  std::optional<double> lambda;
  std::vector<double> lambda_grid;
  std::string tie = "none";
};

struct ForecastConfig {
  int u_start = 0;
  int stride = 1;
  std::vector<ForecastModelConfig> models;
};

/// Run configuration file. Unknown keys and ill-typed values are rejected
/// before any computation.
struct RunConfig {
  std::string response = "y";
  std::vector<std::string> covariates;
  std::vector<std::string> linear_covariates;
  std::string time_column;
  std::string family = "normal";
  std::optional<std::string> link;
  int states = 1;
  int K = 15;
  int penalty_order = 2;
  std::string init_mode = "stationary";
  std::optional<double> lambda;
  std::vector<double> lambda_grid;
  std::string tie = "none";
  std::string selection = "aicp";  ///< aicp, cv or none
  int folds = 25;
  double calib_fraction = 0.9;
  std::string fold_mode = "scatter";
  int restarts = 5;
  std::uint64_t seed = 1;
  int max_iterations = 1000;
  /// Built-in scenario for the simulate command.
  std::string scenario;
  std::optional<int> n_obs;
  /// simulate: run the full Monte Carlo study with this many runs.
  std::optional<int> runs;
  BootstrapConfig bootstrap;
  ForecastConfig forecast;

  [[nodiscard]] DatasetColumns columns() const;
  /// Model options for a dataset whose covariates are `names`.
  [[nodiscard]] ModelOptions model_options(const std::vector<std::string>& names) const;
  [[nodiscard]] FitOptions fit_options() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig read_run_config(const std::filesystem::path& path);

/// Fitted model as stored on disk.
struct SavedModel {
  MSGAMSpec spec;
  FitResult fit;
  std::string response_name = "y";
};

/// Self-describing JSON; every double is written in round-trip precision.
std::string model_to_json(const SavedModel& model);
SavedModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const SavedModel& model);
SavedModel load_model(const std::filesystem::path& path);

/// Human-readable fit summary; the t.p.m. is omitted for one state.
void write_fit_summary(std::ostream& out, const SavedModel& model);

/// Columns: method, fold, one lambda_<state>_<term> per entry, score.
void write_score_table(std::ostream& out, const MSGAMSpec& spec, const SelectionResult& selection);
std::vector<ScoreRow> read_score_table(const CsvTable& table, int n_states, int n_terms);

/// Columns: state, covariate, x, estimate, pw_lo, pw_hi, sim_lo, sim_hi
/// (states 1-based).
void write_bands(std::ostream& out, const MSGAMSpec& spec, const BandSet& bands);
/// Curves of a band file (replicates are not stored).
std::vector<BandCurve> read_bands(const CsvTable& table, const MSGAMSpec& spec);

/// Long format: run, state, covariate, x, value.
struct CurveRow {
  int run = 0;
  int state = 0;  ///< 1-based
  std::string covariate;
  double x = 0.0;
  double value = 0.0;
};
void write_curves(std::ostream& out, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curves(const CsvTable& table);
/// Fitted curves of a model on an equidistant grid over each term's domain.
std::vector<CurveRow> model_curves(const MSGAMSpec& spec, const MSGAMParams& params, int grid_size, int run = 0);

/// Columns t, state (1-based states).
void write_states(std::ostream& out, const std::vector<long long>& time, const std::vector<int>& states);

void write_forecast_table(std::ostream& out, const std::vector<ForecastResult>& results);
/// Columns model, u, score.
void write_forecast_trajectory(std::ostream& out, const std::vector<ForecastResult>& results);

/// One row per (state, covariate): MISE; then Monte Carlo summaries.
void write_scenario_report(std::ostream& out, const ScenarioReport& report);

}  // namespace msgam
