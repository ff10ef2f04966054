#include "msgam/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "msgam/error.hpp"

namespace msgam {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw InputError("row " + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                       " fields, found " + std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.lines.push_back(line_no);
  }
  if (table.header.empty()) throw InputError("CSV input is empty");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_csv(in);
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t.front() == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw InputError(what + ": cannot parse '" + t + "' as a number");
  }
  return v;
}

// ---- datasets ----

Dataset parse_dataset(const CsvTable& table, const DatasetColumns& columns) {
  const int y_col = table.column(columns.response);
  if (y_col < 0) throw InputError("response column '" + columns.response + "' not found");
  int time_col = -1;
  std::string time_name = columns.time_column;
  if (!time_name.empty()) {
    time_col = table.column(time_name);
    if (time_col < 0) throw InputError("time column '" + time_name + "' not found");
  } else if (table.column("t") >= 0 && table.column("t") != y_col &&
             std::find(columns.covariates.begin(), columns.covariates.end(), "t") == columns.covariates.end()) {
    // files written by this tool carry their time index in a column "t"
    time_name = "t";
    time_col = table.column(time_name);
  }
  std::vector<int> x_cols;
  std::vector<std::string> names = columns.covariates;
  if (names.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (static_cast<int>(c) != y_col && static_cast<int>(c) != time_col) names.push_back(table.header[c]);
    }
  }
  for (const std::string& name : names) {
    const int c = table.column(name);
    if (c < 0) throw InputError("covariate column '" + name + "' not found");
    x_cols.push_back(c);
  }
  const auto T = static_cast<int>(table.rows.size());
  if (T < 10) throw InputError("dataset has " + std::to_string(T) + " rows; at least 10 are required");

  Dataset out;
  out.data.response_name = columns.response;
  out.data.covariate_names = names;
  out.data.y.assign(static_cast<std::size_t>(T), 0.0);
  out.data.missing.assign(static_cast<std::size_t>(T), 0);
  out.data.x.resize(T, static_cast<Eigen::Index>(x_cols.size()));
  out.time.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    const std::string where = "row " + std::to_string(table.lines[static_cast<std::size_t>(t)]);
    const auto s = static_cast<std::size_t>(t);
    if (row[static_cast<std::size_t>(y_col)].empty()) {
      out.data.missing[s] = 1;
    } else {
      out.data.y[s] = parse_double(row[static_cast<std::size_t>(y_col)], where + ", column " + columns.response);
      if (!std::isfinite(out.data.y[s])) throw InputError(where + ": response is not finite");
    }
    for (std::size_t p = 0; p < x_cols.size(); ++p) {
      const std::string& cell = row[static_cast<std::size_t>(x_cols[p])];
      if (cell.empty()) {
        out.data.x(t, static_cast<Eigen::Index>(p)) = std::numeric_limits<double>::quiet_NaN();
        out.data.missing[s] = 1;
      } else {
        out.data.x(t, static_cast<Eigen::Index>(p)) = parse_double(cell, where + ", column " + names[p]);
      }
    }
    if (time_col >= 0) {
      const double v = parse_double(row[static_cast<std::size_t>(time_col)], where + ", column " + time_name);
      if (v != std::floor(v)) throw InputError(where + ": time index must be an integer");
      out.time[s] = static_cast<long long>(v);
      if (t > 0 && out.time[s] <= out.time[s - 1]) throw InputError(where + ": time index must increase");
    } else {
      out.time[s] = t + 1;
    }
  }
  return out;
}

Dataset read_dataset(const std::filesystem::path& path, const DatasetColumns& columns) {
  return parse_dataset(read_csv(path), columns);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  const TimeSeriesData& d = dataset.data;
  out << "t," << d.response_name;
  for (const auto& n : d.covariate_names) out << ',' << n;
  out << '\n';
  for (int t = 0; t < d.size(); ++t) {
    const auto s = static_cast<std::size_t>(t);
    out << (dataset.time.empty() ? t + 1 : dataset.time[s]) << ',';
    if (!d.is_missing(t)) out << format_double(d.y[s]);
    for (int p = 0; p < d.n_covariates(); ++p) {
      out << ',';
      if (std::isfinite(d.x(t, p))) out << format_double(d.x(t, p));
    }
    out << '\n';
  }
}

// ---- run configuration ----

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw InputError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read_key(const json& j, const char* key, T& target, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + ": key '" + key + "' has the wrong type");
  }
}

template <class T>
void read_key(const json& j, const char* key, std::optional<T>& target, const std::string& where) {
  if (!j.contains(key)) return;
  T v{};
  read_key(j, key, v, where);
  target = v;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InputError("config: " + message);
}

ForecastModelConfig parse_forecast_model(const json& j, std::size_t index) {
  const std::string where = "config forecast.models[" + std::to_string(index) + "]";
  if (!j.is_object()) throw InputError(where + ": must be an object");
  reject_unknown(j, {"name", "family", "link", "states", "linear", "lambda", "lambda_grid", "tie"}, where);
  ForecastModelConfig m;
  read_key(j, "name", m.name, where);
  read_key(j, "family", m.family, where);
  read_key(j, "link", m.link, where);
  read_key(j, "states", m.states, where);
  read_key(j, "linear", m.linear, where);
  read_key(j, "lambda", m.lambda, where);
  read_key(j, "lambda_grid", m.lambda_grid, where);
  read_key(j, "tie", m.tie, where);
  if (m.name.empty()) m.name = "model" + std::to_string(index + 1);
  require(m.states >= 1, m.name + ": states must be at least 1");
  parse_family(m.family);
  if (m.link) parse_link(*m.link);
  parse_tie(m.tie);
  return m;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("config must be a JSON object");
  const std::string where = "config";
  reject_unknown(j,
                 {"response", "covariates", "linear_covariates", "time_column", "family", "link", "states", "K",
                  "penalty_order", "init_mode", "lambda", "lambda_grid", "tie", "selection", "folds",
                  "calib_fraction", "fold_mode", "restarts", "seed", "max_iterations", "scenario", "n_obs", "runs",
                  "bootstrap", "forecast"},
                 where);
  RunConfig c;
  read_key(j, "response", c.response, where);
  read_key(j, "covariates", c.covariates, where);
  read_key(j, "linear_covariates", c.linear_covariates, where);
  read_key(j, "time_column", c.time_column, where);
  read_key(j, "family", c.family, where);
  read_key(j, "link", c.link, where);
  read_key(j, "states", c.states, where);
  read_key(j, "K", c.K, where);
  read_key(j, "penalty_order", c.penalty_order, where);
  read_key(j, "init_mode", c.init_mode, where);
  read_key(j, "lambda", c.lambda, where);
  read_key(j, "lambda_grid", c.lambda_grid, where);
  read_key(j, "tie", c.tie, where);
  read_key(j, "selection", c.selection, where);
  read_key(j, "folds", c.folds, where);
  read_key(j, "calib_fraction", c.calib_fraction, where);
  read_key(j, "fold_mode", c.fold_mode, where);
  read_key(j, "restarts", c.restarts, where);
  read_key(j, "seed", c.seed, where);
  read_key(j, "max_iterations", c.max_iterations, where);
  read_key(j, "scenario", c.scenario, where);
  read_key(j, "n_obs", c.n_obs, where);
  read_key(j, "runs", c.runs, where);
  if (j.contains("bootstrap")) {
    const json& b = j.at("bootstrap");
    if (!b.is_object()) throw InputError("config bootstrap: must be an object");
    reject_unknown(b, {"B", "level", "grid_size"}, "config bootstrap");
    read_key(b, "B", c.bootstrap.replicates, "config bootstrap");
    read_key(b, "level", c.bootstrap.level, "config bootstrap");
    read_key(b, "grid_size", c.bootstrap.grid_size, "config bootstrap");
  }
  if (j.contains("forecast")) {
    const json& f = j.at("forecast");
    if (!f.is_object()) throw InputError("config forecast: must be an object");
    reject_unknown(f, {"u_start", "stride", "models"}, "config forecast");
    read_key(f, "u_start", c.forecast.u_start, "config forecast");
    read_key(f, "stride", c.forecast.stride, "config forecast");
    if (f.contains("models")) {
      if (!f.at("models").is_array()) throw InputError("config forecast: models must be an array");
      for (std::size_t k = 0; k < f.at("models").size(); ++k) {
        c.forecast.models.push_back(parse_forecast_model(f.at("models")[k], k));
      }
    }
  }

  // value checks
  parse_family(c.family);
  if (c.link) Family(parse_family(c.family), parse_link(*c.link));
  parse_init_mode(c.init_mode);
  parse_tie(c.tie);
  parse_fold_mode(c.fold_mode);
  require(c.selection == "aicp" || c.selection == "cv" || c.selection == "none",
          "selection must be aicp, cv or none");
  require(c.states >= 1, "states must be at least 1");
  require(c.K >= 5 && c.K % 2 == 1, "K must be odd and at least 5");
  require(c.penalty_order >= 1 && c.penalty_order < c.K, "penalty_order must lie in [1, K - 1]");
  require(!c.lambda || *c.lambda >= 0.0, "lambda must be non-negative");
  for (double v : c.lambda_grid) require(v >= 0.0, "lambda_grid entries must be non-negative");
  require(c.folds >= 2, "folds must be at least 2");
  require(c.calib_fraction > 0.5 && c.calib_fraction < 1.0, "calib_fraction must lie in (0.5, 1)");
  require(c.restarts >= 1, "restarts must be at least 1");
  require(c.max_iterations >= 1, "max_iterations must be at least 1");
  require(c.bootstrap.replicates >= 1, "bootstrap.B must be at least 1");
  require(c.bootstrap.level > 0.0 && c.bootstrap.level < 1.0, "bootstrap.level must lie in (0, 1)");
  require(c.bootstrap.grid_size >= 2, "bootstrap.grid_size must be at least 2");
  require(c.forecast.stride >= 1, "forecast.stride must be at least 1");
  if (!c.scenario.empty()) parse_scenario_id(c.scenario);
  require(!c.n_obs || *c.n_obs >= 10, "n_obs must be at least 10");
  require(!c.runs || *c.runs >= 1, "runs must be at least 1");
  for (const auto& name : c.linear_covariates) {
    require(c.covariates.empty() || std::find(c.covariates.begin(), c.covariates.end(), name) != c.covariates.end(),
            "linear covariate '" + name + "' is not among the covariates");
  }
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path) { return parse_run_config(slurp(path)); }

DatasetColumns RunConfig::columns() const { return {response, covariates, time_column}; }

ModelOptions RunConfig::model_options(const std::vector<std::string>& names) const {
  ModelOptions o;
  o.family = link ? Family(parse_family(family), parse_link(*link)) : Family(parse_family(family));
  o.n_states = states;
  o.n_basis = K;
  o.penalty_order = penalty_order;
  o.init_mode = parse_init_mode(init_mode);
  for (const auto& name : linear_covariates) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw InputError("config: linear covariate '" + name + "' is not in the dataset");
    }
  }
  for (const auto& name : names) {
    const bool linear = std::find(linear_covariates.begin(), linear_covariates.end(), name) != linear_covariates.end();
    o.term_kinds.push_back(linear ? TermKind::linear : TermKind::smooth);
  }
  return o;
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.n_restarts = restarts;
  o.seed = seed;
  o.optimizer.max_iterations = max_iterations;
  return o;
}

// ---- models ----

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd json_mat(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd r = json_vec(j[i]);
    if (r.size() != cols) throw InputError("model file: ragged matrix");
    m.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return m;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string model_to_json(const SavedModel& model) {
  const MSGAMSpec& spec = model.spec;
  const FitResult& f = model.fit;
  json terms = json::array();
  for (const Term& t : spec.terms) {
    json term = {{"name", t.name},
                 {"kind", t.kind == TermKind::smooth ? "smooth" : "linear"},
                 {"standardizer", {{"mean", t.standardizer.mean}, {"sd", t.standardizer.sd}}}};
    if (t.kind == TermKind::smooth) {
      term["basis"] = {{"n_basis", t.basis.n_basis()},
                       {"degree", SplineBasisSpec::degree()},
                       {"lower", t.basis.lower()},
                       {"upper", t.basis.upper()},
                       {"knots", t.basis.knots()}};
    }
    terms.push_back(term);
  }
  json coeffs = json::array();
  for (const auto& state : f.params.coeffs) {
    json row = json::array();
    for (const auto& c : state) row.push_back(vec_json(c));
    coeffs.push_back(row);
  }
  json j = {
      {"format", "msgam-model"},
      {"version", 1},
      {"response", model.response_name},
      {"spec",
       {{"family", spec.family.name()},
        {"link", std::string(spec.family.link_name())},
        {"n_states", spec.n_states},
        {"n_covariates", spec.n_terms()},
        {"init_mode", std::string(init_mode_name(spec.init_mode))},
        {"penalty_order", spec.penalty_order},
        {"terms", terms}}},
      {"params",
       {{"intercepts", vec_json(f.params.intercepts)},
        {"coefficients", coeffs},
        {"dispersions", vec_json(f.params.dispersions)},
        {"tpm", mat_json(f.params.chain.tpm)},
        {"initial", vec_json(f.params.chain.init)}}},
      {"lambda", mat_json(f.lambda.values())},
      {"diagnostics",
       {{"loglik", number_or_null(f.loglik_unpenalized)},
        {"loglik_penalized", number_or_null(f.loglik_penalized)},
        {"edf", number_or_null(f.edf)},
        {"aic_p", number_or_null(f.aic_p())},
        {"converged", f.converged},
        {"restarts", f.n_restarts_used},
        {"iterations", f.optimizer_iterations},
        {"message", f.message},
        {"state_order", f.state_order},
        {"raw_packed", vec_json(f.raw_packed)}}}};
  return j.dump(2) + "\n";
}

SavedModel model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "msgam-model") throw InputError("not an msgam model file");
    SavedModel m;
    m.response_name = j.value("response", "y");
    const json& s = j.at("spec");
    m.spec.family = Family(parse_family(s.at("family").get<std::string>()), parse_link(s.at("link").get<std::string>()));
    m.spec.n_states = s.at("n_states").get<int>();
    m.spec.init_mode = parse_init_mode(s.at("init_mode").get<std::string>());
    m.spec.penalty_order = s.at("penalty_order").get<int>();
    for (const json& t : s.at("terms")) {
      Term term;
      term.name = t.at("name").get<std::string>();
      term.kind = t.at("kind").get<std::string>() == "linear" ? TermKind::linear : TermKind::smooth;
      term.standardizer.mean = t.at("standardizer").at("mean").get<double>();
      term.standardizer.sd = t.at("standardizer").at("sd").get<double>();
      if (term.kind == TermKind::smooth) {
        const json& b = t.at("basis");
        term.basis = build_basis(b.at("n_basis").get<int>(), b.at("lower").get<double>(), b.at("upper").get<double>());
        if (b.contains("knots") && b.at("knots").get<std::vector<double>>() != term.basis.knots()) {
          throw InputError("model file: knots of '" + term.name + "' do not match its basis domain");
        }
      }
      m.spec.terms.push_back(std::move(term));
    }
    const int n = m.spec.n_states;
    const json& p = j.at("params");
    FitResult& f = m.fit;
    f.params.intercepts = json_vec(p.at("intercepts"));
    f.params.dispersions = json_vec(p.at("dispersions"));
    f.params.chain.tpm = json_mat(p.at("tpm"), n);
    f.params.chain.init = json_vec(p.at("initial"));
    f.params.chain.init_mode = m.spec.init_mode;
    const json& coeffs = p.at("coefficients");
    if (static_cast<int>(coeffs.size()) != n || f.params.intercepts.size() != n) {
      throw InputError("model file: state count mismatch");
    }
    for (const json& state : coeffs) {
      std::vector<Eigen::VectorXd> blocks;
      for (const json& c : state) blocks.push_back(json_vec(c));
      if (static_cast<int>(blocks.size()) != m.spec.n_terms()) throw InputError("model file: term count mismatch");
      for (int k = 0; k < m.spec.n_terms(); ++k) {
        if (blocks[static_cast<std::size_t>(k)].size() != m.spec.terms[static_cast<std::size_t>(k)].n_coeffs()) {
          throw InputError("model file: coefficient count mismatch for '" +
                           m.spec.terms[static_cast<std::size_t>(k)].name + "'");
        }
      }
      f.params.coeffs.push_back(std::move(blocks));
    }
    f.params.chain.validate();
    f.lambda = SmoothingVector(json_mat(j.at("lambda"), m.spec.n_terms()));
    const json& d = j.at("diagnostics");
    auto num = [&](const char* key) {
      return d.at(key).is_null() ? std::numeric_limits<double>::quiet_NaN() : d.at(key).get<double>();
    };
    f.loglik_unpenalized = num("loglik");
    f.loglik_penalized = num("loglik_penalized");
    f.edf = num("edf");
    f.converged = d.at("converged").get<bool>();
    f.n_restarts_used = d.at("restarts").get<int>();
    f.optimizer_iterations = d.at("iterations").get<int>();
    f.message = d.at("message").get<std::string>();
    f.state_order = d.at("state_order").get<std::vector<int>>();
    f.raw_packed = json_vec(d.at("raw_packed"));
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("model file is malformed: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const SavedModel& model) {
  std::ofstream out = open_out(path);
  out << model_to_json(model);
}

SavedModel load_model(const std::filesystem::path& path) { return model_from_json(slurp(path)); }

void write_fit_summary(std::ostream& out, const SavedModel& model) {
  const MSGAMSpec& spec = model.spec;
  const FitResult& f = model.fit;
  out << std::setprecision(6);
  out << "family: " << spec.family.name() << " (" << spec.family.link_name() << " link)\n";
  out << "states: " << spec.n_states << "\n";
  out << "converged: " << (f.converged ? "true" : "false");
  if (!f.converged) out << "  [" << f.message << "]";
  out << "\n";
  out << "log-likelihood: " << f.loglik_unpenalized << "\n";
  out << "penalized log-likelihood: " << f.loglik_penalized << "\n";
  out << "effective degrees of freedom: " << f.edf << "\n";
  out << "AIC_p: " << f.aic_p() << "\n";
  out << "intercepts:";
  for (Eigen::Index i = 0; i < f.params.intercepts.size(); ++i) out << ' ' << f.params.intercepts[i];
  out << "\n";
  if (spec.family.has_dispersion()) {
    out << (spec.family.kind() == FamilyKind::normal ? "sigma:" : "shape:");
    for (Eigen::Index i = 0; i < f.params.dispersions.size(); ++i) out << ' ' << f.params.dispersions[i];
    out << "\n";
  }
  out << "lambda:\n";
  for (int i = 0; i < f.lambda.n_states(); ++i) {
    out << "  state " << i + 1 << ":";
    for (int p = 0; p < f.lambda.n_terms(); ++p) {
      out << ' ' << spec.terms[static_cast<std::size_t>(p)].name << '=' << f.lambda(i, p);
    }
    out << "\n";
  }
  if (spec.n_states > 1) {
    out << "transition probability matrix:\n";
    for (int i = 0; i < spec.n_states; ++i) {
      out << ' ';
      for (int k = 0; k < spec.n_states; ++k) out << ' ' << f.params.chain.tpm(i, k);
      out << "\n";
    }
    out << "initial distribution:";
    for (int i = 0; i < spec.n_states; ++i) out << ' ' << f.params.chain.init[i];
    out << "\n";
  }
}

// ---- tables ----

void write_score_table(std::ostream& out, const MSGAMSpec& spec, const SelectionResult& selection) {
  out << "method,fold";
  for (int i = 0; i < spec.n_states; ++i) {
    for (const Term& t : spec.terms) out << ",lambda_" << i + 1 << '_' << t.name;
  }
  out << ",score\n";
  auto row = [&](const ScoreRow& r) {
    out << method_name(selection.method) << ',' << (r.fold < 0 ? std::string("-") : std::to_string(r.fold + 1));
    for (int i = 0; i < r.lambda.n_states(); ++i) {
      for (int p = 0; p < r.lambda.n_terms(); ++p) out << ',' << format_double(r.lambda(i, p));
    }
    out << ',' << format_double(r.score) << '\n';
  };
  for (const ScoreRow& r : selection.scores) row(r);
  for (const ScoreRow& r : selection.fold_scores) row(r);
}

std::vector<ScoreRow> read_score_table(const CsvTable& table, int n_states, int n_terms) {
  if (static_cast<int>(table.header.size()) != 3 + n_states * n_terms) {
    throw InputError("score table has an unexpected number of columns");
  }
  std::vector<ScoreRow> rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    ScoreRow row;
    row.point = r;
    row.fold = cells[1] == "-" ? -1 : static_cast<int>(parse_double(cells[1], "fold")) - 1;
    row.lambda = SmoothingVector(n_states, n_terms);
    std::size_t c = 2;
    for (int i = 0; i < n_states; ++i) {
      for (int p = 0; p < n_terms; ++p) row.lambda(i, p) = parse_double(cells[c++], "lambda");
    }
    row.score = parse_double(cells[c], "score");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_bands(std::ostream& out, const MSGAMSpec& spec, const BandSet& bands) {
  out << "state,covariate,x,estimate,pw_lo,pw_hi,sim_lo,sim_hi\n";
  for (const BandCurve& c : bands.curves) {
    const std::string& name = spec.terms[static_cast<std::size_t>(c.term)].name;
    for (std::size_t g = 0; g < c.x.size(); ++g) {
      const auto k = static_cast<Eigen::Index>(g);
      out << c.state + 1 << ',' << name << ',' << format_double(c.x[g]) << ',' << format_double(c.estimate[k]) << ','
          << format_double(c.pointwise_lower[k]) << ',' << format_double(c.pointwise_upper[k]) << ','
          << format_double(c.simultaneous_lower[k]) << ',' << format_double(c.simultaneous_upper[k]) << '\n';
    }
  }
}

std::vector<BandCurve> read_bands(const CsvTable& table, const MSGAMSpec& spec) {
  const std::vector<std::string> expected{"state", "covariate", "x", "estimate", "pw_lo", "pw_hi", "sim_lo", "sim_hi"};
  if (table.header != expected) throw InputError("band file has unexpected columns");
  std::vector<BandCurve> curves;
  std::vector<std::vector<double>> cols(6);
  auto flush = [&] {
    if (curves.empty()) return;
    BandCurve& c = curves.back();
    auto to_vec = [](const std::vector<double>& v) {
      return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    c.estimate = to_vec(cols[0]);
    c.pointwise_lower = to_vec(cols[1]);
    c.pointwise_upper = to_vec(cols[2]);
    c.simultaneous_lower = to_vec(cols[3]);
    c.simultaneous_upper = to_vec(cols[4]);
    for (auto& v : cols) v.clear();
  };
  for (const auto& cells : table.rows) {
    const int state = static_cast<int>(parse_double(cells[0], "state")) - 1;
    int term = -1;
    for (int p = 0; p < spec.n_terms(); ++p) {
      if (spec.terms[static_cast<std::size_t>(p)].name == cells[1]) term = p;
    }
    if (term < 0) throw InputError("band file: unknown covariate '" + cells[1] + "'");
    if (curves.empty() || curves.back().state != state || curves.back().term != term) {
      flush();
      BandCurve c;
      c.state = state;
      c.term = term;
      curves.push_back(std::move(c));
    }
    curves.back().x.push_back(parse_double(cells[2], "x"));
    for (int k = 0; k < 5; ++k) cols[static_cast<std::size_t>(k)].push_back(parse_double(cells[static_cast<std::size_t>(k + 3)], "band"));
  }
  flush();
  return curves;
}

void write_curves(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << "run,state,covariate,x,value\n";
  for (const CurveRow& r : rows) {
    out << r.run << ',' << r.state << ',' << r.covariate << ',' << format_double(r.x) << ',' << format_double(r.value)
        << '\n';
  }
}

std::vector<CurveRow> read_curves(const CsvTable& table) {
  const std::vector<std::string> expected{"run", "state", "covariate", "x", "value"};
  if (table.header != expected) throw InputError("curve file has unexpected columns");
  std::vector<CurveRow> rows;
  for (const auto& cells : table.rows) {
    rows.push_back({static_cast<int>(parse_double(cells[0], "run")), static_cast<int>(parse_double(cells[1], "state")),
                    cells[2], parse_double(cells[3], "x"), parse_double(cells[4], "value")});
  }
  return rows;
}

std::vector<CurveRow> model_curves(const MSGAMSpec& spec, const MSGAMParams& params, int grid_size, int run) {
  std::vector<CurveRow> rows;
  for (int i = 0; i < spec.n_states; ++i) {
    for (int p = 0; p < spec.n_terms(); ++p) {
      const Term& term = spec.terms[static_cast<std::size_t>(p)];
      const std::vector<double> grid = curve_grid(term, grid_size);
      const Eigen::VectorXd v = centered_curve(spec, params, i, p, grid);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        rows.push_back({run, i + 1, term.name, grid[g], v[static_cast<Eigen::Index>(g)]});
      }
    }
  }
  return rows;
}

void write_states(std::ostream& out, const std::vector<long long>& time, const std::vector<int>& states) {
  out << "t,state\n";
  for (std::size_t t = 0; t < states.size(); ++t) {
    out << (time.empty() ? static_cast<long long>(t + 1) : time[t]) << ',' << states[t] + 1 << '\n';
  }
}

void write_forecast_table(std::ostream& out, const std::vector<ForecastResult>& results) {
  out << "model,total_score,n_scored\n";
  for (const ForecastResult& r : results) {
    out << r.model << ',' << format_double(r.total) << ',' << r.scores.size() << '\n';
  }
}

void write_forecast_trajectory(std::ostream& out, const std::vector<ForecastResult>& results) {
  out << "model,u,score\n";
  for (const ForecastResult& r : results) {
    for (std::size_t k = 0; k < r.u.size(); ++k) out << r.model << ',' << r.u[k] << ',' << format_double(r.scores[k]) << '\n';
  }
}

void write_scenario_report(std::ostream& out, const ScenarioReport& report) {
  out << "quantity,state,covariate,mean,sd,count\n";
  const int used = report.runs - report.failures;
  for (Eigen::Index i = 0; i < report.mise.rows(); ++i) {
    for (Eigen::Index p = 0; p < report.mise.cols(); ++p) {
      out << "mise," << i + 1 << ",x" << p + 1 << ',' << format_double(report.mise(i, p)) << ",," << used << '\n';
    }
  }
  auto summaries = [&](const char* name, const std::vector<Summary>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      out << name << ',' << i + 1 << ",-," << format_double(v[i].mean) << ',' << format_double(v[i].sd) << ','
          << v[i].count << '\n';
    }
  };
  summaries("gamma_ii", report.tpm_diagonal);
  summaries("predictor_at_zero", report.predictor_at_zero);
  summaries("dispersion", report.dispersions);
  out << "failures,-,-," << report.failures << ",," << report.runs << '\n';
}

}  // namespace msgam
