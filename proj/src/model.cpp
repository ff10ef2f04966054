#include "msgam/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "msgam/error.hpp"

namespace msgam {

TimeSeriesData TimeSeriesData::head(int n) const {
  n = std::clamp(n, 0, size());
  TimeSeriesData out;
  out.y.assign(y.begin(), y.begin() + n);
  out.x = x.topRows(n);
  if (!missing.empty()) out.missing.assign(missing.begin(), missing.begin() + n);
  out.response_name = response_name;
  out.covariate_names = covariate_names;
  return out;
}

void TimeSeriesData::validate_shape() const {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw InputError("covariate rows (" + std::to_string(x.rows()) + ") do not match response length (" +
                     std::to_string(y.size()) + ")");
  }
  if (!missing.empty() && missing.size() != y.size()) {
    throw InputError("missing mask length does not match response length");
  }
  if (!covariate_names.empty() && static_cast<Eigen::Index>(covariate_names.size()) != x.cols()) {
    throw InputError("covariate name count does not match covariate columns");
  }
}

void validate_response(const Family& family, const TimeSeriesData& data) {
  data.validate_shape();
  for (int t = 0; t < data.size(); ++t) {
    if (data.is_missing(t)) continue;
    if (!family.valid_response(data.y[static_cast<std::size_t>(t)])) {
      throw InputError("response at index " + std::to_string(t + 1) + " (" +
                       std::to_string(data.y[static_cast<std::size_t>(t)]) + ") is invalid for the " + family.name() +
                       " family");
    }
    for (Eigen::Index p = 0; p < data.x.cols(); ++p) {
      if (!std::isfinite(data.x(t, p))) {
        throw InputError("non-finite covariate at index " + std::to_string(t + 1));
      }
    }
  }
}

double Term::eval(const Eigen::VectorXd& coeffs, double raw_x) const {
  const double z = standardizer.apply(raw_x);
  if (kind == TermKind::linear) {
    return coeffs[0] * z;
  }
  const BasisWindow w = basis.window(z);
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) sum += w.values[static_cast<std::size_t>(k)] * coeffs[w.first + k];
  return sum;
}

std::pair<double, double> Term::raw_domain() const noexcept {
  if (kind == TermKind::linear) {
    return {standardizer.invert(-3.0), standardizer.invert(3.0)};
  }
  return {standardizer.invert(basis.lower()), standardizer.invert(basis.upper())};
}

double Term::anchor() const noexcept {
  const auto [lo, hi] = raw_domain();
  return (lo <= 0.0 && 0.0 <= hi) ? 0.0 : standardizer.mean;
}

int MSGAMSpec::n_packed() const noexcept {
  int per_state = 1;
  for (const Term& term : terms) per_state += term.n_free();
  int n = n_states * per_state;
  if (family.has_dispersion()) n += n_states;
  n += n_states * (n_states - 1);
  if (init_mode == InitMode::estimated) n += n_states - 1;
  return n;
}

int MSGAMSpec::n_parametric() const noexcept {
  int n = n_states * (1 + n_terms());
  if (family.has_dispersion()) n += n_states;
  n += n_states * (n_states - 1);
  if (init_mode == InitMode::estimated) n += n_states - 1;
  return n;
}

MSGAMSpec make_spec(const TimeSeriesData& data, const ModelOptions& options) {
  data.validate_shape();
  if (options.n_states < 1) {
    throw InputError("number of states must be at least 1");
  }
  if (!options.term_kinds.empty() && static_cast<int>(options.term_kinds.size()) != data.n_covariates()) {
    throw InputError("term kind list does not match the covariate count");
  }
  MSGAMSpec spec;
  spec.family = options.family;
  spec.n_states = options.n_states;
  spec.init_mode = options.init_mode;
  spec.penalty_order = options.penalty_order;
  for (int p = 0; p < data.n_covariates(); ++p) {
    std::vector<double> column;
    column.reserve(static_cast<std::size_t>(data.size()));
    for (int t = 0; t < data.size(); ++t) {
      const double v = data.x(t, p);
      if (std::isfinite(v)) column.push_back(v);
    }
    Term term;
    term.name = p < static_cast<int>(data.covariate_names.size()) ? data.covariate_names[static_cast<std::size_t>(p)]
                                                                   : "x" + std::to_string(p + 1);
    term.kind = options.term_kinds.empty() ? TermKind::smooth : options.term_kinds[static_cast<std::size_t>(p)];
    try {
      auto [standardizer, z] = standardize(column);
      term.standardizer = standardizer;
      if (term.kind == TermKind::smooth) {
        const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
        term.basis = build_basis(options.n_basis, *lo - options.domain_margin, *hi + options.domain_margin);
        (void)penalty_matrix(options.n_basis, options.penalty_order);
      }
    } catch (const InputError& e) {
      throw InputError("covariate '" + term.name + "': " + e.what());
    }
    spec.terms.push_back(std::move(term));
  }
  return spec;
}

SmoothingVector::SmoothingVector(int n_states, int n_terms, double value)
    : values_(Eigen::MatrixXd::Constant(n_states, n_terms, value)) {
  if (!(value >= 0.0)) throw InputError("smoothing parameters must be non-negative");
}

SmoothingVector::SmoothingVector(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (!(values_.array() >= 0.0).all()) throw InputError("smoothing parameters must be non-negative");
}

namespace {

void check_params(const MSGAMSpec& spec, const MSGAMParams& params) {
  const auto n = static_cast<Eigen::Index>(spec.n_states);
  if (params.intercepts.size() != n || params.dispersions.size() != n ||
      static_cast<int>(params.coeffs.size()) != spec.n_states || params.chain.tpm.rows() != n ||
      params.chain.tpm.cols() != n || params.chain.init.size() != n) {
    throw InputError("parameter dimensions do not match the model spec");
  }
  for (const auto& state : params.coeffs) {
    if (static_cast<int>(state.size()) != spec.n_terms()) {
      throw InputError("coefficient blocks do not match the number of terms");
    }
    for (int p = 0; p < spec.n_terms(); ++p) {
      if (state[static_cast<std::size_t>(p)].size() != spec.terms[static_cast<std::size_t>(p)].n_coeffs()) {
        throw InputError("coefficient count mismatch for term '" + spec.terms[static_cast<std::size_t>(p)].name + "'");
      }
    }
  }
}

}  // namespace

Eigen::VectorXd pack(const MSGAMSpec& spec, const MSGAMParams& params) {
  check_params(spec, params);
  Eigen::VectorXd theta(spec.n_packed());
  Eigen::Index pos = 0;
  for (int i = 0; i < spec.n_states; ++i) {
    theta[pos++] = params.intercepts[i];
    for (int p = 0; p < spec.n_terms(); ++p) {
      const Term& term = spec.terms[static_cast<std::size_t>(p)];
      const Eigen::VectorXd& c = params.coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
      if (term.kind == TermKind::linear) {
        theta[pos++] = c[0];
        continue;
      }
      const int center = term.basis.center_index();
      for (int k = 0; k < term.n_coeffs(); ++k) {
        if (k != center) theta[pos++] = c[k];
      }
    }
  }
  if (spec.family.has_dispersion()) {
    for (int i = 0; i < spec.n_states; ++i) theta[pos++] = std::log(params.dispersions[i]);
  }
  for (int i = 0; i < spec.n_states; ++i) {
    for (int j = 0; j < spec.n_states; ++j) {
      if (j != i) theta[pos++] = std::log(params.chain.tpm(i, j) / params.chain.tpm(i, i));
    }
  }
  if (spec.init_mode == InitMode::estimated) {
    for (int j = 1; j < spec.n_states; ++j) theta[pos++] = std::log(params.chain.init[j] / params.chain.init[0]);
  }
  return theta;
}

MSGAMParams unpack(const MSGAMSpec& spec, const Eigen::VectorXd& theta) {
  if (theta.size() != spec.n_packed()) {
    throw InputError("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                     std::to_string(spec.n_packed()));
  }
  const int n = spec.n_states;
  MSGAMParams params;
  params.intercepts.resize(n);
  params.coeffs.assign(static_cast<std::size_t>(n), {});
  Eigen::Index pos = 0;
  for (int i = 0; i < n; ++i) {
    params.intercepts[i] = theta[pos++];
    auto& blocks = params.coeffs[static_cast<std::size_t>(i)];
    for (const Term& term : spec.terms) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(term.n_coeffs());
      if (term.kind == TermKind::linear) {
        c[0] = theta[pos++];
      } else {
        const int center = term.basis.center_index();
        for (int k = 0; k < term.n_coeffs(); ++k) {
          if (k != center) c[k] = theta[pos++];
        }
      }
      blocks.push_back(std::move(c));
    }
  }
  params.dispersions = Eigen::VectorXd::Ones(n);
  if (spec.family.has_dispersion()) {
    for (int i = 0; i < n; ++i) params.dispersions[i] = std::exp(theta[pos++]);
  }
  Eigen::MatrixXd tpm(n, n);
  for (int i = 0; i < n; ++i) {
    // subtract the row max before exponentiating
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
      if (j != i) logits[j] = theta[pos++];
    }
    const Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
    tpm.row(i) = w.transpose() / w.sum();
  }
  params.chain.tpm = tpm;
  params.chain.init_mode = spec.init_mode;
  if (spec.init_mode == InitMode::estimated) {
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(n);
    for (int j = 1; j < n; ++j) logits[j] = theta[pos++];
    const Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
    params.chain.init = w / w.sum();
  } else {
    params.chain.init = stationary_distribution(tpm);
  }
  return params;
}

MSGAMParams make_params(const MSGAMSpec& spec, const Eigen::VectorXd& intercepts, const Eigen::VectorXd& dispersions,
                        double persistence) {
  const int n = spec.n_states;
  MSGAMParams params;
  params.intercepts = intercepts;
  params.dispersions = dispersions;
  params.coeffs.assign(static_cast<std::size_t>(n), {});
  for (auto& blocks : params.coeffs) {
    for (const Term& term : spec.terms) blocks.push_back(Eigen::VectorXd::Zero(term.n_coeffs()));
  }
  Eigen::MatrixXd tpm = Eigen::MatrixXd::Ones(n, n);
  if (n > 1) {
    tpm *= (1.0 - persistence) / (n - 1);
    tpm.diagonal().setConstant(persistence);
  }
  params.chain.tpm = tpm;
  params.chain.init_mode = spec.init_mode;
  params.chain.init = n > 1 ? stationary_distribution(tpm) : Eigen::VectorXd::Ones(1);
  return params;
}

Design::Design(const MSGAMSpec& spec, const Eigen::MatrixXd& raw_covariates)
    : n_(static_cast<int>(raw_covariates.rows())) {
  if (raw_covariates.cols() != spec.n_terms()) {
    throw InputError("data has " + std::to_string(raw_covariates.cols()) + " covariates, model expects " +
                     std::to_string(spec.n_terms()));
  }
  windows_.resize(static_cast<std::size_t>(spec.n_terms()));
  z_.resize(static_cast<std::size_t>(spec.n_terms()));
  for (int p = 0; p < spec.n_terms(); ++p) {
    const Term& term = spec.terms[static_cast<std::size_t>(p)];
    auto& z = z_[static_cast<std::size_t>(p)];
    z.resize(static_cast<std::size_t>(n_));
    for (int t = 0; t < n_; ++t) {
      const double raw = raw_covariates(t, p);
      // non-finite covariates only occur at missing observations
      z[static_cast<std::size_t>(t)] = std::isfinite(raw) ? term.standardizer.apply(raw) : 0.0;
    }
    if (term.kind == TermKind::smooth) {
      auto& w = windows_[static_cast<std::size_t>(p)];
      w.resize(static_cast<std::size_t>(n_));
      for (int t = 0; t < n_; ++t) w[static_cast<std::size_t>(t)] = term.basis.window(z[static_cast<std::size_t>(t)]);
    }
  }
}

Eigen::MatrixXd predictor_matrix(const MSGAMSpec& spec, const MSGAMParams& params, const Design& design) {
  const int T = design.size();
  Eigen::MatrixXd eta(T, spec.n_states);
  for (int i = 0; i < spec.n_states; ++i) {
    eta.col(i).setConstant(params.intercepts[i]);
    for (int p = 0; p < spec.n_terms(); ++p) {
      const Eigen::VectorXd& c = params.coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
      if (spec.terms[static_cast<std::size_t>(p)].kind == TermKind::linear) {
        const auto& z = design.standardized(p);
        for (int t = 0; t < T; ++t) eta(t, i) += c[0] * z[static_cast<std::size_t>(t)];
        continue;
      }
      const auto& windows = design.windows(p);
      for (int t = 0; t < T; ++t) {
        const BasisWindow& w = windows[static_cast<std::size_t>(t)];
        eta(t, i) += w.values[0] * c[w.first] + w.values[1] * c[w.first + 1] + w.values[2] * c[w.first + 2] +
                     w.values[3] * c[w.first + 3];
      }
    }
  }
  return eta;
}

Eigen::MatrixXd predictor_matrix(const MSGAMSpec& spec, const MSGAMParams& params, const TimeSeriesData& data) {
  return predictor_matrix(spec, params, Design(spec, data.x));
}

MissingMask combined_mask(const TimeSeriesData& data, std::span<const std::uint8_t> extra) {
  MissingMask mask(static_cast<std::size_t>(data.size()), 0);
  if (!extra.empty() && static_cast<int>(extra.size()) != data.size()) {
    throw InputError("mask length does not match the series length");
  }
  for (int t = 0; t < data.size(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    mask[i] = (data.is_missing(t) || (!extra.empty() && extra[i] != 0)) ? 1 : 0;
  }
  return mask;
}

Eigen::MatrixXd state_log_densities(const MSGAMSpec& spec, const MSGAMParams& params, const TimeSeriesData& data,
                                    std::span<const std::uint8_t> missing) {
  const Eigen::MatrixXd eta = predictor_matrix(spec, params, data);
  const MissingMask mask = combined_mask(data, missing);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(eta.rows(), eta.cols());
  for (int t = 0; t < data.size(); ++t) {
    if (mask[static_cast<std::size_t>(t)]) continue;
    for (int i = 0; i < spec.n_states; ++i) {
      const double mu = spec.family.inverse_link(eta(t, i));
      const Dispersion phi = spec.family.has_dispersion() ? Dispersion(params.dispersions[i]) : Dispersion{};
      out(t, i) = spec.family.log_density(data.y[static_cast<std::size_t>(t)], mu, phi);
    }
  }
  return out;
}

MSGAMParams permute_states(const MSGAMParams& params, std::span<const int> order) {
  const auto n = static_cast<int>(order.size());
  MSGAMParams out = params;
  for (int i = 0; i < n; ++i) {
    const int from = order[static_cast<std::size_t>(i)];
    out.intercepts[i] = params.intercepts[from];
    out.dispersions[i] = params.dispersions[from];
    out.coeffs[static_cast<std::size_t>(i)] = params.coeffs[static_cast<std::size_t>(from)];
    out.chain.init[i] = params.chain.init[from];
    for (int j = 0; j < n; ++j) out.chain.tpm(i, j) = params.chain.tpm(from, order[static_cast<std::size_t>(j)]);
  }
  return out;
}

SmoothingVector permute_states(const SmoothingVector& lambda, std::span<const int> order) {
  Eigen::MatrixXd values = lambda.values();
  for (std::size_t i = 0; i < order.size(); ++i) {
    values.row(static_cast<Eigen::Index>(i)) = lambda.values().row(order[i]);
  }
  return SmoothingVector(values);
}

std::vector<int> intercept_order(const MSGAMParams& params) {
  std::vector<int> order(static_cast<std::size_t>(params.intercepts.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return params.intercepts[a] < params.intercepts[b]; });
  return order;
}

}  // namespace msgam
