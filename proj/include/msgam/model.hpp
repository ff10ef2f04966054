#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msgam/basis.hpp"
#include "msgam/family.hpp"
#include "msgam/hmm.hpp"

namespace msgam {

/// Response series with per-time covariates (raw scale) and missingness.
struct TimeSeriesData {
  std::vector<double> y;
  Eigen::MatrixXd x;  ///< T x P
  MissingMask missing;
  std::string response_name = "y";
  std::vector<std::string> covariate_names;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(y.size()); }
  [[nodiscard]] int n_covariates() const noexcept { return static_cast<int>(x.cols()); }
  [[nodiscard]] bool is_missing(int t) const noexcept {
    return !missing.empty() && missing[static_cast<std::size_t>(t)] != 0;
  }
  /// First n observations.
  [[nodiscard]] TimeSeriesData head(int n) const;
  /// Throws InputError when dimensions disagree.
  void validate_shape() const;
};

/// Throws InputError naming the first non-missing response outside the
/// family's support (1-based index).
void validate_response(const Family& family, const TimeSeriesData& data);

enum class TermKind { smooth, linear };

/// One additive term of the state predictors: a penalized B-spline smooth or a
/// plain linear effect of the standardized covariate.
struct Term {
  std::string name;
  TermKind kind = TermKind::smooth;
  Standardizer standardizer;
  SplineBasisSpec basis;  ///< unused for linear terms

  [[nodiscard]] int n_coeffs() const noexcept { return kind == TermKind::smooth ? basis.n_basis() : 1; }
  [[nodiscard]] int n_free() const noexcept { return kind == TermKind::smooth ? basis.n_basis() - 1 : 1; }
  /// Term value at a raw covariate value.
  [[nodiscard]] double eval(const Eigen::VectorXd& coeffs, double raw_x) const;
  /// Raw covariate value at which displayed curves are anchored to zero: the
  /// origin if it lies inside the basis domain, otherwise the covariate mean.
  [[nodiscard]] double anchor() const noexcept;
  /// Raw-scale interval covered by the term.
  [[nodiscard]] std::pair<double, double> raw_domain() const noexcept;
};

struct ModelOptions {
  Family family{FamilyKind::normal};
  int n_states = 1;
  int n_basis = 15;
  int penalty_order = 2;
  InitMode init_mode = InitMode::stationary;
  /// One entry per covariate; empty means every covariate is smooth.
  std::vector<TermKind> term_kinds;
  /// Standardized-scale margin added on both sides of the observed range.
  double domain_margin = 0.5;
};

/// Model skeleton: family, state count, and the fixed basis of every term.
struct MSGAMSpec {
  Family family;
  int n_states = 1;
  std::vector<Term> terms;
  InitMode init_mode = InitMode::stationary;
  int penalty_order = 2;

  [[nodiscard]] int n_terms() const noexcept { return static_cast<int>(terms.size()); }
  /// Length of the unconstrained parameter vector.
  [[nodiscard]] int n_packed() const noexcept;
  /// Parameter count of the same model with every smooth replaced by a
  /// linear effect.
  [[nodiscard]] int n_parametric() const noexcept;
};

/// Standardizers and bases from the data; throws InputError on constant
/// covariates or inconsistent options.
MSGAMSpec make_spec(const TimeSeriesData& data, const ModelOptions& options);

/// Natural-scale parameters. coeffs[i][p] holds the full coefficient vector of
/// term p in state i; for smooths the center entry is structurally zero.
struct MSGAMParams {
  Eigen::VectorXd intercepts;
  std::vector<std::vector<Eigen::VectorXd>> coeffs;
  Eigen::VectorXd dispersions;  ///< all ones when the family has none
  MarkovChain chain;
};

/// Smoothing parameters lambda_ip, one per (state, term); entries for linear
/// terms are ignored.
class SmoothingVector {
 public:
  SmoothingVector() = default;
  SmoothingVector(int n_states, int n_terms, double value = 0.0);
  explicit SmoothingVector(Eigen::MatrixXd values);

  [[nodiscard]] double operator()(int state, int term) const { return values_(state, term); }
  double& operator()(int state, int term) { return values_(state, term); }
  [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
  [[nodiscard]] int n_states() const noexcept { return static_cast<int>(values_.rows()); }
  [[nodiscard]] int n_terms() const noexcept { return static_cast<int>(values_.cols()); }

 private:
  Eigen::MatrixXd values_;
};

/// Unconstrained vector: per state the intercept and free coefficients, then
/// log dispersions, then multinomial logits of each t.p.m. row (diagonal as
/// reference), then initial-law logits (estimated mode only, state 1 as
/// reference).
Eigen::VectorXd pack(const MSGAMSpec& spec, const MSGAMParams& params);
MSGAMParams unpack(const MSGAMSpec& spec, const Eigen::VectorXd& theta);

/// Params with every coefficient zero, t.p.m. diagonal `persistence`, and
/// the given intercepts and dispersions.
MSGAMParams make_params(const MSGAMSpec& spec, const Eigen::VectorXd& intercepts, const Eigen::VectorXd& dispersions,
                        double persistence = 0.9);

/// Precomputed basis windows and standardized values of a dataset under a spec.
class Design {
 public:
  Design(const MSGAMSpec& spec, const Eigen::MatrixXd& raw_covariates);

  [[nodiscard]] int size() const noexcept { return n_; }
  [[nodiscard]] const std::vector<BasisWindow>& windows(int term) const { return windows_[static_cast<std::size_t>(term)]; }
  [[nodiscard]] const std::vector<double>& standardized(int term) const { return z_[static_cast<std::size_t>(term)]; }

 private:
  int n_ = 0;
  std::vector<std::vector<BasisWindow>> windows_;
  std::vector<std::vector<double>> z_;
};

/// T x N matrix of linear predictors eta_t^(i).
Eigen::MatrixXd predictor_matrix(const MSGAMSpec& spec, const MSGAMParams& params, const Design& design);
Eigen::MatrixXd predictor_matrix(const MSGAMSpec& spec, const MSGAMParams& params, const TimeSeriesData& data);

/// T x N state log densities; missing rows are zero.
Eigen::MatrixXd state_log_densities(const MSGAMSpec& spec, const MSGAMParams& params, const TimeSeriesData& data,
                                    std::span<const std::uint8_t> missing = {});

/// Combined mask of data missingness and an optional extra mask.
MissingMask combined_mask(const TimeSeriesData& data, std::span<const std::uint8_t> extra);

/// Reorder states: new state i takes old state order[i].
MSGAMParams permute_states(const MSGAMParams& params, std::span<const int> order);
SmoothingVector permute_states(const SmoothingVector& lambda, std::span<const int> order);
/// Order that sorts states by ascending intercept (stable).
std::vector<int> intercept_order(const MSGAMParams& params);

}  // namespace msgam
