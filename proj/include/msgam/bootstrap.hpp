#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "msgam/fit.hpp"
#include "msgam/model.hpp"
#include "msgam/parallel.hpp"

namespace msgam {

struct SimulatedSeries {
  TimeSeriesData data;
  std::vector<int> states;  ///< 0-based
};

/// Draw a state path from (delta, Gamma) and responses from the family at
/// the supplied state predictors (T x N). Deterministic in `seed`.
SimulatedSeries simulate_from_predictor(const Family& family, const MarkovChain& chain, const Eigen::MatrixXd& eta,
                                        const Eigen::VectorXd& dispersions, std::uint64_t seed);

/// Simulate a series from a fitted or specified model, reusing the given raw
/// covariates. The result carries the covariates and no missing values.
SimulatedSeries simulate_series(const MSGAMSpec& spec, const MSGAMParams& params, const Eigen::MatrixXd& covariates,
                                std::uint64_t seed);

/// Estimated curve and bands of one (state, term) pair on a raw-scale grid.
struct BandCurve {
  int state = 0;
  int term = 0;
  std::vector<double> x;
  Eigen::VectorXd estimate;
  Eigen::VectorXd pointwise_lower;
  Eigen::VectorXd pointwise_upper;
  Eigen::VectorXd simultaneous_lower;
  Eigen::VectorXd simultaneous_upper;
  /// Common inflation of the pointwise half-widths (>= 1).
  double scale = 1.0;
  /// Replicate curves lying entirely inside the simultaneous band.
  int inside = 0;
  /// Centered replicate curves, one row per converged replicate.
  Eigen::MatrixXd replicates;
};

struct BandSet {
  double level = 0.95;
  int replicates = 0;  ///< requested B
  int failures = 0;    ///< non-convergent replicate fits (excluded)
  std::vector<BandCurve> curves;
};

inline FitOptions replicate_fit_options() {
  FitOptions o;
  o.n_restarts = 1;
  o.compute_edf = false;
  return o;
}

struct BootstrapOptions {
  int replicates = 999;
  double level = 0.95;
  int grid_size = 100;
  std::uint64_t seed = 1;
  /// Replicate fits; they always warm-start from the point estimate.
  FitOptions fit = replicate_fit_options();
  Execution execution = Execution::parallel;
};

/// Centered curve of term `term` in state `state` on the grid: anchored to
/// zero at Term::anchor().
Eigen::VectorXd centered_curve(const MSGAMSpec& spec, const MSGAMParams& params, int state, int term,
                               const std::vector<double>& grid);

/// Equidistant raw-scale grid covering a term's domain.
std::vector<double> curve_grid(const Term& term, int grid_size);

/// Pointwise and simultaneous bands from the replicate curves (one row each)
/// around the point estimate.
void build_bands(BandCurve& curve, double level);

/// Parametric bootstrap: simulate B series from the fitted model, refit each
/// with the same lambda (state order of fit.params), and band the centered
/// curves. Throws NumericalError when more than 20% of refits fail.
BandSet bootstrap_bands(const MSGAMSpec& spec, const FitResult& fit, const TimeSeriesData& data,
                        const SmoothingVector& lambda, const BootstrapOptions& options);

/// Type-7 sample quantile of sorted values.
double quantile_sorted(const std::vector<double>& sorted, double prob);

}  // namespace msgam
