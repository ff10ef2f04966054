#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "msgam/model.hpp"
#include "msgam/objective.hpp"
#include "msgam/optimizer.hpp"

namespace msgam {

enum class GradientMode {
  analytic,           ///< forward-backward derivatives
  central_difference  ///< central differences of the objective
};

struct FitOptions {
  /// Number of starting points; the first is the deterministic default start.
  /// For multi-state models without a supplied start the rest come from
  /// one-state fits to random segmentations of the series; otherwise they add
  /// N(0, restart_sd^2) noise on the working scale.
  int n_restarts = 5;
  std::uint64_t seed = 1;
  double restart_sd = 1.0;
  bool segment_starts = true;
  /// With state-dependent smoothing parameters, relabelled copies of the best
  /// optimum are refitted as additional starts.
  bool permutation_starts = true;
  GradientMode gradient = GradientMode::analytic;
  OptimizerOptions optimizer{};
  /// Packed starting vector (optimizer labelling) replacing the default start.
  std::optional<Eigen::VectorXd> start;
  /// Compute the effective degrees of freedom after fitting.
  bool compute_edf = true;
  /// Report states sorted by ascending intercept.
  bool sort_states = true;
  /// A state whose response standard deviation (Normal) or coefficient of
  /// variation (Gamma) falls below this fraction of the sample value has
  /// collapsed onto a few points; such optima rank below all proper ones and
  /// are reported as not converged.
  double collapse_ratio = 1e-2;
};

struct FitResult {
  /// Estimated parameters in reported (intercept-sorted) state order.
  MSGAMParams params;
  /// lambda in the same state order as params.
  SmoothingVector lambda;
  double loglik_unpenalized = 0.0;
  double loglik_penalized = 0.0;
  /// Effective degrees of freedom; NaN when not computed or not computable.
  double edf = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int n_restarts_used = 0;
  int optimizer_iterations = 0;
  /// Optimum in the optimizer's own state labelling (suitable as a warm start
  /// under the lambda that was passed to fit).
  Eigen::VectorXd raw_packed;
  /// raw state index of each reported state
  std::vector<int> state_order;
  std::string message;

  /// -2 log L + 2 edf
  [[nodiscard]] double aic_p() const { return -2.0 * loglik_unpenalized + 2.0 * edf; }
};

/// Deterministic default start: intercepts from the transformed response mean
/// with small state offsets, zero coefficients, t.p.m. diagonal 0.9 and
/// moment-based dispersions.
Eigen::VectorXd default_start(const MSGAMSpec& spec, const TimeSeriesData& data,
                              std::span<const std::uint8_t> extra_missing = {});

/// Maximize the penalized log-likelihood over `options.n_restarts` starts and
/// keep the best. Invalid data throws InputError; failure to converge, and an
/// information matrix that is not positive definite at the optimum, are
/// reported through FitResult::converged.
FitResult fit(const MSGAMSpec& spec, const TimeSeriesData& data, const SmoothingVector& lambda,
              const FitOptions& options = {}, std::span<const std::uint8_t> extra_missing = {});

struct FisherInformation {
  Eigen::MatrixXd penalized;
  Eigen::MatrixXd unpenalized;
  double gradient_max_norm = 0.0;
  /// False when the penalized gradient at the point exceeds the tolerance.
  bool at_optimum = true;
};

/// Central-difference Hessian from a gradient function, symmetrized.
Eigen::MatrixXd numerical_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                                  const Eigen::VectorXd& x, double relative_step = 1e-5);

/// Observed information of -log L and of -l_pen at theta (packed, in the
/// labelling of `lambda`). Throws NumericalError for non-finite entries.
FisherInformation observed_fisher(const Eigen::VectorXd& theta, const MSGAMSpec& spec, const TimeSeriesData& data,
                                  const SmoothingVector& lambda, std::span<const std::uint8_t> extra_missing = {},
                                  double gradient_tolerance = 1e-3);

/// trace(I_unpen * I_pen^{-1}); throws NumericalError when I_pen is singular
/// or not positive definite.
double effective_dof(const Eigen::MatrixXd& penalized_info, const Eigen::MatrixXd& unpenalized_info);

/// Fill result.edf from the observed information at result.raw_packed.
void compute_edf(FitResult& result, const MSGAMSpec& spec, const TimeSeriesData& data, const SmoothingVector& lambda,
                 std::span<const std::uint8_t> extra_missing = {});

}  // namespace msgam
