#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "msgam/basis.hpp"
#include "msgam/model.hpp"

namespace msgam {

/// Value returned in place of a non-finite objective so line searches can
/// back off instead of propagating NaN.
inline constexpr double kNonFinitePenalty = 1e10;

struct ObjectiveEvaluation {
  double value = 0.0;
  bool finite = true;
};

/// Negative penalized log-likelihood of an MS-GAM over the packed parameter
/// vector:
///
///   -log L(theta) + sum_i sum_p (lambda_ip / 2) gamma_ip^T M gamma_ip
///
/// where M is the difference penalty and gamma_ip includes the fixed center
/// zero. Observations flagged in the data or in `extra_missing` are treated as
/// missing in the forward recursion.
class PenalizedObjective {
 public:
  /// Throws InputError when the response is invalid for the family or the
  /// smoothing vector has the wrong shape.
  PenalizedObjective(const MSGAMSpec& spec, const TimeSeriesData& data, SmoothingVector lambda,
                     std::span<const std::uint8_t> extra_missing = {});

  [[nodiscard]] int dimension() const noexcept { return spec_.n_packed(); }
  [[nodiscard]] const MSGAMSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const SmoothingVector& lambda() const noexcept { return lambda_; }

  /// Unpenalized log-likelihood; -inf when the likelihood vanishes.
  [[nodiscard]] double loglik(const Eigen::VectorXd& theta) const;
  [[nodiscard]] double penalty(const Eigen::VectorXd& theta) const;
  [[nodiscard]] ObjectiveEvaluation evaluate(const Eigen::VectorXd& theta) const;
  /// evaluate(theta).value
  [[nodiscard]] double operator()(const Eigen::VectorXd& theta) const { return evaluate(theta).value; }

  /// Objective value and its analytic gradient (forward-backward). The
  /// gradient is zero when the value is non-finite.
  ObjectiveEvaluation value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& gradient) const;
  /// Log-likelihood and its gradient.
  double loglik_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& gradient) const;
  [[nodiscard]] Eigen::VectorXd penalty_gradient(const Eigen::VectorXd& theta) const;
  /// Constant Hessian of the penalty in packed coordinates.
  [[nodiscard]] Eigen::MatrixXd penalty_hessian() const;

 private:
  struct Slot {
    Eigen::Index offset;  ///< start of the free coefficients in the packed vector
    int term;
    int state;
  };

  [[nodiscard]] Eigen::MatrixXd log_densities(const MSGAMParams& params, Eigen::MatrixXd* d_eta,
                                              Eigen::MatrixXd* d_log_phi) const;

  MSGAMSpec spec_;
  SmoothingVector lambda_;
  std::vector<double> y_;
  std::vector<double> y_constant_;
  MissingMask mask_;
  Design design_;
  std::vector<PenaltyMatrix> penalties_;  ///< per term (empty matrix for linear terms)
  std::vector<Slot> slots_;
};

/// Free-function form of the objective.
double penalized_negloglik(const Eigen::VectorXd& theta, const MSGAMSpec& spec, const TimeSeriesData& data,
                           const SmoothingVector& lambda, std::span<const std::uint8_t> extra_missing = {});

/// Central-difference gradient with step 1e-6 * (1 + |theta_k|) scaled by
/// `step_scale`.
Eigen::VectorXd finite_difference_gradient(const PenalizedObjective& objective, const Eigen::VectorXd& theta,
                                           double step_scale = 1.0);

}  // namespace msgam
