#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace msgam {

/// Mean/sd shift that maps a covariate to zero mean and unit sample sd.
struct Standardizer {
  double mean = 0.0;
  double sd = 1.0;

  [[nodiscard]] double apply(double x) const noexcept { return (x - mean) / sd; }
  [[nodiscard]] double invert(double z) const noexcept { return z * sd + mean; }
};

/// Fit a Standardizer (sample sd, n - 1 denominator) and return the
/// standardized values. Throws InputError for fewer than two values or a
/// constant sequence.
std::pair<Standardizer, std::vector<double>> standardize(std::span<const double> values);

/// Nonzero window of a cubic B-spline basis at one point: basis functions
/// first .. first + 3 take the listed values, all others are zero.
struct BasisWindow {
  int first = 0;
  std::array<double, 4> values{};
};

/// Cubic B-spline basis on equidistant knots, extended beyond the domain so
/// that exactly `n_basis` functions are supported on [lower, upper].
class SplineBasisSpec {
 public:
  SplineBasisSpec() = default;

  [[nodiscard]] int n_basis() const noexcept { return n_basis_; }
  [[nodiscard]] static constexpr int degree() noexcept { return 3; }
  [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
  [[nodiscard]] double lower() const noexcept { return lower_; }
  [[nodiscard]] double upper() const noexcept { return upper_; }
  [[nodiscard]] double spacing() const noexcept { return (upper_ - lower_) / (n_basis_ - degree()); }
  /// Index of the coefficient held at zero for identifiability.
  [[nodiscard]] int center_index() const noexcept { return (n_basis_ - 1) / 2; }

  /// Basis values at x; x is clamped to [lower, upper].
  [[nodiscard]] BasisWindow window(double x) const noexcept;
  [[nodiscard]] Eigen::VectorXd eval(double x) const;

  friend SplineBasisSpec build_basis(int n_basis, double lower, double upper);

 private:
  int n_basis_ = 0;
  double lower_ = 0.0;
  double upper_ = 1.0;
  std::vector<double> knots_;
};

/// K must be odd and at least 5; the domain must be non-degenerate.
SplineBasisSpec build_basis(int n_basis, double lower, double upper);

/// Difference penalty D^T D for the order-th difference operator D.
struct PenaltyMatrix {
  int order = 2;
  Eigen::MatrixXd matrix;

  [[nodiscard]] double quadratic_form(const Eigen::VectorXd& coeffs) const { return coeffs.dot(matrix * coeffs); }
};

PenaltyMatrix penalty_matrix(int n_basis, int order = 2);

/// Sum of squared order-th differences, computed directly from the sequence.
double difference_penalty(std::span<const double> coeffs, int order = 2);

}  // namespace msgam
