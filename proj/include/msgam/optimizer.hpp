#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace msgam {

struct OptimizerOptions {
  int max_iterations = 1000;
  /// Stop when |f_k - f_{k+1}| < rel_tol * (|f_k| + rel_tol).
  double rel_tol = 1e-8;
  /// Stop when max |gradient| < grad_tol.
  double grad_tol = 1e-5;
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// f(x, grad) returns the objective and writes the gradient.
using GradientFunction = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// BFGS quasi-Newton minimization with a strong-Wolfe line search.
OptimizerResult minimize_bfgs(const GradientFunction& f, Eigen::VectorXd x0, const OptimizerOptions& options = {});

}  // namespace msgam
