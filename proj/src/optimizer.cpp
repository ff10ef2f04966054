#include "msgam/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msgam {

namespace {

struct LinePoint {
  double step;
  double value;
  double slope;
};

/// Minimizer of the cubic interpolating two points with slopes, falling back
/// to bisection when the cubic is degenerate or leaves the safeguarded range.
double interpolate(const LinePoint& a, const LinePoint& b) {
  const double lo = std::min(a.step, b.step);
  const double hi = std::max(a.step, b.step);
  const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (disc >= 0.0 && std::isfinite(disc)) {
    const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
    const double denom = b.slope - a.slope + 2.0 * d2;
    if (denom != 0.0) {
      const double next = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
      const double margin = 0.1 * (hi - lo);
      if (std::isfinite(next) && next > lo + margin && next < hi - margin) return next;
    }
  }
  return 0.5 * (lo + hi);
}

class LineSearch {
 public:
  LineSearch(const GradientFunction& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir, double f0, double g0)
      : f_(f), x_(x), dir_(dir), f0_(f0), g0_(g0) {}

  /// Returns true on a point satisfying the strong Wolfe conditions.
  bool run(double initial_step) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    LinePoint prev{0.0, f0_, g0_};
    double step = initial_step;
    for (int it = 0; it < 40; ++it) {
      LinePoint cur = probe(step);
      if (!std::isfinite(cur.value) || cur.value > f0_ + c1 * step * g0_ || (it > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur);
      }
      if (std::abs(cur.slope) <= -c2 * g0_) return true;
      if (cur.slope >= 0.0) return zoom(cur, prev);
      prev = cur;
      step *= 2.0;
    }
    return false;
  }

  [[nodiscard]] const Eigen::VectorXd& x() const noexcept { return best_x_; }
  [[nodiscard]] const Eigen::VectorXd& gradient() const noexcept { return best_g_; }
  [[nodiscard]] double value() const noexcept { return best_f_; }
  [[nodiscard]] double step() const noexcept { return best_step_; }
  [[nodiscard]] int evaluations() const noexcept { return evaluations_; }

 private:
  LinePoint probe(double step) {
    Eigen::VectorXd x = x_ + step * dir_;
    Eigen::VectorXd g(x.size());
    const double value = f_(x, g);
    ++evaluations_;
    const double slope = g.dot(dir_);
    if (std::isfinite(value) && value < best_f_) {
      best_f_ = value;
      best_x_ = std::move(x);
      best_g_ = std::move(g);
      best_step_ = step;
    }
    return {step, value, slope};
  }

  bool zoom(LinePoint lo, LinePoint hi) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    for (int it = 0; it < 30; ++it) {
      const double step = std::isfinite(hi.value) ? interpolate(lo, hi) : 0.5 * (lo.step + hi.step);
      if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
      LinePoint cur = probe(step);
      if (!std::isfinite(cur.value) || cur.value > f0_ + c1 * step * g0_ || cur.value >= lo.value) {
        hi = cur;
      } else {
        if (std::abs(cur.slope) <= -c2 * g0_) return true;
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = cur;
      }
    }
    // accept a sufficient decrease even without the curvature condition
    return best_step_ > 0.0 && best_f_ <= f0_ + c1 * best_step_ * g0_;
  }

  const GradientFunction& f_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& dir_;
  double f0_;
  double g0_;
  Eigen::VectorXd best_x_;
  Eigen::VectorXd best_g_;
  double best_f_ = std::numeric_limits<double>::infinity();
  double best_step_ = 0.0;
  int evaluations_ = 0;
};

}  // namespace

OptimizerResult minimize_bfgs(const GradientFunction& f, Eigen::VectorXd x0, const OptimizerOptions& options) {
  const Eigen::Index n = x0.size();
  OptimizerResult out;
  out.x = std::move(x0);
  out.gradient.resize(n);
  out.value = f(out.x, out.gradient);
  out.evaluations = 1;
  if (!std::isfinite(out.value)) {
    out.message = "non-finite objective at the starting point";
    return out;
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  bool reset_once = false;
  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    if (out.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      out.converged = true;
      out.message = "gradient below tolerance";
      return out;
    }
    Eigen::VectorXd dir = -h * out.gradient;
    double slope = dir.dot(out.gradient);
    if (!(slope < 0.0)) {
      h.setIdentity();
      dir = -out.gradient;
      slope = dir.dot(out.gradient);
    }
    const double initial = scaled ? 1.0 : std::min(1.0, 1.0 / out.gradient.lpNorm<Eigen::Infinity>());
    LineSearch search(f, out.x, dir, out.value, slope);
    const bool ok = search.run(initial);
    out.evaluations += search.evaluations();
    if (!ok) {
      if (search.step() > 0.0 && search.value() < out.value) {
        // take the improvement but restart the curvature model
        out.x = search.x();
        out.gradient = search.gradient();
        out.value = search.value();
        h.setIdentity();
        scaled = false;
        continue;
      }
      if (!reset_once && !h.isIdentity()) {
        h.setIdentity();
        scaled = false;
        reset_once = true;
        continue;
      }
      // no descent possible along the gradient: accept if the predicted gain is negligible
      out.converged = std::abs(slope) <= options.rel_tol * (std::abs(out.value) + 1.0);
      out.message = out.converged ? "no further decrease possible" : "line search failed";
      return out;
    }
    reset_once = false;
    const Eigen::VectorXd s = search.x() - out.x;
    const Eigen::VectorXd y = search.gradient() - out.gradient;
    const double previous = out.value;
    out.x = search.x();
    out.gradient = search.gradient();
    out.value = search.value();

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * y;
      h += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
    if (std::abs(previous - out.value) < options.rel_tol * (std::abs(previous) + options.rel_tol)) {
      out.converged = true;
      out.message = "relative objective change below tolerance";
      ++out.iterations;
      return out;
    }
  }
  out.message = "iteration limit reached";
  out.converged = out.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol;
  return out;
}

}  // namespace msgam
