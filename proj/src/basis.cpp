#include "msgam/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "msgam/error.hpp"

namespace msgam {

std::pair<Standardizer, std::vector<double>> standardize(std::span<const double> values) {
  if (values.size() < 2) {
    throw InputError("standardize: need at least two values");
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    throw InputError("standardize: degenerate covariate (zero variance)");
  }
  Standardizer s{mean, sd};
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double v) { return s.apply(v); });
  return {s, std::move(out)};
}

SplineBasisSpec build_basis(int n_basis, double lower, double upper) {
  if (n_basis < 5) {
    throw InputError("build_basis: K must be at least 5, got " + std::to_string(n_basis));
  }
  if (n_basis % 2 == 0) {
    throw InputError("build_basis: K must be odd, got " + std::to_string(n_basis));
  }
  if (!(upper > lower) || !std::isfinite(lower) || !std::isfinite(upper)) {
    throw InputError("build_basis: degenerate domain");
  }
  SplineBasisSpec spec;
  spec.n_basis_ = n_basis;
  spec.lower_ = lower;
  spec.upper_ = upper;
  const int intervals = n_basis - SplineBasisSpec::degree();
  const double h = (upper - lower) / intervals;
  spec.knots_.resize(static_cast<std::size_t>(n_basis + SplineBasisSpec::degree() + 1));
  for (std::size_t j = 0; j < spec.knots_.size(); ++j) {
    spec.knots_[j] = lower + (static_cast<double>(j) - SplineBasisSpec::degree()) * h;
  }
  // pin the domain ends exactly
  spec.knots_[SplineBasisSpec::degree()] = lower;
  spec.knots_[static_cast<std::size_t>(n_basis)] = upper;
  return spec;
}

BasisWindow SplineBasisSpec::window(double x) const noexcept {
  constexpr int p = degree();
  x = std::clamp(x, lower_, upper_);
  const int last = n_basis_ - p - 1;
  int j = static_cast<int>(std::floor((x - lower_) / spacing()));
  j = std::clamp(j, 0, last);
  // guard against rounding at the knot boundaries
  while (j > 0 && x < knots_[static_cast<std::size_t>(j + p)]) --j;
  while (j < last && x >= knots_[static_cast<std::size_t>(j + p + 1)]) ++j;

  const int m = j + p;  // x lies in [t_m, t_{m+1})
  std::array<double, p + 1> left{};
  std::array<double, p + 1> right{};
  BasisWindow w;
  w.first = j;
  w.values[0] = 1.0;
  for (int r = 1; r <= p; ++r) {
    left[static_cast<std::size_t>(r)] = x - knots_[static_cast<std::size_t>(m + 1 - r)];
    right[static_cast<std::size_t>(r)] = knots_[static_cast<std::size_t>(m + r)] - x;
    double saved = 0.0;
    for (int s = 0; s < r; ++s) {
      const double denom = right[static_cast<std::size_t>(s + 1)] + left[static_cast<std::size_t>(r - s)];
      const double temp = w.values[static_cast<std::size_t>(s)] / denom;
      w.values[static_cast<std::size_t>(s)] = saved + right[static_cast<std::size_t>(s + 1)] * temp;
      saved = left[static_cast<std::size_t>(r - s)] * temp;
    }
    w.values[static_cast<std::size_t>(r)] = saved;
  }
  return w;
}

Eigen::VectorXd SplineBasisSpec::eval(double x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_basis_);
  const BasisWindow w = window(x);
  for (int k = 0; k < 4; ++k) {
    out[w.first + k] = w.values[static_cast<std::size_t>(k)];
  }
  return out;
}

PenaltyMatrix penalty_matrix(int n_basis, int order) {
  if (order < 1 || order > n_basis - 1) {
    throw InputError("penalty_matrix: difference order " + std::to_string(order) + " out of range for K = " +
                     std::to_string(n_basis));
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(n_basis, n_basis);
  for (int r = 0; r < order; ++r) {
    const Eigen::Index rows = d.rows() - 1;
    d = (d.bottomRows(rows) - d.topRows(rows)).eval();
  }
  return PenaltyMatrix{order, d.transpose() * d};
}

double difference_penalty(std::span<const double> coeffs, int order) {
  std::vector<double> diff(coeffs.begin(), coeffs.end());
  for (int r = 0; r < order && !diff.empty(); ++r) {
    for (std::size_t k = 0; k + 1 < diff.size(); ++k) {
      diff[k] = diff[k + 1] - diff[k];
    }
    diff.pop_back();
  }
  double sum = 0.0;
  for (double v : diff) sum += v * v;
  return sum;
}

}  // namespace msgam
