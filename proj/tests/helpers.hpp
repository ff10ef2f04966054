#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "msgam/experiments.hpp"
#include "msgam/model.hpp"
#include "msgam/rng.hpp"

namespace testing {

/// Random row-stochastic matrix with entries bounded away from zero.
inline Eigen::MatrixXd random_tpm(int n, msgam::Philox& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = u(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

inline Eigen::VectorXd random_simplex(int n, msgam::Philox& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v / v.sum();
}

/// Covariates uniform on [-3, 3].
inline Eigen::MatrixXd uniform_covariates(int T, int P, std::uint64_t seed) {
  msgam::Philox rng(seed, 77);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Eigen::MatrixXd x(T, P);
  for (int t = 0; t < T; ++t) {
    for (int p = 0; p < P; ++p) x(t, p) = u(rng);
  }
  return x;
}

inline msgam::TimeSeriesData make_data(std::vector<double> y, Eigen::MatrixXd x) {
  msgam::TimeSeriesData d;
  d.y = std::move(y);
  d.x = std::move(x);
  for (Eigen::Index p = 0; p < d.x.cols(); ++p) d.covariate_names.push_back("x" + std::to_string(p + 1));
  return d;
}

/// N = 1 Poisson data with log mean a + b * x.
inline msgam::TimeSeriesData poisson_linear_data(int T, double a, double b, std::uint64_t seed) {
  const Eigen::MatrixXd x = uniform_covariates(T, 1, seed);
  msgam::Philox rng(seed, 78);
  std::vector<double> y(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    std::poisson_distribution<int> pois(std::exp(a + b * x(t, 0)));
    y[static_cast<std::size_t>(t)] = pois(rng);
  }
  return make_data(std::move(y), x);
}

}  // namespace testing
