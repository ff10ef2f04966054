#include "msgam/hmm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "msgam/error.hpp"

namespace msgam {

namespace {

bool is_missing(std::span<const std::uint8_t> missing, Eigen::Index t) {
  return !missing.empty() && missing[static_cast<std::size_t>(t)] != 0;
}

void check_shapes(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                  std::span<const std::uint8_t> missing) {
  if (log_densities.cols() != chain.n_states()) {
    throw InputError("state density matrix has " + std::to_string(log_densities.cols()) + " columns, chain has " +
                     std::to_string(chain.n_states()) + " states");
  }
  if (!missing.empty() && static_cast<Eigen::Index>(missing.size()) != log_densities.rows()) {
    throw InputError("missing mask length does not match the series length");
  }
  for (Eigen::Index t = 0; t < log_densities.rows(); ++t) {
    if (is_missing(missing, t)) continue;
    for (Eigen::Index j = 0; j < log_densities.cols(); ++j) {
      if (std::isnan(log_densities(t, j))) {
        throw NumericalError("NaN state density at time index " + std::to_string(t + 1));
      }
    }
  }
}

}  // namespace

InitMode parse_init_mode(std::string_view name) {
  if (name == "stationary") return InitMode::stationary;
  if (name == "estimated") return InitMode::estimated;
  throw InputError("unknown init_mode '" + std::string(name) + "'");
}

std::string_view init_mode_name(InitMode mode) { return mode == InitMode::stationary ? "stationary" : "estimated"; }

MarkovChain MarkovChain::stationary(const Eigen::MatrixXd& tpm) {
  return MarkovChain{tpm, stationary_distribution(tpm), InitMode::stationary};
}

void MarkovChain::validate() const {
  const Eigen::Index n = tpm.rows();
  if (n < 1 || tpm.cols() != n || init.size() != n) {
    throw InputError("Markov chain dimensions are inconsistent");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((tpm.row(i).array() < 0.0).any() || (tpm.row(i).array() > 1.0).any() ||
        std::abs(tpm.row(i).sum() - 1.0) > 1e-12) {
      throw InputError("t.p.m. row " + std::to_string(i + 1) + " is not a probability vector");
    }
  }
  if ((init.array() < 0.0).any() || std::abs(init.sum() - 1.0) > 1e-12) {
    throw InputError("initial distribution is not a probability vector");
  }
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& tpm) {
  const Eigen::Index n = tpm.rows();
  if (n < 1 || tpm.cols() != n) {
    throw InputError("t.p.m. must be square");
  }
  // delta (I - Gamma + U) = 1
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - tpm + Eigen::MatrixXd::Ones(n, n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a.transpose());
  lu.setThreshold(1e-10);
  if (lu.rank() < n) {
    throw NumericalError("stationary distribution is not unique (reducible chain); use init_mode = estimated");
  }
  Eigen::VectorXd delta = lu.solve(Eigen::VectorXd::Ones(n));
  delta = delta.cwiseMax(0.0);
  return delta / delta.sum();
}

ForwardResult forward_loglik(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                             std::span<const std::uint8_t> missing) {
  check_shapes(chain, log_densities, missing);
  const Eigen::Index T = log_densities.rows();
  const Eigen::Index n = chain.n_states();
  ForwardResult out;
  out.log_scale = Eigen::VectorXd::Zero(T);
  out.forward = Eigen::MatrixXd::Constant(T, n, 1.0 / static_cast<double>(n));
  bool all_missing = !missing.empty();
  for (Eigen::Index t = 0; t < T && all_missing; ++t) all_missing = is_missing(missing, t);
  if (all_missing) {
    return out;
  }
  const Eigen::MatrixXd& tpm = chain.tpm;
  std::vector<double> phi(chain.init.data(), chain.init.data() + n);
  std::vector<double> a(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double v = 0.0;
      if (t == 0) {
        v = phi[static_cast<std::size_t>(j)];
      } else {
        for (Eigen::Index i = 0; i < n; ++i) v += phi[static_cast<std::size_t>(i)] * tpm(i, j);
      }
      a[static_cast<std::size_t>(j)] = v;
    }
    double shift = 0.0;
    if (!is_missing(missing, t)) {
      shift = log_densities.row(t).maxCoeff();
      if (shift == -std::numeric_limits<double>::infinity()) {
        out.log_likelihood = -std::numeric_limits<double>::infinity();
        return out;
      }
      for (Eigen::Index j = 0; j < n; ++j) a[static_cast<std::size_t>(j)] *= std::exp(log_densities(t, j) - shift);
    }
    double c = 0.0;
    for (double v : a) c += v;
    if (!(c > 0.0)) {
      out.log_likelihood = -std::numeric_limits<double>::infinity();
      return out;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      phi[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(j)] / c;
      out.forward(t, j) = phi[static_cast<std::size_t>(j)];
    }
    out.log_scale[t] = std::log(c) + shift;
    total += out.log_scale[t];
  }
  out.log_likelihood = total;
  return out;
}

ForwardBackward forward_backward(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                                 std::span<const std::uint8_t> missing) {
  const Eigen::Index T = log_densities.rows();
  const Eigen::Index n = chain.n_states();
  ForwardBackward out;
  out.d_log_density = Eigen::MatrixXd::Zero(T, n);
  out.d_tpm = Eigen::MatrixXd::Zero(n, n);
  out.d_init = Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd& tpm = chain.tpm;

  // time-major buffers: q_t = exp(l_t - max l_t), phi_t normalized forward
  std::vector<double> q(static_cast<std::size_t>(T * n));
  std::vector<double> phi(static_cast<std::size_t>(T * n));
  std::vector<double> c(static_cast<std::size_t>(T));
  std::vector<double> a(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    double* qt = &q[static_cast<std::size_t>(t * n)];
    if (is_missing(missing, t)) {
      std::fill(qt, qt + n, 1.0);
    } else {
      const double shift = log_densities.row(t).maxCoeff();
      if (!std::isfinite(shift)) {
        out.log_likelihood = shift == std::numeric_limits<double>::infinity()
                                 ? std::numeric_limits<double>::quiet_NaN()
                                 : -std::numeric_limits<double>::infinity();
        return out;
      }
      for (Eigen::Index j = 0; j < n; ++j) qt[j] = std::exp(log_densities(t, j) - shift);
      total += shift;
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double v = 0.0;
      if (t == 0) {
        v = chain.init[j];
      } else {
        const double* prev = &phi[static_cast<std::size_t>((t - 1) * n)];
        for (Eigen::Index i = 0; i < n; ++i) v += prev[i] * tpm(i, j);
      }
      a[static_cast<std::size_t>(j)] = v * qt[j];
      sum += a[static_cast<std::size_t>(j)];
    }
    if (!(sum > 0.0)) {
      out.log_likelihood = -std::numeric_limits<double>::infinity();
      return out;
    }
    c[static_cast<std::size_t>(t)] = sum;
    double* pt = &phi[static_cast<std::size_t>(t * n)];
    for (Eigen::Index j = 0; j < n; ++j) pt[j] = a[static_cast<std::size_t>(j)] / sum;
    total += std::log(sum);
  }
  out.log_likelihood = total;

  std::vector<double> b(static_cast<std::size_t>(n), 1.0);
  std::vector<double> qb(static_cast<std::size_t>(n));
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const double* qt = &q[static_cast<std::size_t>(t * n)];
    const double* pt = &phi[static_cast<std::size_t>(t * n)];
    if (!is_missing(missing, t)) {
      for (Eigen::Index j = 0; j < n; ++j) out.d_log_density(t, j) = pt[j] * b[static_cast<std::size_t>(j)];
    }
    const double inv_c = 1.0 / c[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < n; ++j) qb[static_cast<std::size_t>(j)] = qt[j] * b[static_cast<std::size_t>(j)] * inv_c;
    if (t > 0) {
      const double* prev = &phi[static_cast<std::size_t>((t - 1) * n)];
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) out.d_tpm(i, j) += prev[i] * qb[static_cast<std::size_t>(j)];
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        double v = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) v += tpm(i, j) * qb[static_cast<std::size_t>(j)];
        b[static_cast<std::size_t>(i)] = v;
      }
    } else {
      for (Eigen::Index j = 0; j < n; ++j) out.d_init[j] = qb[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

std::vector<int> viterbi_decode(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                                std::span<const std::uint8_t> missing) {
  check_shapes(chain, log_densities, missing);
  const Eigen::Index T = log_densities.rows();
  const Eigen::Index n = chain.n_states();
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  if (T == 0) return path;
  const Eigen::MatrixXd log_tpm = chain.tpm.array().log().matrix();
  Eigen::MatrixXi back(T, n);
  Eigen::VectorXd score(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    score[j] = std::log(chain.init[j]) + (is_missing(missing, 0) ? 0.0 : log_densities(0, j));
  }
  Eigen::VectorXd next(n);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = score[i] + log_tpm(i, j);
        if (v > best) {
          best = v;
          arg = static_cast<int>(i);
        }
      }
      back(t, j) = arg;
      next[j] = best + (is_missing(missing, t) ? 0.0 : log_densities(t, j));
    }
    score.swap(next);
  }
  int state = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (score[j] > best) {
      best = score[j];
      state = static_cast<int>(j);
    }
  }
  path[static_cast<std::size_t>(T - 1)] = state;
  for (Eigen::Index t = T - 1; t > 0; --t) {
    state = back(t, state);
    path[static_cast<std::size_t>(t - 1)] = state;
  }
  return path;
}

}  // namespace msgam
