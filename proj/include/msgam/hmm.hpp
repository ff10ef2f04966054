#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace msgam {

enum class InitMode { stationary, estimated };

InitMode parse_init_mode(std::string_view name);
std::string_view init_mode_name(InitMode mode);

/// Missingness flags, one per time point; nonzero means missing. An empty
/// mask means nothing is missing.
using MissingMask = std::vector<std::uint8_t>;

/// Homogeneous Markov chain: row-stochastic t.p.m. and initial distribution.
struct MarkovChain {
  Eigen::MatrixXd tpm;
  Eigen::VectorXd init;
  InitMode init_mode = InitMode::stationary;

  [[nodiscard]] int n_states() const noexcept { return static_cast<int>(tpm.rows()); }

  /// Chain with the stationary distribution of `tpm` as its initial law.
  static MarkovChain stationary(const Eigen::MatrixXd& tpm);

  /// Throws InputError when rows or the initial law are not probability vectors.
  void validate() const;
};

/// delta with delta * tpm = delta and sum(delta) = 1. Throws NumericalError
/// when the solution is not unique (reducible chain).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& tpm);

struct ForwardResult {
  double log_likelihood = 0.0;
  Eigen::VectorXd log_scale;  ///< log of the per-step normalizing constants
  Eigen::MatrixXd forward;    ///< T x N normalized forward probabilities
};

/// Scaled forward recursion on a T x N matrix of state log densities.
/// Missing rows contribute a factor of one. NaN densities throw NumericalError
/// naming the time index.
ForwardResult forward_loglik(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                             std::span<const std::uint8_t> missing = {});

/// Log-likelihood and its derivatives with respect to the log densities,
/// the t.p.m. entries and the initial distribution.
struct ForwardBackward {
  double log_likelihood = 0.0;
  Eigen::MatrixXd d_log_density;  ///< T x N state posteriors (0 where missing)
  Eigen::MatrixXd d_tpm;          ///< N x N
  Eigen::VectorXd d_init;         ///< N
};

/// Same likelihood as forward_loglik, plus a backward pass for derivatives.
/// Does not validate inputs; a zero-likelihood step yields -inf.
ForwardBackward forward_backward(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                                 std::span<const std::uint8_t> missing = {});

/// Most probable state sequence (0-based labels); ties resolve to the lower
/// state index.
std::vector<int> viterbi_decode(const MarkovChain& chain, const Eigen::MatrixXd& log_densities,
                                std::span<const std::uint8_t> missing = {});

}  // namespace msgam
