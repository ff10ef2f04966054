#include "msgam/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "msgam/error.hpp"
#include "msgam/rng.hpp"

namespace msgam {

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

std::vector<double> observed_responses(const TimeSeriesData& data, std::span<const std::uint8_t> extra_missing) {
  const MissingMask mask = combined_mask(data, extra_missing);
  std::vector<double> out;
  for (int t = 0; t < data.size(); ++t) {
    if (!mask[static_cast<std::size_t>(t)]) out.push_back(data.y[static_cast<std::size_t>(t)]);
  }
  return out;
}

// Index of the first state whose dispersion has collapsed, or -1.
int collapsed_state(const MSGAMSpec& spec, const MSGAMParams& params, const Moments& raw, double ratio) {
  if (ratio <= 0.0 || raw.sd <= 0.0) return -1;
  for (int i = 0; i < spec.n_states; ++i) {
    const double phi = params.dispersions[i];
    if (spec.family.kind() == FamilyKind::normal && phi < ratio * raw.sd) return i;
    if (spec.family.kind() == FamilyKind::gamma && raw.mean > 0.0 && 1.0 / std::sqrt(phi) < ratio * raw.sd / raw.mean) {
      return i;
    }
  }
  return -1;
}

// Non-identity state orders tried as extra starts: all of them up to three
// states, cyclic shifts beyond.
std::vector<std::vector<int>> state_permutations(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (n <= 3) {
    while (std::next_permutation(order.begin(), order.end())) out.push_back(order);
  } else {
    for (int shift = 1; shift < n; ++shift) {
      for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = (i + shift) % n;
      out.push_back(order);
    }
  }
  return out;
}

bool same_for_all_states(const SmoothingVector& lambda) {
  for (int i = 1; i < lambda.n_states(); ++i) {
    if (lambda.values().row(i) != lambda.values().row(0)) return false;
  }
  return true;
}

// Start from one-state fits to a random contiguous segmentation of the
// series, with segments assigned to states in turn; nullopt when a segment
// fit fails.
std::optional<Eigen::VectorXd> segment_start(const MSGAMSpec& spec, const TimeSeriesData& data,
                                             const SmoothingVector& lambda, std::span<const std::uint8_t> extra_missing,
                                             Philox& rng) {
  const int n = spec.n_states;
  const int t_max = data.size();
  const double mean_length = std::clamp(t_max / (4.0 * n), 2.0, 15.0);
  std::geometric_distribution<int> extra(1.0 / mean_length);
  std::vector<int> label(static_cast<std::size_t>(t_max));
  int state = std::uniform_int_distribution<int>(0, n - 1)(rng);
  for (int t = 0; t < t_max;) {
    const int length = 1 + extra(rng);
    for (int k = 0; k < length && t < t_max; ++k) label[static_cast<std::size_t>(t++)] = state;
    state = (state + 1) % n;
  }

  MSGAMSpec single = spec;
  single.n_states = 1;
  FitOptions one;
  one.n_restarts = 1;
  one.compute_edf = false;
  MSGAMParams params = make_params(spec, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n), 0.9);
  for (int i = 0; i < n; ++i) {
    MissingMask mask(static_cast<std::size_t>(t_max));
    for (int t = 0; t < t_max; ++t) {
      const bool outside = !extra_missing.empty() && extra_missing[static_cast<std::size_t>(t)];
      mask[static_cast<std::size_t>(t)] = (outside || label[static_cast<std::size_t>(t)] != i) ? 1 : 0;
    }
    SmoothingVector row(1, spec.n_terms());
    for (int p = 0; p < spec.n_terms(); ++p) row(0, p) = lambda(i, p);
    FitResult r;
    try {
      r = fit(single, data, row, one, mask);
    } catch (const InputError&) {
      return std::nullopt;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
    if (!r.converged) return std::nullopt;
    params.intercepts[i] = r.params.intercepts[0];
    params.dispersions[i] = r.params.dispersions[0];
    params.coeffs[static_cast<std::size_t>(i)] = r.params.coeffs[0];
  }
  return pack(spec, params);
}

}  // namespace

Eigen::VectorXd default_start(const MSGAMSpec& spec, const TimeSeriesData& data,
                              std::span<const std::uint8_t> extra_missing) {
  const MissingMask mask = combined_mask(data, extra_missing);
  std::vector<double> observed;
  std::vector<double> link_scale;
  for (int t = 0; t < data.size(); ++t) {
    if (mask[static_cast<std::size_t>(t)]) continue;
    const double y = data.y[static_cast<std::size_t>(t)];
    observed.push_back(y);
    switch (spec.family.kind()) {
      case FamilyKind::poisson:
        link_scale.push_back(std::log(y + 0.5));
        break;
      case FamilyKind::gamma:
        link_scale.push_back(std::log(y));
        break;
      case FamilyKind::normal:
        link_scale.push_back(y);
        break;
    }
  }
  const Moments raw = moments(observed);
  const Moments linked = moments(link_scale);
  const int n = spec.n_states;

  double center = linked.mean;
  if (spec.family.kind() != FamilyKind::normal && raw.mean > 0.0) center = std::log(raw.mean);
  const double spread = linked.sd > 0.0 ? linked.sd : 1.0;
  Eigen::VectorXd intercepts(n);
  for (int i = 0; i < n; ++i) {
    const double offset = n > 1 ? (2.0 * i / (n - 1) - 1.0) * 0.5 * spread : 0.0;
    intercepts[i] = center + offset;
  }
  Eigen::VectorXd dispersions = Eigen::VectorXd::Ones(n);
  if (spec.family.kind() == FamilyKind::normal) {
    dispersions.setConstant(raw.sd > 0.0 ? raw.sd : 1.0);
  } else if (spec.family.kind() == FamilyKind::gamma) {
    const double var = raw.sd * raw.sd;
    dispersions.setConstant(var > 0.0 ? raw.mean * raw.mean / var : 1.0);
  }
  return pack(spec, make_params(spec, intercepts, dispersions, 0.9));
}

FitResult fit(const MSGAMSpec& spec, const TimeSeriesData& data, const SmoothingVector& lambda,
              const FitOptions& options, std::span<const std::uint8_t> extra_missing) {
  const PenalizedObjective objective(spec, data, lambda, extra_missing);
  const Eigen::VectorXd base = options.start ? *options.start : default_start(spec, data, extra_missing);
  if (base.size() != objective.dimension()) {
    throw InputError("starting vector has length " + std::to_string(base.size()) + ", expected " +
                     std::to_string(objective.dimension()));
  }

  GradientFunction f;
  if (options.gradient == GradientMode::analytic) {
    f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return objective.value_and_gradient(x, g).value; };
  } else {
    f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      const ObjectiveEvaluation e = objective.evaluate(x);
      g = e.finite ? finite_difference_gradient(objective, x) : Eigen::VectorXd::Zero(x.size());
      return e.value;
    };
  }

  const Moments raw_moments = moments(observed_responses(data, extra_missing));
  // 2 = converged and proper, 1 = converged but collapsed, 0 = not converged
  auto rank = [&](const OptimizerResult& r) {
    if (!r.converged || !(r.value < kNonFinitePenalty)) return 0;
    return collapsed_state(spec, unpack(spec, r.x), raw_moments, options.collapse_ratio) < 0 ? 2 : 1;
  };

  const int starts = std::max(1, options.n_restarts);
  OptimizerResult best;
  best.value = std::numeric_limits<double>::infinity();
  int best_rank = -1;
  int iterations = 0;
  for (int r = 0; r < starts; ++r) {
    Eigen::VectorXd x0 = base;
    if (r > 0) {
      Philox rng = Philox::for_job(options.seed, static_cast<std::uint64_t>(r));
      std::optional<Eigen::VectorXd> segmented;
      if (options.segment_starts && spec.n_states > 1 && !options.start) {
        segmented = segment_start(spec, data, lambda, extra_missing, rng);
      }
      if (segmented) {
        x0 = std::move(*segmented);
      } else {
        std::normal_distribution<double> noise(0.0, options.restart_sd);
        for (Eigen::Index k = 0; k < x0.size(); ++k) x0[k] += noise(rng);
      }
    }
    OptimizerResult res = minimize_bfgs(f, std::move(x0), options.optimizer);
    iterations += res.iterations;
    const int res_rank = rank(res);
    if (res_rank > best_rank || (res_rank == best_rank && res.value < best.value)) {
      best = std::move(res);
      best_rank = res_rank;
    }
  }

  int used = starts;
  if (options.permutation_starts && spec.n_states > 1 && best_rank > 0 && !same_for_all_states(lambda)) {
    const MSGAMParams found = unpack(spec, best.x);
    for (const std::vector<int>& order : state_permutations(spec.n_states)) {
      OptimizerResult res = minimize_bfgs(f, pack(spec, permute_states(found, order)), options.optimizer);
      iterations += res.iterations;
      ++used;
      const int res_rank = rank(res);
      if (res_rank > best_rank || (res_rank == best_rank && res.value < best.value)) {
        best = std::move(res);
        best_rank = res_rank;
      }
    }
  }

  FitResult out;
  out.raw_packed = best.x;
  out.converged = best_rank == 2;
  out.n_restarts_used = used;
  out.optimizer_iterations = iterations;
  out.message = best.message;
  if (best_rank == 1) {
    const int s = collapsed_state(spec, unpack(spec, best.x), raw_moments, options.collapse_ratio);
    out.message = "state " + std::to_string(s + 1) + " collapsed onto a few observations (dispersion " +
                  std::to_string(unpack(spec, best.x).dispersions[s]) + ")";
  }
  out.loglik_unpenalized = objective.loglik(best.x);
  out.loglik_penalized = out.loglik_unpenalized - objective.penalty(best.x);
  const MSGAMParams raw = unpack(spec, best.x);
  out.state_order.resize(static_cast<std::size_t>(spec.n_states));
  std::iota(out.state_order.begin(), out.state_order.end(), 0);
  if (options.sort_states) out.state_order = intercept_order(raw);
  out.params = permute_states(raw, out.state_order);
  out.lambda = permute_states(lambda, out.state_order);
  if (options.compute_edf && out.converged) {
    try {
      compute_edf(out, spec, data, lambda, extra_missing);
    } catch (const NumericalError& e) {
      out.converged = false;
      out.message = e.what();
    }
  }
  return out;
}

Eigen::MatrixXd numerical_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                                  const Eigen::VectorXd& x, double relative_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double step = relative_step * (1.0 + std::abs(x[k]));
    probe[k] = x[k] + step;
    const Eigen::VectorXd up = gradient(probe);
    probe[k] = x[k] - step;
    const Eigen::VectorXd down = gradient(probe);
    probe[k] = x[k];
    h.col(k) = (up - down) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

FisherInformation observed_fisher(const Eigen::VectorXd& theta, const MSGAMSpec& spec, const TimeSeriesData& data,
                                  const SmoothingVector& lambda, std::span<const std::uint8_t> extra_missing,
                                  double gradient_tolerance) {
  const PenalizedObjective objective(spec, data, lambda, extra_missing);
  const Eigen::Index n = theta.size();
  if (n != objective.dimension()) {
    throw InputError("parameter vector length does not match the model");
  }
  FisherInformation info;
  info.unpenalized.resize(n, n);
  info.penalized.resize(n, n);
  Eigen::VectorXd g(n);
  objective.value_and_gradient(theta, g);
  info.gradient_max_norm = g.lpNorm<Eigen::Infinity>();
  info.at_optimum = info.gradient_max_norm <= gradient_tolerance;

  Eigen::VectorXd probe = theta;
  Eigen::VectorXd g_up(n);
  Eigen::VectorXd g_down(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double step = 1e-5 * (1.0 + std::abs(theta[k]));
    probe[k] = theta[k] + step;
    objective.loglik_and_gradient(probe, g_up);
    const Eigen::VectorXd p_up = objective.penalty_gradient(probe);
    probe[k] = theta[k] - step;
    objective.loglik_and_gradient(probe, g_down);
    const Eigen::VectorXd p_down = objective.penalty_gradient(probe);
    probe[k] = theta[k];
    info.unpenalized.col(k) = -(g_up - g_down) / (2.0 * step);
    info.penalized.col(k) = info.unpenalized.col(k) + (p_up - p_down) / (2.0 * step);
  }
  info.unpenalized = 0.5 * (info.unpenalized + info.unpenalized.transpose()).eval();
  info.penalized = 0.5 * (info.penalized + info.penalized.transpose()).eval();
  if (!info.unpenalized.allFinite() || !info.penalized.allFinite()) {
    throw NumericalError("observed information has non-finite entries");
  }
  return info;
}

double effective_dof(const Eigen::MatrixXd& penalized_info, const Eigen::MatrixXd& unpenalized_info) {
  if (penalized_info.rows() != penalized_info.cols() || penalized_info.rows() != unpenalized_info.rows() ||
      unpenalized_info.rows() != unpenalized_info.cols()) {
    throw InputError("information matrices must be square and of equal size");
  }
  // at a local maximum of l_pen the penalized information is positive definite
  if (Eigen::LLT<Eigen::MatrixXd>(penalized_info).info() != Eigen::Success) {
    throw NumericalError("penalized information is not positive definite; the fit is not at a local maximum");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(penalized_info);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw NumericalError("penalized information is singular; try larger smoothing parameters or more restarts");
  }
  const double nu = lu.solve(unpenalized_info).trace();
  if (!std::isfinite(nu)) {
    throw NumericalError("effective degrees of freedom are not finite");
  }
  // eigenvalues of I_pen^{-1} I_unpen lie in [0, 1] when I_unpen is
  // positive semi-definite; anything outside means the likelihood curves the
  // wrong way at this point
  const auto dim = static_cast<double>(penalized_info.rows());
  if (nu < -1e-6 * dim || nu > dim * (1.0 + 1e-6)) {
    throw NumericalError("effective degrees of freedom " + std::to_string(nu) + " outside [0, " +
                         std::to_string(penalized_info.rows()) + "]; unpenalized information is indefinite");
  }
  return nu;
}

void compute_edf(FitResult& result, const MSGAMSpec& spec, const TimeSeriesData& data, const SmoothingVector& lambda,
                 std::span<const std::uint8_t> extra_missing) {
  const FisherInformation info = observed_fisher(result.raw_packed, spec, data, lambda, extra_missing);
  result.edf = effective_dof(info.penalized, info.unpenalized);
}

}  // namespace msgam
