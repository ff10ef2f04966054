#include "msgam/objective.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "msgam/error.hpp"
#include "msgam/hmm.hpp"

namespace msgam {

PenalizedObjective::PenalizedObjective(const MSGAMSpec& spec, const TimeSeriesData& data, SmoothingVector lambda,
                                       std::span<const std::uint8_t> extra_missing)
    : spec_(spec), lambda_(std::move(lambda)), y_(data.y), mask_(combined_mask(data, extra_missing)),
      design_(spec, data.x) {
  if (lambda_.n_states() != spec.n_states || lambda_.n_terms() != spec.n_terms()) {
    throw InputError("smoothing vector must be " + std::to_string(spec.n_states) + " x " +
                     std::to_string(spec.n_terms()));
  }
  validate_response(spec.family, data);
  y_constant_.resize(y_.size());
  for (std::size_t t = 0; t < y_.size(); ++t) {
    y_constant_[t] = mask_[t] ? 0.0 : spec.family.response_constant(y_[t]);
  }
  for (const Term& term : spec.terms) {
    penalties_.push_back(term.kind == TermKind::smooth ? penalty_matrix(term.basis.n_basis(), spec.penalty_order)
                                                       : PenaltyMatrix{});
  }
  Eigen::Index pos = 0;
  for (int i = 0; i < spec.n_states; ++i) {
    ++pos;
    for (int p = 0; p < spec.n_terms(); ++p) {
      slots_.push_back({pos, p, i});
      pos += spec.terms[static_cast<std::size_t>(p)].n_free();
    }
  }
}

Eigen::MatrixXd PenalizedObjective::log_densities(const MSGAMParams& params, Eigen::MatrixXd* d_eta,
                                                  Eigen::MatrixXd* d_log_phi) const {
  const Eigen::MatrixXd eta = predictor_matrix(spec_, params, design_);
  const Eigen::Index T = eta.rows();
  const int n = spec_.n_states;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, n);
  if (d_eta) d_eta->setZero(T, n);
  if (d_log_phi) d_log_phi->setZero(T, n);
  for (int i = 0; i < n; ++i) {
    const Family::DispersionTerms disp = spec_.family.dispersion_terms(params.dispersions[i]);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto s = static_cast<std::size_t>(t);
      if (mask_[s]) continue;
      const DensityTerms d = spec_.family.terms(y_[s], y_constant_[s], eta(t, i), disp);
      out(t, i) = d.log_density;
      if (d_eta) (*d_eta)(t, i) = d.d_eta;
      if (d_log_phi) (*d_log_phi)(t, i) = d.d_log_phi;
    }
  }
  return out;
}

double PenalizedObjective::loglik(const Eigen::VectorXd& theta) const {
  MSGAMParams params;
  try {
    params = unpack(spec_, theta);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::MatrixXd logd = log_densities(params, nullptr, nullptr);
  if (!logd.allFinite()) return -std::numeric_limits<double>::infinity();
  const double ll = forward_loglik(params.chain, logd, mask_).log_likelihood;
  return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
}

double PenalizedObjective::penalty(const Eigen::VectorXd& theta) const {
  double total = 0.0;
  for (const Slot& slot : slots_) {
    const Term& term = spec_.terms[static_cast<std::size_t>(slot.term)];
    const double lam = lambda_(slot.state, slot.term);
    if (term.kind != TermKind::smooth || lam == 0.0) continue;
    const int K = term.basis.n_basis();
    const int center = term.basis.center_index();
    Eigen::VectorXd full = Eigen::VectorXd::Zero(K);
    for (int k = 0, f = 0; k < K; ++k) {
      if (k != center) full[k] = theta[slot.offset + f++];
    }
    total += 0.5 * lam * penalties_[static_cast<std::size_t>(slot.term)].quadratic_form(full);
  }
  return total;
}

Eigen::VectorXd PenalizedObjective::penalty_gradient(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  for (const Slot& slot : slots_) {
    const Term& term = spec_.terms[static_cast<std::size_t>(slot.term)];
    const double lam = lambda_(slot.state, slot.term);
    if (term.kind != TermKind::smooth || lam == 0.0) continue;
    const int K = term.basis.n_basis();
    const int center = term.basis.center_index();
    Eigen::VectorXd full = Eigen::VectorXd::Zero(K);
    for (int k = 0, f = 0; k < K; ++k) {
      if (k != center) full[k] = theta[slot.offset + f++];
    }
    const Eigen::VectorXd g = lam * (penalties_[static_cast<std::size_t>(slot.term)].matrix * full);
    for (int k = 0, f = 0; k < K; ++k) {
      if (k != center) grad[slot.offset + f++] = g[k];
    }
  }
  return grad;
}

Eigen::MatrixXd PenalizedObjective::penalty_hessian() const {
  const int d = dimension();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (const Slot& slot : slots_) {
    const Term& term = spec_.terms[static_cast<std::size_t>(slot.term)];
    if (term.kind != TermKind::smooth) continue;
    const int K = term.basis.n_basis();
    const int center = term.basis.center_index();
    const Eigen::MatrixXd& m = penalties_[static_cast<std::size_t>(slot.term)].matrix;
    const double lam = lambda_(slot.state, slot.term);
    for (int a = 0, fa = 0; a < K; ++a) {
      if (a == center) continue;
      for (int b = 0, fb = 0; b < K; ++b) {
        if (b == center) continue;
        h(slot.offset + fa, slot.offset + fb) = lam * m(a, b);
        ++fb;
      }
      ++fa;
    }
  }
  return h;
}

ObjectiveEvaluation PenalizedObjective::evaluate(const Eigen::VectorXd& theta) const {
  const double ll = loglik(theta);
  const double value = -ll + penalty(theta);
  if (!std::isfinite(value)) return {kNonFinitePenalty, false};
  return {value, true};
}

double PenalizedObjective::loglik_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& gradient) const {
  gradient.setZero(theta.size());
  MSGAMParams params;
  try {
    params = unpack(spec_, theta);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
  const int n = spec_.n_states;
  Eigen::MatrixXd d_eta;
  Eigen::MatrixXd d_log_phi;
  const Eigen::MatrixXd logd = log_densities(params, &d_eta, &d_log_phi);
  if (!logd.allFinite()) return -std::numeric_limits<double>::infinity();
  const ForwardBackward fb = forward_backward(params.chain, logd, mask_);
  if (!std::isfinite(fb.log_likelihood)) return -std::numeric_limits<double>::infinity();

  // d logL / d eta(t, i)
  const Eigen::MatrixXd s = fb.d_log_density.cwiseProduct(d_eta);
  const Eigen::Index T = s.rows();
  Eigen::Index pos = 0;
  std::size_t slot_index = 0;
  for (int i = 0; i < n; ++i) {
    gradient[pos++] = s.col(i).sum();
    for (int p = 0; p < spec_.n_terms(); ++p, ++slot_index) {
      const Term& term = spec_.terms[static_cast<std::size_t>(p)];
      if (term.kind == TermKind::linear) {
        const auto& z = design_.standardized(p);
        double g = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) g += s(t, i) * z[static_cast<std::size_t>(t)];
        gradient[pos++] = g;
        continue;
      }
      const int K = term.basis.n_basis();
      const int center = term.basis.center_index();
      Eigen::VectorXd full = Eigen::VectorXd::Zero(K);
      const auto& windows = design_.windows(p);
      for (Eigen::Index t = 0; t < T; ++t) {
        const double st = s(t, i);
        if (st == 0.0) continue;
        const BasisWindow& w = windows[static_cast<std::size_t>(t)];
        for (int k = 0; k < 4; ++k) full[w.first + k] += st * w.values[static_cast<std::size_t>(k)];
      }
      for (int k = 0; k < K; ++k) {
        if (k != center) gradient[pos++] = full[k];
      }
    }
  }
  if (spec_.family.has_dispersion()) {
    for (int i = 0; i < n; ++i) gradient[pos++] = fb.d_log_density.col(i).dot(d_log_phi.col(i));
  }

  Eigen::MatrixXd d_tpm = fb.d_tpm;
  const Eigen::MatrixXd& tpm = params.chain.tpm;
  if (spec_.init_mode == InitMode::stationary && n > 1) {
    // delta (I - Gamma + U) = 1  =>  d delta = delta dGamma A^{-1}
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - tpm + Eigen::MatrixXd::Ones(n, n);
    const Eigen::VectorXd ag = a.partialPivLu().solve(fb.d_init);
    d_tpm.noalias() += params.chain.init * ag.transpose();
  }
  for (int i = 0; i < n; ++i) {
    const double mean = tpm.row(i).dot(d_tpm.row(i));
    for (int j = 0; j < n; ++j) {
      if (j != i) gradient[pos++] = tpm(i, j) * (d_tpm(i, j) - mean);
    }
  }
  if (spec_.init_mode == InitMode::estimated) {
    const Eigen::VectorXd& delta = params.chain.init;
    const double mean = delta.dot(fb.d_init);
    for (int j = 1; j < n; ++j) gradient[pos++] = delta[j] * (fb.d_init[j] - mean);
  }
  return fb.log_likelihood;
}

ObjectiveEvaluation PenalizedObjective::value_and_gradient(const Eigen::VectorXd& theta,
                                                           Eigen::VectorXd& gradient) const {
  const double ll = loglik_and_gradient(theta, gradient);
  const double value = -ll + penalty(theta);
  if (!std::isfinite(value) || !gradient.allFinite()) {
    gradient.setZero(theta.size());
    return {kNonFinitePenalty, false};
  }
  gradient = -gradient + penalty_gradient(theta);
  return {value, true};
}

double penalized_negloglik(const Eigen::VectorXd& theta, const MSGAMSpec& spec, const TimeSeriesData& data,
                           const SmoothingVector& lambda, std::span<const std::uint8_t> extra_missing) {
  return PenalizedObjective(spec, data, lambda, extra_missing)(theta);
}

Eigen::VectorXd finite_difference_gradient(const PenalizedObjective& objective, const Eigen::VectorXd& theta,
                                           double step_scale) {
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd x = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double h = step_scale * 1e-6 * (1.0 + std::abs(theta[k]));
    x[k] = theta[k] + h;
    const double up = objective(x);
    x[k] = theta[k] - h;
    const double down = objective(x);
    x[k] = theta[k];
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace msgam
