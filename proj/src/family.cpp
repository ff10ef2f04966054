#include "msgam/family.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "msgam/error.hpp"

namespace msgam {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

Dispersion::Dispersion(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InputError("dispersion must be positive and finite");
  }
}

Family::Family(FamilyKind kind, Link link) : kind_(kind), link_(link) {
  const bool ok = (kind == FamilyKind::poisson && link == Link::log) ||
                  (kind == FamilyKind::normal && link == Link::identity) ||
                  (kind == FamilyKind::gamma && link == Link::log);
  if (!ok) {
    throw InputError("unsupported family/link combination: " + name() + "/" + link_name());
  }
}

Family::Family(FamilyKind kind) : Family(kind, kind == FamilyKind::normal ? Link::identity : Link::log) {}

double Family::inverse_link(double eta) const noexcept { return link_ == Link::log ? std::exp(eta) : eta; }

double Family::link_function(double mu) const {
  if (link_ == Link::log) {
    if (!(mu > 0.0)) throw InputError("log link requires a positive mean");
    return std::log(mu);
  }
  return mu;
}

bool Family::valid_response(double y) const noexcept {
  if (!std::isfinite(y)) return false;
  switch (kind_) {
    case FamilyKind::poisson:
      return y >= 0.0 && std::floor(y) == y;
    case FamilyKind::gamma:
      return y > 0.0;
    case FamilyKind::normal:
      return true;
  }
  return false;
}

double Family::response_constant(double y) const noexcept {
  switch (kind_) {
    case FamilyKind::poisson:
      return -std::lgamma(y + 1.0);
    case FamilyKind::gamma:
      return std::log(y);
    case FamilyKind::normal:
      return 0.0;
  }
  return 0.0;
}

Family::DispersionTerms Family::dispersion_terms(double phi) const noexcept {
  switch (kind_) {
    case FamilyKind::poisson:
      return {phi, 0.0, 0.0};
    case FamilyKind::gamma:
      return {phi, phi * std::log(phi) - std::lgamma(phi), std::log(phi) + 1.0 - boost::math::digamma(phi)};
    case FamilyKind::normal:
      return {phi, -std::log(phi) - kHalfLog2Pi, 0.0};
  }
  return {};
}

DensityTerms Family::terms(double y, double constant, double eta, const DispersionTerms& d) const noexcept {
  const double phi = d.phi;
  switch (kind_) {
    case FamilyKind::poisson: {
      const double mu = std::exp(eta);
      return {y * eta - mu + constant, y - mu, 0.0};
    }
    case FamilyKind::normal: {
      const double r = (y - eta) / phi;
      return {d.log_norm - 0.5 * r * r, r / phi, r * r - 1.0};
    }
    case FamilyKind::gamma: {
      // shape a, rate a / mu; constant = log y
      const double ratio = y * std::exp(-eta);
      const double logp = d.log_norm - phi * eta + (phi - 1.0) * constant - phi * ratio;
      const double dphi = phi * (d.score - eta + constant - ratio);
      return {logp, phi * (ratio - 1.0), dphi};
    }
  }
  return {0.0, 0.0, 0.0};
}

double Family::log_density(double y, double mu, Dispersion phi) const {
  if (!valid_response(y)) {
    throw InputError("response " + std::to_string(y) + " outside the support of the " + name() + " family");
  }
  if (link_ == Link::log && !(mu > 0.0)) {
    throw InputError("mean must be positive for the " + name() + " family");
  }
  switch (kind_) {
    case FamilyKind::poisson:
      return y * std::log(mu) - mu - std::lgamma(y + 1.0);
    case FamilyKind::normal: {
      const double r = (y - mu) / phi.value();
      return -kHalfLog2Pi - std::log(phi.value()) - 0.5 * r * r;
    }
    case FamilyKind::gamma: {
      const double a = phi.value();
      const double rate = a / mu;
      return a * std::log(rate) - std::lgamma(a) + (a - 1.0) * std::log(y) - rate * y;
    }
  }
  return 0.0;
}

double Family::sample(double mu, Dispersion phi, Philox& rng) const {
  if (!std::isfinite(mu) || (link_ == Link::log && !(mu > 0.0))) {
    throw InputError("sample: invalid mean for the " + name() + " family");
  }
  switch (kind_) {
    case FamilyKind::poisson:
      return static_cast<double>(std::poisson_distribution<long long>(mu)(rng));
    case FamilyKind::normal:
      return std::normal_distribution<double>(mu, phi.value())(rng);
    case FamilyKind::gamma:
      return std::gamma_distribution<double>(phi.value(), mu / phi.value())(rng);
  }
  return 0.0;
}

std::string Family::name() const {
  switch (kind_) {
    case FamilyKind::poisson:
      return "poisson";
    case FamilyKind::normal:
      return "normal";
    case FamilyKind::gamma:
      return "gamma";
  }
  return "?";
}

std::string Family::link_name() const { return link_ == Link::log ? "log" : "identity"; }

FamilyKind parse_family(std::string_view name) {
  if (name == "poisson") return FamilyKind::poisson;
  if (name == "normal" || name == "gaussian") return FamilyKind::normal;
  if (name == "gamma") return FamilyKind::gamma;
  throw InputError("unknown family '" + std::string(name) + "'");
}

Link parse_link(std::string_view name) {
  if (name == "log") return Link::log;
  if (name == "identity") return Link::identity;
  throw InputError("unknown link '" + std::string(name) + "'");
}

}  // namespace msgam
