#pragma once

#include <string>
#include <string_view>

#include "msgam/rng.hpp"

namespace msgam {

enum class FamilyKind { poisson, normal, gamma };
enum class Link { identity, log };

/// Positive state-dependent dispersion: Normal standard deviation or Gamma
/// shape. Poisson carries no dispersion.
class Dispersion {
 public:
  Dispersion() = default;
  explicit Dispersion(double value);
  [[nodiscard]] double value() const noexcept { return value_; }

 private:
  double value_ = 1.0;
};

/// Observation density log p(y | mu, phi) and derivatives on the linear
/// predictor scale.
struct DensityTerms {
  double log_density;
  double d_eta;      ///< d log p / d eta
  double d_log_phi;  ///< d log p / d log phi (0 without dispersion)
};

/// Exponential-family observation model with its link.
///
/// Supported pairs: Poisson/log, Normal/identity, Gamma/log. The Gamma density
/// is parametrized by mean and shape, so E(Y) = mu and Var(Y) = mu^2 / shape.
class Family {
 public:
  Family() = default;
  /// Throws InputError for unsupported family/link pairs.
  Family(FamilyKind kind, Link link);
  /// Family with its canonical-default link.
  explicit Family(FamilyKind kind);

  [[nodiscard]] FamilyKind kind() const noexcept { return kind_; }
  [[nodiscard]] Link link() const noexcept { return link_; }
  [[nodiscard]] bool has_dispersion() const noexcept { return kind_ != FamilyKind::poisson; }

  [[nodiscard]] double inverse_link(double eta) const noexcept;
  [[nodiscard]] double link_function(double mu) const;

  /// Throws InputError if y is outside the family's support or mu/phi invalid.
  [[nodiscard]] double log_density(double y, double mu, Dispersion phi = Dispersion{}) const;

  /// True when y lies in the support (non-negative integer for Poisson,
  /// positive for Gamma, finite for Normal).
  [[nodiscard]] bool valid_response(double y) const noexcept;

  /// Part of log p that depends on y only; precomputed once per observation.
  [[nodiscard]] double response_constant(double y) const noexcept;

  /// Terms of log p that depend on phi only, computed once per state.
  struct DispersionTerms {
    double phi = 1.0;
    double log_norm = 0.0;
    double score = 0.0;
  };
  [[nodiscard]] DispersionTerms dispersion_terms(double phi) const noexcept;

  /// Log density and derivatives given eta. `constant` must be
  /// response_constant(y). No validation; used in the likelihood hot loop.
  [[nodiscard]] DensityTerms terms(double y, double constant, double eta, const DispersionTerms& d) const noexcept;

  /// One draw from the distribution with mean mu.
  [[nodiscard]] double sample(double mu, Dispersion phi, Philox& rng) const;

  [[nodiscard]] std::string name() const;
  [[nodiscard]] std::string link_name() const;

 private:
  FamilyKind kind_ = FamilyKind::normal;
  Link link_ = Link::identity;
};

FamilyKind parse_family(std::string_view name);
Link parse_link(std::string_view name);

}  // namespace msgam
