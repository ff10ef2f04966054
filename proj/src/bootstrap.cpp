#include "msgam/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "msgam/error.hpp"
#include "msgam/rng.hpp"

namespace msgam {

namespace {

int draw_index(const Eigen::VectorXd& probs, Philox& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // rounding: fall back to the last state with positive mass
  for (Eigen::Index i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

SimulatedSeries simulate_from_predictor(const Family& family, const MarkovChain& chain, const Eigen::MatrixXd& eta,
                                        const Eigen::VectorXd& dispersions, std::uint64_t seed) {
  chain.validate();
  if (eta.cols() != chain.n_states() || dispersions.size() != chain.n_states()) {
    throw InputError("simulate: predictor/dispersion dimensions do not match the chain");
  }
  Philox rng(seed, 0x5EED);
  const auto T = static_cast<int>(eta.rows());
  SimulatedSeries out;
  out.states.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    out.states[static_cast<std::size_t>(t)] =
        t == 0 ? draw_index(chain.init, rng)
               : draw_index(chain.tpm.row(out.states[static_cast<std::size_t>(t - 1)]).transpose(), rng);
  }
  out.data.y.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const int s = out.states[static_cast<std::size_t>(t)];
    const Dispersion phi = family.has_dispersion() ? Dispersion(dispersions[s]) : Dispersion{};
    out.data.y[static_cast<std::size_t>(t)] = family.sample(family.inverse_link(eta(t, s)), phi, rng);
  }
  out.data.missing.assign(static_cast<std::size_t>(T), 0);
  return out;
}

SimulatedSeries simulate_series(const MSGAMSpec& spec, const MSGAMParams& params, const Eigen::MatrixXd& covariates,
                                std::uint64_t seed) {
  const Eigen::MatrixXd eta = predictor_matrix(spec, params, Design(spec, covariates));
  SimulatedSeries out = simulate_from_predictor(spec.family, params.chain, eta, params.dispersions, seed);
  out.data.x = covariates;
  for (const Term& term : spec.terms) out.data.covariate_names.push_back(term.name);
  return out;
}

std::vector<double> curve_grid(const Term& term, int grid_size) {
  if (grid_size < 2) throw InputError("curve grid needs at least 2 points");
  const auto [lo, hi] = term.raw_domain();
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  for (int g = 0; g < grid_size; ++g) grid[static_cast<std::size_t>(g)] = lo + (hi - lo) * g / (grid_size - 1);
  return grid;
}

Eigen::VectorXd centered_curve(const MSGAMSpec& spec, const MSGAMParams& params, int state, int term,
                               const std::vector<double>& grid) {
  const Term& t = spec.terms[static_cast<std::size_t>(term)];
  const Eigen::VectorXd& c = params.coeffs[static_cast<std::size_t>(state)][static_cast<std::size_t>(term)];
  const double offset = t.eval(c, t.anchor());
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t g = 0; g < grid.size(); ++g) out[static_cast<Eigen::Index>(g)] = t.eval(c, grid[g]) - offset;
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void build_bands(BandCurve& curve, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("band level must lie in (0, 1)");
  const Eigen::Index G = curve.estimate.size();
  const Eigen::Index B = curve.replicates.rows();
  curve.pointwise_lower = curve.estimate;
  curve.pointwise_upper = curve.estimate;
  curve.simultaneous_lower = curve.estimate;
  curve.simultaneous_upper = curve.estimate;
  curve.scale = 1.0;
  curve.inside = static_cast<int>(B);
  if (B == 0) return;

  std::vector<double> column(static_cast<std::size_t>(B));
  for (Eigen::Index g = 0; g < G; ++g) {
    for (Eigen::Index b = 0; b < B; ++b) column[static_cast<std::size_t>(b)] = curve.replicates(b, g);
    std::sort(column.begin(), column.end());
    curve.pointwise_lower[g] = std::min(quantile_sorted(column, 0.5 * (1.0 - level)), curve.estimate[g]);
    curve.pointwise_upper[g] = std::max(quantile_sorted(column, 0.5 * (1.0 + level)), curve.estimate[g]);
  }
  const Eigen::VectorXd lower_half = curve.estimate - curve.pointwise_lower;
  const Eigen::VectorXd upper_half = curve.pointwise_upper - curve.estimate;

  // smallest inflation that puts each replicate entirely inside
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> needed(static_cast<std::size_t>(B), 0.0);
  for (Eigen::Index b = 0; b < B; ++b) {
    double r = 0.0;
    for (Eigen::Index g = 0; g < G; ++g) {
      const double d = curve.replicates(b, g) - curve.estimate[g];
      if (d > 0.0) r = std::max(r, upper_half[g] > 0.0 ? d / upper_half[g] : inf);
      if (d < 0.0) r = std::max(r, lower_half[g] > 0.0 ? -d / lower_half[g] : inf);
    }
    needed[static_cast<std::size_t>(b)] = r;
  }
  const auto target = static_cast<int>(std::ceil(level * static_cast<double>(B) - 1e-9));
  std::vector<double> sorted = needed;
  std::sort(sorted.begin(), sorted.end());
  double scale = std::max(1.0, sorted[static_cast<std::size_t>(std::max(target, 1) - 1)]);

  auto count_inside = [&](double s) {
    curve.simultaneous_lower = curve.estimate - s * lower_half;
    curve.simultaneous_upper = curve.estimate + s * upper_half;
    int inside = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      bool ok = true;
      for (Eigen::Index g = 0; g < G && ok; ++g) {
        const double v = curve.replicates(b, g);
        ok = v >= curve.simultaneous_lower[g] && v <= curve.simultaneous_upper[g];
      }
      inside += ok ? 1 : 0;
    }
    return inside;
  };
  int inside = count_inside(scale);
  // absorb rounding in s * half-width
  for (int it = 0; it < 64 && inside < target && std::isfinite(scale); ++it) {
    scale = std::nextafter(scale, inf) * (1.0 + 4.0 * std::numeric_limits<double>::epsilon());
    inside = count_inside(scale);
  }
  curve.scale = scale;
  curve.inside = inside;
}

BandSet bootstrap_bands(const MSGAMSpec& spec, const FitResult& fit_result, const TimeSeriesData& data,
                        const SmoothingVector& lambda, const BootstrapOptions& options) {
  if (options.replicates < 1) throw InputError("bootstrap needs at least one replicate");
  const Eigen::VectorXd start = pack(spec, fit_result.params);

  struct Replicate {
    bool converged = false;
    MSGAMParams params;
  };
  auto run = [&](std::size_t b) {
    const std::uint64_t seed = Philox::mix(options.seed ^ Philox::mix(static_cast<std::uint64_t>(b) + 0xB00757ULL));
    SimulatedSeries sim = simulate_series(spec, fit_result.params, data.x, seed);
    sim.data.missing = data.missing;
    sim.data.response_name = data.response_name;
    FitOptions fo = options.fit;
    fo.start = start;
    fo.seed = seed;
    fo.sort_states = true;
    const FitResult r = fit(spec, sim.data, lambda, fo);
    return Replicate{r.converged, r.params};
  };
  const std::vector<Replicate> reps =
      map_indexed(static_cast<std::size_t>(options.replicates), run, options.execution);

  BandSet out;
  out.level = options.level;
  out.replicates = options.replicates;
  for (const Replicate& r : reps) out.failures += r.converged ? 0 : 1;
  if (out.failures > 0.2 * options.replicates) {
    throw NumericalError("bootstrap: " + std::to_string(out.failures) + " of " + std::to_string(options.replicates) +
                         " replicate fits did not converge (" +
                         std::to_string(100.0 * out.failures / options.replicates) + "%)");
  }
  const int used = options.replicates - out.failures;
  for (int i = 0; i < spec.n_states; ++i) {
    for (int p = 0; p < spec.n_terms(); ++p) {
      BandCurve curve;
      curve.state = i;
      curve.term = p;
      curve.x = curve_grid(spec.terms[static_cast<std::size_t>(p)], options.grid_size);
      curve.estimate = centered_curve(spec, fit_result.params, i, p, curve.x);
      curve.replicates.resize(used, static_cast<Eigen::Index>(curve.x.size()));
      Eigen::Index row = 0;
      for (const Replicate& r : reps) {
        if (!r.converged) continue;
        curve.replicates.row(row++) = centered_curve(spec, r.params, i, p, curve.x).transpose();
      }
      build_bands(curve, options.level);
      out.curves.push_back(std::move(curve));
    }
  }
  return out;
}

}  // namespace msgam
