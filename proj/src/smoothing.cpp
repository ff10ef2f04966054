#include "msgam/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "msgam/error.hpp"
#include "msgam/rng.hpp"

namespace msgam {

Tie parse_tie(std::string_view name) {
  if (name == "none") return Tie::none;
  if (name == "states") return Tie::states;
  if (name == "all") return Tie::all;
  throw InputError("unknown tie mode '" + std::string(name) + "'");
}

std::string_view tie_name(Tie tie) {
  switch (tie) {
    case Tie::none:
      return "none";
    case Tie::states:
      return "states";
    case Tie::all:
      return "all";
  }
  return "none";
}

std::string_view method_name(SelectionMethod method) { return method == SelectionMethod::cv ? "cv" : "aicp"; }

FoldMode parse_fold_mode(std::string_view name) {
  if (name == "scatter") return FoldMode::scatter;
  if (name == "block") return FoldMode::block;
  throw InputError("unknown fold mode '" + std::string(name) + "'");
}

namespace {

int coordinate_count(int n_states, int n_smooth, Tie tie) {
  if (n_smooth == 0) return 0;
  switch (tie) {
    case Tie::none:
      return n_states * n_smooth;
    case Tie::states:
      return n_smooth;
    case Tie::all:
      return 1;
  }
  return 0;
}

}  // namespace

LambdaGrid::LambdaGrid(const MSGAMSpec& spec, std::vector<double> candidates, Tie tie)
    : LambdaGrid(spec, std::vector<std::vector<double>>{}, tie) {
  candidates_.assign(static_cast<std::size_t>(coordinate_count(n_states_, static_cast<int>(smooth_terms_.size()), tie)),
                     candidates);
  for (auto& c : candidates_) {
    if (c.empty()) throw InputError("lambda candidate sets must be non-empty");
    std::sort(c.begin(), c.end());
    if (c.front() < 0.0) throw InputError("lambda candidates must be non-negative");
  }
}

LambdaGrid::LambdaGrid(const MSGAMSpec& spec, std::vector<std::vector<double>> candidates, Tie tie)
    : n_states_(spec.n_states), n_terms_(spec.n_terms()), tie_(tie), candidates_(std::move(candidates)) {
  for (int p = 0; p < spec.n_terms(); ++p) {
    if (spec.terms[static_cast<std::size_t>(p)].kind == TermKind::smooth) smooth_terms_.push_back(p);
  }
  if (candidates_.empty()) return;
  const int expected = coordinate_count(n_states_, static_cast<int>(smooth_terms_.size()), tie);
  if (static_cast<int>(candidates_.size()) != expected) {
    throw InputError("lambda grid needs " + std::to_string(expected) + " candidate sets, got " +
                     std::to_string(candidates_.size()));
  }
  for (auto& c : candidates_) {
    if (c.empty()) throw InputError("lambda candidate sets must be non-empty");
    std::sort(c.begin(), c.end());
    if (c.front() < 0.0) throw InputError("lambda candidates must be non-negative");
  }
}

std::size_t LambdaGrid::size() const noexcept {
  std::size_t n = 1;
  for (const auto& c : candidates_) n *= c.size();
  return n;
}

std::vector<int> LambdaGrid::digits(std::size_t point) const {
  std::vector<int> d(candidates_.size(), 0);
  for (std::size_t j = candidates_.size(); j-- > 0;) {
    d[j] = static_cast<int>(point % candidates_[j].size());
    point /= candidates_[j].size();
  }
  return d;
}

SmoothingVector LambdaGrid::point(std::size_t index) const {
  SmoothingVector lambda(n_states_, n_terms_, 0.0);
  const std::vector<int> d = digits(index);
  const auto n_smooth = static_cast<int>(smooth_terms_.size());
  for (int i = 0; i < n_states_; ++i) {
    for (int s = 0; s < n_smooth; ++s) {
      std::size_t coord = 0;
      switch (tie_) {
        case Tie::none:
          coord = static_cast<std::size_t>(i * n_smooth + s);
          break;
        case Tie::states:
          coord = static_cast<std::size_t>(s);
          break;
        case Tie::all:
          coord = 0;
          break;
      }
      lambda(i, smooth_terms_[static_cast<std::size_t>(s)]) = candidates_[coord][static_cast<std::size_t>(d[coord])];
    }
  }
  return lambda;
}

std::size_t LambdaGrid::parent(std::size_t index) const {
  std::vector<int> d = digits(index);
  auto encode = [&] {
    std::size_t out = 0;
    for (std::size_t k = 0; k < d.size(); ++k) out = out * candidates_[k].size() + static_cast<std::size_t>(d[k]);
    return out;
  };
  const bool up = path_ == GridPath::from_smallest;
  auto top = [&](std::size_t j) { return up ? 0 : static_cast<int>(candidates_[j].size()) - 1; };
  for (std::size_t j = d.size(); j-- > 1;) {
    if (d[j] != top(j)) {
      d[j] += up ? -1 : 1;
      return encode();
    }
  }
  if (path_ == GridPath::from_largest && !d.empty() && d[0] != top(0)) {
    ++d[0];
    return encode();
  }
  return npos;
}

std::vector<std::size_t> LambdaGrid::spine() const {
  if (candidates_.empty()) return {0};
  if (path_ == GridPath::from_smallest) return {};
  const std::size_t block = size() / candidates_[0].size();
  std::vector<std::size_t> out;
  for (std::size_t lead = candidates_[0].size(); lead-- > 0;) out.push_back(lead * block + block - 1);
  return out;
}

std::vector<std::size_t> LambdaGrid::subtree(int leading) const {
  if (candidates_.empty()) return {};
  const std::size_t block = size() / candidates_[0].size();
  const std::size_t first = static_cast<std::size_t>(leading) * block;
  std::vector<std::size_t> out;
  // a parent differs by one digit, stepped toward the chain's start
  if (path_ == GridPath::from_smallest) {
    for (std::size_t k = 0; k < block; ++k) out.push_back(first + k);
  } else {
    for (std::size_t k = block - 1; k-- > 0;) out.push_back(first + k);
  }
  return out;
}

std::vector<std::size_t> LambdaGrid::order() const {
  std::vector<std::size_t> out = spine();
  const int n_lead = candidates_.empty() ? 0 : static_cast<int>(candidates_[0].size());
  for (int lead = 0; lead < n_lead; ++lead) {
    const std::vector<std::size_t> sub = subtree(lead);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::size_t best_row(const std::vector<ScoreRow>& rows, bool maximize) {
  if (rows.empty()) throw InputError("empty score table");
  std::size_t best = 0;
  auto better = [&](double a, double b) { return maximize ? a > b : a < b; };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double a = rows[r].score;
    const double b = rows[best].score;
    if (better(a, b) || (std::isnan(b) && !std::isnan(a))) {
      best = r;
    } else if (a == b) {
      const double sa = rows[r].lambda.values().sum();
      const double sb = rows[best].lambda.values().sum();
      if (sa >= sb) best = r;
    }
  }
  return best;
}

std::vector<MissingMask> cv_masks(int n_obs, int folds, double calib_fraction, std::uint64_t seed, FoldMode mode) {
  if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
  if (!(calib_fraction > 0.5 && calib_fraction < 1.0)) {
    throw InputError("calibration fraction must lie in (0.5, 1)");
  }
  const int n_val = std::max(1, static_cast<int>(std::lround((1.0 - calib_fraction) * n_obs)));
  std::vector<MissingMask> masks;
  for (int f = 0; f < folds; ++f) {
    Philox rng = Philox::for_job(seed, static_cast<std::uint64_t>(f), 0xCF);
    MissingMask mask(static_cast<std::size_t>(n_obs), 0);
    if (mode == FoldMode::block) {
      const int start = std::uniform_int_distribution<int>(0, n_obs - n_val)(rng);
      std::fill(mask.begin() + start, mask.begin() + start + n_val, 1);
    } else {
      std::vector<int> idx(static_cast<std::size_t>(n_obs));
      std::iota(idx.begin(), idx.end(), 0);
      // partial Fisher-Yates
      for (int k = 0; k < n_val; ++k) {
        const int j = std::uniform_int_distribution<int>(k, n_obs - 1)(rng);
        std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
        mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 1;
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

FitOptions job_options(const FitOptions& base, std::size_t point, int fold, bool warm) {
  FitOptions o = base;
  o.seed = Philox::mix(base.seed ^ Philox::mix(point * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(fold + 1)));
  if (warm) o.n_restarts = 1;
  return o;
}

SelectionResult cv_select(const MSGAMSpec& spec, const TimeSeriesData& data, const LambdaGrid& grid, int folds,
                          double calib_fraction, std::uint64_t seed, const SelectionOptions& options) {
  const std::vector<MissingMask> masks = cv_masks(data.size(), folds, calib_fraction, seed, options.fold_mode);
  const std::size_t n_points = grid.size();

  struct FoldOutput {
    std::vector<double> scores;
    std::vector<std::string> warnings;
  };
  auto run_fold = [&](std::size_t f) {
    FoldOutput out;
    out.scores.assign(n_points, -std::numeric_limits<double>::infinity());
    const MissingMask& validation = masks[f];
    MissingMask calibration(validation.size());
    std::transform(validation.begin(), validation.end(), calibration.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 0 : 1); });
    const PenalizedObjective scorer(spec, data, SmoothingVector(spec.n_states, spec.n_terms()), calibration);
    std::vector<std::optional<Eigen::VectorXd>> optima(n_points);
    for (std::size_t p : grid.order()) {
      const std::size_t parent = grid.parent(p);
      const bool warm = parent != LambdaGrid::npos && optima[parent].has_value();
      FitOptions fo = job_options(options.fit, p, static_cast<int>(f), warm);
      fo.compute_edf = false;
      fo.sort_states = false;
      if (warm) fo.start = optima[parent];
      const FitResult r = fit(spec, data, grid.point(p), fo, validation);
      if (!r.converged) {
        out.warnings.push_back("fold " + std::to_string(f + 1) + ", grid point " + std::to_string(p + 1) +
                               ": fit did not converge (" + r.message + "); score set to -inf");
        continue;
      }
      optima[p] = r.raw_packed;
      out.scores[p] = scorer.loglik(r.raw_packed);
    }
    return out;
  };
  const std::vector<FoldOutput> per_fold = map_indexed(masks.size(), run_fold, options.execution);

  SelectionResult result;
  result.method = SelectionMethod::cv;
  result.folds = folds;
  for (std::size_t f = 0; f < per_fold.size(); ++f) {
    for (std::size_t p = 0; p < n_points; ++p) {
      result.fold_scores.push_back({p, static_cast<int>(f), grid.point(p), per_fold[f].scores[p]});
    }
    result.warnings.insert(result.warnings.end(), per_fold[f].warnings.begin(), per_fold[f].warnings.end());
  }
  for (std::size_t p = 0; p < n_points; ++p) {
    double sum = 0.0;
    for (const auto& fold : per_fold) sum += fold.scores[p];
    result.scores.push_back({p, -1, grid.point(p), sum / static_cast<double>(per_fold.size())});
  }
  const std::size_t best = best_row(result.scores, true);
  result.chosen_point = result.scores[best].point;
  result.chosen = result.scores[best].lambda;
  return result;
}

SelectionResult aicp_select(const MSGAMSpec& spec, const TimeSeriesData& data, const LambdaGrid& grid,
                            const SelectionOptions& options) {
  const std::size_t n_points = grid.size();
  if (n_points == 0) throw InputError("empty lambda grid");
  struct TreeOutput {
    std::vector<std::size_t> points;
    std::vector<double> scores;
    std::vector<FitResult> fits;
    std::vector<std::string> warnings;
  };
  // each point writes only its own slot; parents are finished before children
  std::vector<std::optional<Eigen::VectorXd>> optima(n_points);
  auto run_chain = [&](std::vector<std::size_t> points) {
    TreeOutput out;
    out.points = std::move(points);
    for (std::size_t p : out.points) {
      const std::size_t parent = grid.parent(p);
      const bool warm = parent != LambdaGrid::npos && optima[parent].has_value();
      FitOptions fo = job_options(options.fit, p, -1, warm);
      fo.compute_edf = false;
      if (warm) fo.start = optima[parent];
      const SmoothingVector lambda = grid.point(p);
      FitResult r = fit(spec, data, lambda, fo);
      double score = std::numeric_limits<double>::infinity();
      if (r.converged) {
        optima[p] = r.raw_packed;
        try {
          compute_edf(r, spec, data, lambda);
          score = r.aic_p();
        } catch (const NumericalError& e) {
          out.warnings.push_back("grid point " + std::to_string(p + 1) + ": " + e.what() + "; AIC_p set to +inf");
        }
      } else {
        out.warnings.push_back("grid point " + std::to_string(p + 1) + ": fit did not converge (" + r.message +
                               "); AIC_p set to +inf");
      }
      if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
      out.scores.push_back(score);
      out.fits.push_back(std::move(r));
    }
    return out;
  };
  std::vector<TreeOutput> trees;
  trees.push_back(run_chain(grid.spine()));
  const std::size_t n_lead = grid.n_coordinates() == 0 ? 0 : grid.candidates()[0].size();
  std::vector<TreeOutput> subtrees = map_indexed(
      n_lead, [&](std::size_t lead) { return run_chain(grid.subtree(static_cast<int>(lead))); }, options.execution);
  for (auto& t : subtrees) trees.push_back(std::move(t));

  SelectionResult result;
  result.method = SelectionMethod::aicp;
  std::vector<const FitResult*> fit_of(n_points, nullptr);
  for (auto& tree : trees) {
    for (std::size_t k = 0; k < tree.points.size(); ++k) {
      result.scores.push_back({tree.points[k], -1, grid.point(tree.points[k]), tree.scores[k]});
      fit_of[tree.points[k]] = &tree.fits[k];
    }
    result.warnings.insert(result.warnings.end(), tree.warnings.begin(), tree.warnings.end());
  }
  const std::size_t best = best_row(result.scores, false);
  result.chosen_point = result.scores[best].point;
  result.chosen = result.scores[best].lambda;
  result.best_fit = *fit_of[result.chosen_point];
  return result;
}

}  // namespace msgam
