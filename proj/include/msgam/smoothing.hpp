#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msgam/fit.hpp"
#include "msgam/model.hpp"
#include "msgam/parallel.hpp"

namespace msgam {

/// How smoothing parameters share grid coordinates: one per (state, smooth),
/// one per smooth shared across states, or one global value.
enum class Tie { none, states, all };

/// Direction of the warm-start chains through a grid.
enum class GridPath { from_smallest, from_largest };

Tie parse_tie(std::string_view name);
std::string_view tie_name(Tie tie);

/// Cartesian grid of smoothing vectors. Points are enumerated
/// lexicographically with the last coordinate varying fastest.
class LambdaGrid {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  LambdaGrid() = default;
  /// Same candidate set for every coordinate.
  LambdaGrid(const MSGAMSpec& spec, std::vector<double> candidates, Tie tie = Tie::none);
  /// One candidate set per coordinate.
  LambdaGrid(const MSGAMSpec& spec, std::vector<std::vector<double>> candidates, Tie tie = Tie::none);

  [[nodiscard]] std::size_t size() const noexcept;
  [[nodiscard]] int n_coordinates() const noexcept { return static_cast<int>(candidates_.size()); }
  [[nodiscard]] const std::vector<std::vector<double>>& candidates() const noexcept { return candidates_; }
  [[nodiscard]] Tie tie() const noexcept { return tie_; }
  [[nodiscard]] GridPath path() const noexcept { return path_; }
  void set_path(GridPath path) noexcept { path_ = path; }

  [[nodiscard]] std::vector<int> digits(std::size_t point) const;
  [[nodiscard]] SmoothingVector point(std::size_t index) const;
  /// Point whose optimum warm-starts this one, npos for cold-started points.
  /// from_smallest: the last non-leading coordinate above its smallest
  /// candidate steps down; each leading value starts its own cold chain.
  /// from_largest: the last non-leading coordinate below its largest
  /// candidate steps up, then the leading one; only the all-largest point is
  /// cold.
  [[nodiscard]] std::size_t parent(std::size_t index) const;
  /// Chain through the leading coordinate that the subtrees hang from
  /// (from_largest only), parents first.
  [[nodiscard]] std::vector<std::size_t> spine() const;
  /// Remaining points with leading coordinate index `leading`, parents first.
  [[nodiscard]] std::vector<std::size_t> subtree(int leading) const;
  [[nodiscard]] std::vector<std::size_t> order() const;

 private:
  int n_states_ = 0;
  int n_terms_ = 0;
  std::vector<int> smooth_terms_;
  Tie tie_ = Tie::none;
  GridPath path_ = GridPath::from_smallest;
  std::vector<std::vector<double>> candidates_;
};

enum class SelectionMethod { cv, aicp };
std::string_view method_name(SelectionMethod method);

enum class FoldMode { scatter, block };
FoldMode parse_fold_mode(std::string_view name);

struct ScoreRow {
  std::size_t point = 0;
  int fold = -1;  ///< -1 for the aggregate over folds
  SmoothingVector lambda;
  double score = 0.0;
};

struct SelectionResult {
  SelectionMethod method = SelectionMethod::aicp;
  int folds = 0;
  std::size_t chosen_point = 0;
  SmoothingVector chosen;
  /// One row per grid point (mean over folds for CV).
  std::vector<ScoreRow> scores;
  /// CV only: one row per (fold, grid point).
  std::vector<ScoreRow> fold_scores;
  std::vector<std::string> warnings;
  /// AIC_p only: the fit at the chosen point.
  std::optional<FitResult> best_fit;
};

struct SelectionOptions {
  /// Options for the root fit; warm-started fits use a single start.
  FitOptions fit{};
  FoldMode fold_mode = FoldMode::scatter;
  Execution execution = Execution::parallel;
};

/// Validation masks (1 = validation point) for C random partitions.
std::vector<MissingMask> cv_masks(int n_obs, int folds, double calib_fraction, std::uint64_t seed,
                                  FoldMode mode = FoldMode::scatter);

/// Cross-validated selection: fit on each calibration sample (validation
/// points missing), score the validation log-likelihood (calibration points
/// missing), and pick the highest mean score.
SelectionResult cv_select(const MSGAMSpec& spec, const TimeSeriesData& data, const LambdaGrid& grid, int folds,
                          double calib_fraction, std::uint64_t seed, const SelectionOptions& options = {});

/// Selection by AIC_p = -2 log L + 2 nu; lowest wins.
SelectionResult aicp_select(const MSGAMSpec& spec, const TimeSeriesData& data, const LambdaGrid& grid,
                            const SelectionOptions& options = {});

/// Options of the fit at grid point `point` in fold `fold` (-1 for AIC_p):
/// a per-job seed, and a single start when warm-started.
FitOptions job_options(const FitOptions& base, std::size_t point, int fold, bool warm);

/// Index of the optimal row (max when `maximize`), ties toward the larger
/// smoothing vector.
std::size_t best_row(const std::vector<ScoreRow>& rows, bool maximize);

}  // namespace msgam
