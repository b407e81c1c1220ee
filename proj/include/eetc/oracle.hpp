#pragma once

#include <vector>

#include <Eigen/Core>

#include "eetc/types.hpp"

namespace eetc {

/// Discrete speed grid for the exhaustive search. Per-segment speeds are
/// log-spaced between the bounds (faster coverage of the low-speed range
/// where pace varies most). The exact time budget is relaxed to a window,
/// since a finite grid almost never meets it exactly.
struct GridSpec {
  int resolution = 60;           ///< grid points per segment, >= 2
  Eigen::VectorXd speed_lo;      ///< m/s per segment; empty = 0.2 * limit
  Eigen::VectorXd speed_hi;      ///< m/s per segment; empty = limit
  double time_window = 0.0;      ///< s; 0 = 0.5% of the journey time

  void validate(const JourneySpec& spec) const;
};

/// Per-segment candidate speeds; grids of resolution r and 2r-1 are nested.
std::vector<Eigen::VectorXd> make_speed_grid(const JourneySpec& spec,
                                             const GridSpec& grid);

/// Best feasible point found by the exhaustive search. When no grid tuple
/// is feasible, `feasible_found` is false and the rest is unset.
struct OracleResult {
  bool feasible_found = false;
  Trajectory best;
  double best_objective = 0.0;
  long long tuples_checked = 0;
};

/// Exhaustive minimization of the direct model over the speed grid.
/// Enumeration runs in parallel over first-segment choices; the merge is
/// deterministic regardless of scheduling. Guarded to 6 segments.
OracleResult grid_search_model_a(const JourneySpec& spec,
                                 const TrainParams& params,
                                 const GridSpec& grid);

/// Outcome of pitting the conic optimum against the grid search.
struct ComparisonRecord {
  enum class Outcome { pass, fail, inconclusive };
  Outcome outcome = Outcome::inconclusive;
  double conic_objective = 0.0;
  double oracle_objective = 0.0;
  double difference = 0.0;  ///< conic - oracle
  double tolerance = 0.0;
};

/// Passes iff the conic objective is no worse than the grid optimum plus
/// tol (the conic side may be better: the grid is restricted). An empty
/// oracle yields `inconclusive`, not a failure.
ComparisonRecord compare(double conic_objective, const OracleResult& oracle,
                         double tol);

}  // namespace eetc
