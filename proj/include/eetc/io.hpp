#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "eetc/exactness.hpp"
#include "eetc/oracle.hpp"
#include "eetc/solver.hpp"
#include "eetc/types.hpp"

namespace eetc {

/// Piecewise track description, SI units. Altitude is piecewise linear over
/// position; limits are piecewise constant from each `limit_from` onward.
struct TrackProfile {
  Eigen::VectorXd position;    ///< m, strictly increasing, first entry 0
  Eigen::VectorXd altitude;    ///< m
  Eigen::VectorXd limit_from;  ///< m, strictly increasing, first entry 0
  Eigen::VectorXd limit;       ///< m/s

  double altitude_at(double x) const;
  /// Most restrictive limit active anywhere in [a, b).
  double min_limit_over(double a, double b) const;
};

/// Reads the two track CSVs (`position_m,altitude_m` and `from_m,limit_kmh`).
/// Limits are converted to m/s here, at the boundary.
TrackProfile load_track(const std::filesystem::path& altitude_csv,
                        const std::filesystem::path& limits_csv);

/// Reads the key-value parameter file (operator units: tonnes, kN, kW,
/// per-km/h Davis coefficients) and converts to SI.
TrainParams load_params(const std::filesystem::path& path);

/// Journey request as stored on disk.
struct JourneyFile {
  double distance_m = 0.0;
  int segments = 0;
  double time_s = 0.0;
  std::optional<double> terminal_speed_mps;
};

JourneyFile load_journey(const std::filesystem::path& path);

/// Samples the track onto the journey's segments: altitude differences at
/// segment endpoints, limits as the minimum active anywhere in the segment.
JourneySpec build_journey(const TrackProfile& track, const JourneyFile& journey);

/// Rounds to `digits` significant decimal digits (the trajectory-table
/// precision); equal to a write/parse round trip.
double round_sig(double x, int digits = 12);

/// Trajectory with every field rounded to the table precision. Emission and
/// auditing both run on the rounded values, so an emitted table re-loaded in
/// audit mode reproduces its report bit for bit.
Trajectory rounded(const Trajectory& traj, int digits = 12);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          const JourneySpec& spec);
Trajectory read_trajectory_csv(const std::filesystem::path& path,
                               const JourneySpec& spec);

void write_exactness_text(std::ostream& out, const ExactnessReport& report);
std::string exactness_json(const ExactnessReport& report);
std::string solve_stats_json(const SolveStats& stats);
std::string comparison_json(const ComparisonRecord& record,
                            long long tuples_checked);

/// Exit codes of the command-line pipeline, one per failure class.
enum class ExitCode : int {
  ok = 0,
  usage = 2,
  parse_error = 3,
  assembly_error = 4,
  infeasible = 5,
  solver_failure = 6,
  not_exact = 7,
  oracle_mismatch = 8,
};

struct RunConfig {
  std::filesystem::path params_path;
  std::filesystem::path journey_path;
  std::filesystem::path track_altitude_path;
  std::filesystem::path track_limits_path;
  std::filesystem::path output_dir;
  SolverSettings solver;
  double exactness_tol = 1e-6;
  bool audit = true;
  bool run_oracle = false;
  GridSpec grid;
  std::optional<double> pin_terminal_speed;       ///< overrides the journey file
  std::optional<int> override_segments;
  std::optional<double> override_time;
  std::optional<std::filesystem::path> trace_path;  ///< JSONL solver trace
};

struct PipelineResult {
  ExitCode exit_code = ExitCode::ok;
  std::string message;
  SolveStats stats;
  ExactnessReport exactness;
  std::optional<ComparisonRecord> oracle;
  Trajectory trajectory;  ///< rounded to table precision; empty on failure
};

/// Full run: load, assemble, solve, extract, audit, optional oracle check,
/// artifact emission into the output directory.
PipelineResult run_pipeline(const RunConfig& config);

}  // namespace eetc
