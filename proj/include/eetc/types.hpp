#pragma once

#include <Eigen/Core>

#include "eetc/errors.hpp"

namespace eetc {

/// Traction-system parameters, strict SI units (kg, m, s, N, W, J).
/// Operator-unit conversion happens at file ingestion, never here.
struct TrainParams {
  double mass = 0.0;             ///< kg, rotary mass folded in
  double gravity = 9.80665;      ///< m/s^2
  double davis_a = 0.0;          ///< N
  double davis_b = 0.0;          ///< N/(m/s)
  double davis_c = 0.0;          ///< N/(m/s)^2
  double f_max = 0.0;            ///< N, symmetric effort bound
  double p_traction_max = 0.0;   ///< W
  double p_brake_max = 0.0;      ///< W
  double eta_t = 1.0;            ///< traction efficiency, (0, 1]
  double eta_b = 1.0;            ///< regeneration efficiency, (0, 1]

  void validate() const;
};

/// Fixed journey data over N equal-length segments. Segment i (0-based)
/// spans [i*segment_length, (i+1)*segment_length]; speeds are sampled at
/// segment end points, the departure speed is the fixed boundary value 0.
struct JourneySpec {
  double total_distance = 0.0;   ///< m
  int segment_count = 0;
  double segment_length = 0.0;   ///< m, total_distance / segment_count
  double journey_time = 0.0;     ///< s
  Eigen::VectorXd altitude_delta;  ///< m per segment, positive uphill
  Eigen::VectorXd speed_limit;     ///< m/s per segment
  bool terminal_speed_fixed = false;
  double terminal_speed = 0.0;     ///< m/s, used when terminal_speed_fixed

  /// Throws ValidationError on any violated invariant. When
  /// require_flat_start is set the first segment must have zero
  /// altitude change (needed by the descent constructions).
  void validate(bool require_flat_start = false) const;
};

/// Per-segment decision values. Index 0 holds the first segment; the fixed
/// boundary values v0 = 0 and beta0 = 0 are not stored.
struct Trajectory {
  Eigen::VectorXd v;       ///< m/s, end-of-segment speed
  Eigen::VectorXd alpha;   ///< s/m, pace
  Eigen::VectorXd beta;    ///< m^2/s^2, squared-speed surrogate
  Eigen::VectorXd force;   ///< N
  Eigen::VectorXd energy;  ///< J, electrical energy per segment

  int segments() const { return static_cast<int>(v.size()); }

  /// Elapsed time after each segment, accumulated as segment_length * alpha.
  Eigen::VectorXd cumulative_time(double segment_length) const;

  /// Net electrical energy after each segment.
  Eigen::VectorXd cumulative_energy() const;

  /// Throws DimensionError unless all five vectors have spec.segment_count
  /// entries.
  void validate_dimensions(const JourneySpec& spec) const;
};

/// Residuals of one trajectory against one model's constraint set, all in
/// natural units. Zero entries mean the constraint holds; positive entries
/// measure violation (equality rows report absolute mismatch).
struct FeasibilityReport {
  double time_residual = 0.0;        ///< s
  Eigen::VectorXd energy_balance;    ///< N, per-segment force-definition mismatch
  Eigen::VectorXd force_bound;       ///< N
  Eigen::VectorXd power_bound;       ///< N
  Eigen::VectorXd speed_bound;       ///< model A: m/s; model B: m^2/s^2
  Eigen::VectorXd energy_bound;      ///< J
  /// Relaxation-inequality violations (used by the relaxed-model check only;
  /// empty for the direct model).
  Eigen::VectorXd relaxation_bound;
  double worst = 0.0;
  double tolerance = 0.0;
  bool feasible = false;

  /// Recomputes worst/feasible from the stored vectors at tolerance tol.
  void finalize(double tol);
};

}  // namespace eetc
