#pragma once

// Shared scenario builders for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "eetc/conic.hpp"
#include "eetc/exactness.hpp"
#include "eetc/io.hpp"
#include "eetc/model.hpp"
#include "eetc/solver.hpp"
#include "eetc/types.hpp"

namespace eetc::testing {

inline TrainParams table1_params() {
  TrainParams p;
  p.mass = 144.0 * 1000.0;
  p.f_max = 230.81 * 1000.0;
  p.p_traction_max = 2520.0 * 1000.0;
  p.p_brake_max = 2520.0 * 1000.0;
  p.eta_t = 0.9;
  p.eta_b = 0.6;
  p.davis_a = 3.0016 * 1000.0;
  p.davis_b = 2.016e-2 * 1000.0 * 3.6;
  p.davis_c = 6.9692e-4 * 1000.0 * 3.6 * 3.6;
  return p;
}

/// Level track, one speed limit, explicit time budget.
inline JourneySpec flat_journey(int segments, double distance, double time_s,
                                double limit_mps) {
  JourneySpec spec;
  spec.total_distance = distance;
  spec.segment_count = segments;
  spec.segment_length = distance / segments;
  spec.journey_time = time_s;
  spec.altitude_delta = Eigen::VectorXd::Zero(segments);
  spec.speed_limit = Eigen::VectorXd::Constant(segments, limit_mps);
  return spec;
}

/// The in-repo urban-rail case (downhill span, two limit zones).
inline JourneySpec bundled_journey(int segments = 100) {
  TrackProfile track =
      load_track("data/track_altitude.csv", "data/track_limits.csv");
  JourneyFile jf = load_journey("data/journey_default.txt");
  jf.segments = segments;
  return build_journey(track, jf);
}

/// Seeded random scenario: random geometry, grades within +-30 permille
/// (level first segment) and a comfortably feasible time budget.
inline JourneySpec random_journey(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> seg_dist(20, 120);
  std::uniform_real_distribution<double> dist_dist(2500.0, 8000.0);
  std::uniform_real_distribution<double> grade_dist(-0.030, 0.030);
  std::uniform_real_distribution<double> limit_dist(50.0, 90.0);  // km/h
  std::uniform_real_distribution<double> slack_dist(1.25, 1.6);
  std::uniform_int_distribution<int> spans(2, 4);

  const int n = seg_dist(rng);
  const double distance = dist_dist(rng);
  JourneySpec spec;
  spec.total_distance = distance;
  spec.segment_count = n;
  spec.segment_length = distance / n;
  spec.altitude_delta.resize(n);
  spec.speed_limit.resize(n);

  // Piecewise-constant grade, level over a leading stretch.
  const int grade_spans = spans(rng);
  const double flat_until = std::max(spec.segment_length, distance / 10.0);
  std::vector<double> grade_at(n, 0.0);
  for (int s = 0; s < grade_spans; ++s) {
    const double from = flat_until + (distance - flat_until) * s / grade_spans;
    const double to = flat_until + (distance - flat_until) * (s + 1) / grade_spans;
    const double g = grade_dist(rng);
    for (int i = 0; i < n; ++i) {
      const double mid = (i + 0.5) * spec.segment_length;
      if (mid >= from && mid < to) grade_at[i] = g;
    }
  }
  for (int i = 0; i < n; ++i) {
    spec.altitude_delta[i] = grade_at[i] * spec.segment_length;
  }
  spec.altitude_delta[0] = 0.0;

  const int limit_spans = spans(rng);
  std::vector<double> limits(limit_spans);
  for (double& l : limits) l = limit_dist(rng) / 3.6;
  for (int i = 0; i < n; ++i) {
    const int s = std::min(limit_spans - 1, i * limit_spans / n);
    spec.speed_limit[i] = limits[s];
  }

  double limit_time = 0.0;
  for (int i = 0; i < n; ++i) limit_time += spec.segment_length / spec.speed_limit[i];
  spec.journey_time = limit_time * slack_dist(rng);
  spec.validate(true);
  return spec;
}

struct SolvedCase {
  ConicProgram prog;
  SolveResult result;
  Trajectory traj;
};

inline SolvedCase solve_case(const JourneySpec& spec, const TrainParams& params,
                             SolverSettings settings = {}) {
  SolvedCase out;
  out.prog = assemble(spec, params);
  out.result = solve(out.prog, settings);
  if (out.result.stats.status == SolveStatus::optimal) {
    out.traj = extract_solution(out.result.x, out.prog.layout);
  }
  return out;
}

/// Projects a near-exact solver output onto an exactly tight feasible point
/// of the relaxed model: paces and squared speeds snapped to their cones,
/// efforts and energies recomputed, and the journey time redefined as the
/// projected point's own elapsed time. Returns the point plus the adjusted
/// journey. Interior force/power/limit margins are the caller's concern.
inline std::pair<Trajectory, JourneySpec> project_to_exact(
    const Trajectory& traj, const JourneySpec& spec, const TrainParams& params) {
  Trajectory out = traj;
  const int n = traj.segments();
  for (int i = 0; i < n; ++i) {
    out.alpha[i] = 1.0 / out.v[i];
    out.beta[i] = out.v[i] * out.v[i];
  }
  for (int i = 0; i < n; ++i) {
    const double beta_prev = i == 0 ? 0.0 : out.beta[i - 1];
    out.force[i] = segment_force(beta_prev, out.v[i], out.beta[i],
                                 spec.altitude_delta[i], spec, params);
    out.energy[i] = electrical_energy(out.force[i], spec, params);
  }
  JourneySpec adjusted = spec;
  double elapsed = 0.0;
  for (int i = 0; i < n; ++i) elapsed += spec.segment_length * out.alpha[i];
  adjusted.journey_time = elapsed;
  return {out, adjusted};
}

/// Inflates the pace at a pivot and rebalances the journey time so the
/// point stays feasible for the relaxed model with exactly that one slack.
inline std::pair<Trajectory, JourneySpec> inflate_alpha(
    const Trajectory& traj, const JourneySpec& spec, int pivot, double delta) {
  Trajectory out = traj;
  out.alpha[pivot] += delta;
  JourneySpec adjusted = spec;
  adjusted.journey_time += spec.segment_length * delta;
  return {out, adjusted};
}

/// Inflates the squared-speed surrogate at the pivot and the terminal
/// segment (the terminal slack feeds the forward chain), recomputing efforts
/// and energies so the point stays feasible.
inline Trajectory inflate_beta(const Trajectory& traj, const JourneySpec& spec,
                               const TrainParams& params, int pivot,
                               double delta, double terminal_delta) {
  Trajectory out = traj;
  out.beta[pivot] += delta;
  out.beta[traj.segments() - 1] += terminal_delta;
  for (int i = 0; i < traj.segments(); ++i) {
    const double beta_prev = i == 0 ? 0.0 : out.beta[i - 1];
    out.force[i] = segment_force(beta_prev, out.v[i], out.beta[i],
                                 spec.altitude_delta[i], spec, params);
    out.energy[i] = electrical_energy(out.force[i], spec, params);
  }
  return out;
}

}  // namespace eetc::testing
