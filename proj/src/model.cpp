#include "eetc/model.hpp"

#include <algorithm>
#include <cmath>

namespace eetc {

double davis_resistance(double v, const TrainParams& params) {
  if (!(v >= 0.0)) throw Error("davis_resistance: speed must be nonnegative");
  return params.davis_a + params.davis_b * v + params.davis_c * v * v;
}

double segment_force(double beta_prev, double v, double beta,
                     double altitude_delta, const JourneySpec& spec,
                     const TrainParams& params) {
  const double dd = spec.segment_length;
  const double kinetic = 0.5 * params.mass * (beta - beta_prev);
  const double drag = (params.davis_a + params.davis_b * v +
                       params.davis_c * beta) * dd;
  const double potential = params.mass * params.gravity * altitude_delta;
  return (kinetic + drag + potential) / dd;
}

double electrical_energy(double force, const JourneySpec& spec,
                         const TrainParams& params) {
  const double work = force * spec.segment_length;
  return std::max(work / params.eta_t, work * params.eta_b);
}

double objective(const Trajectory& traj) { return traj.energy.sum(); }

FeasibilityReport check_model_a(const Trajectory& traj, const JourneySpec& spec,
                                const TrainParams& params, double tol) {
  traj.validate_dimensions(spec);
  const int n = spec.segment_count;
  const double dd = spec.segment_length;

  FeasibilityReport report;
  report.energy_balance.resize(n);
  report.force_bound.resize(n);
  report.power_bound.resize(n);
  report.speed_bound.resize(n);
  report.energy_bound.resize(n);

  double elapsed = 0.0;
  for (int i = 0; i < n; ++i) {
    const double vi = traj.v[i];
    const double fi = traj.force[i];

    // Speeds must stay positive; a nonpositive speed is reported as a
    // limit violation of its own magnitude plus one.
    if (vi <= 0.0) {
      report.speed_bound[i] = 1.0 - vi;
      report.energy_balance[i] = 0.0;
      report.force_bound[i] = 0.0;
      report.power_bound[i] = 0.0;
      report.energy_bound[i] = 0.0;
      continue;
    }
    elapsed += dd / vi;

    const double beta_prev = (i == 0) ? 0.0 : traj.v[i - 1] * traj.v[i - 1];
    const double f_balance = segment_force(beta_prev, vi, vi * vi,
                                           spec.altitude_delta[i], spec, params);
    report.energy_balance[i] = std::abs(fi - f_balance);

    report.force_bound[i] = std::max(0.0, std::abs(fi) - params.f_max);
    report.power_bound[i] =
        std::max({0.0, fi - params.p_traction_max / vi,
                  -params.p_brake_max / vi - fi});
    report.speed_bound[i] = std::max(0.0, vi - spec.speed_limit[i]);

    const double work = fi * dd;
    report.energy_bound[i] =
        std::max({0.0, work / params.eta_t - traj.energy[i],
                  work * params.eta_b - traj.energy[i]});
  }
  report.time_residual = elapsed - spec.journey_time;
  report.finalize(tol);
  return report;
}

}  // namespace eetc
