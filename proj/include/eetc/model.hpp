#pragma once

#include "eetc/types.hpp"

namespace eetc {

/// Running resistance A + B*v + C*v^2 at speed v >= 0. [N]
double davis_resistance(double v, const TrainParams& params);

/// Effort implied by the per-segment energy balance, in the relaxed
/// variables where beta stands in for v^2 (pass beta = v^2 to recover the
/// direct model):
///   F = [0.5*M*(beta - beta_prev) + (A + B*v + C*beta)*dd + M*g*dH] / dd
double segment_force(double beta_prev, double v, double beta,
                     double altitude_delta, const JourneySpec& spec,
                     const TrainParams& params);

/// Tight electrical energy for one segment: traction branch for positive
/// effort, regeneration branch for negative effort. [J]
double electrical_energy(double force, const JourneySpec& spec,
                         const TrainParams& params);

/// Total electrical energy. [J]
double objective(const Trajectory& traj);

/// Checks a trajectory against the direct (non-relaxed) model: time budget,
/// energy balance at beta = v^2, effort/power bounds, speed limits and the
/// two electrical-energy inequalities.
FeasibilityReport check_model_a(const Trajectory& traj, const JourneySpec& spec,
                                const TrainParams& params, double tol);

}  // namespace eetc
