#pragma once

#include <string>

#include <Eigen/Core>

#include "eetc/types.hpp"

namespace eetc {

/// Relaxation-gap measurements of one trajectory. The terminal
/// squared-speed slack is reported separately and never fails exactness:
/// the optimizer drives it to zero but the certified range is 1..N-1.
struct ExactnessReport {
  Eigen::VectorXd alpha_gap;  ///< alpha_i * v_i - 1
  Eigen::VectorXd beta_gap;   ///< beta_i - v_i^2
  double max_alpha_gap = 0.0;
  int max_alpha_index = -1;  ///< 0-based segment
  double max_beta_gap = 0.0;  ///< over segments 0..N-2
  int max_beta_index = -1;
  double beta_terminal_slack = 0.0;
  bool assumption_flat_start = false;  ///< first segment level
  std::string terminal_note;
  double tolerance = 0.0;
  bool exact = false;
};

ExactnessReport gaps(const Trajectory& traj, const JourneySpec& spec,
                     double tol = 1e-6);

/// A constructed strictly-improving feasible perturbation: evidence that the
/// input point was not optimal.
struct PerturbationCertificate {
  enum class Kind { part1, part2 };
  Kind kind = Kind::part1;
  int pivot = 0;  ///< 0-based segment index
  /// Signed changes actually applied (new = old + delta).
  Eigen::VectorXd delta_v, delta_beta, delta_alpha;
  double objective_before = 0.0;
  double objective_after = 0.0;
  Trajectory perturbed;
  FeasibilityReport relaxed_feasibility;
  /// Construction-order record (chain directions, bisection placement).
  std::string construction_order;
  int shrink_count = 0;
};

/// Residuals of a trajectory against the relaxed model: time equality over
/// alpha, the energy balance in (v, beta), effort/power bounds, squared-speed
/// limits, the energy branches and the two relaxation inequalities.
FeasibilityReport check_model_b(const Trajectory& traj, const JourneySpec& spec,
                                const TrainParams& params, double tol);

/// Builds an improving perturbation at a pivot whose pace inequality is
/// slack (alpha_i * v_i > 1): the pivot pace and speed are reduced together
/// and a backward chain keeps every other segment's work constant while the
/// first segment's work strictly drops. eps_v seeds the pivot speed
/// reduction and is shrunk geometrically until every condition holds.
///
/// Throws AlreadyExactError when the pivot carries no slack,
/// PreconditionError when the first-segment work is not positive, and
/// AuditNumericalError when shrinking cannot rescue the construction.
PerturbationCertificate part1_perturbation(const Trajectory& traj,
                                           const JourneySpec& spec,
                                           const TrainParams& params, int pivot,
                                           double eps_v);

/// Builds an improving perturbation at a pivot whose squared-speed
/// inequality is slack (beta_i > v_i^2, pivot <= N-2). Requires terminal
/// slack beta_N > v_N^2 as well. Order: backward chain below the pivot
/// first, pace budget at the pivot second, forward chain with the
/// alpha-budget bisection last.
PerturbationCertificate part2_perturbation(const Trajectory& traj,
                                           const JourneySpec& spec,
                                           const TrainParams& params,
                                           int pivot);

/// True iff the certificate's perturbed point is feasible for the relaxed
/// model at tol and the objective strictly decreased by more than
/// tol * |objective_before|.
bool verify_descent(const PerturbationCertificate& cert,
                    const JourneySpec& spec, const TrainParams& params,
                    double tol);

/// Elementary chain maps used by the perturbation constructions, exposed for
/// direct verification (their monotonicity carries the descent argument).
namespace chains {

/// Speed reduction matching an equal reduction of beta and v^2:
/// eps_v = v - sqrt(v^2 - eps_beta). Requires eps_beta < v^2.
double speed_reduction(double v, double eps_beta);

/// d(eps_v)/d(eps_beta) = 1 / (2 sqrt(v^2 - eps_beta)) > 0.
double speed_reduction_derivative(double v, double eps_beta);

/// Pace increase keeping alpha * v constant when v drops by eps_v:
/// eps_alpha = alpha * eps_v / (v - eps_v).
double pace_increase(double v, double alpha, double eps_v);

/// d(eps_alpha)/d(eps_v) = v * alpha / (v - eps_v)^2 > 0.
double pace_increase_derivative(double v, double alpha, double eps_v);

/// Pace decrease keeping alpha * v constant when v rises by eps_v.
double pace_decrease(double v, double alpha, double eps_v);

/// Work-preserving propagation one segment down the chain:
/// eps_beta_prev = ((0.5 M + C dd) eps_beta + B dd eps_v) / (0.5 M).
double next_beta_reduction(double eps_beta, double eps_v,
                           const JourneySpec& spec, const TrainParams& params);

/// Backward chain from a seed reduction at segment `last` (inclusive) down
/// to segment 0: per-segment reductions of beta and v plus the
/// product-preserving pace increases.
struct BackwardChain {
  Eigen::VectorXd eps_beta;   ///< entries 0..last
  Eigen::VectorXd eps_v;      ///< entries 0..last
  Eigen::VectorXd eps_alpha;  ///< entries 0..last
  double alpha_sum = 0.0;     ///< sum of the pace increases
  bool valid = false;         ///< false when a square root left its domain
};

BackwardChain backward_chain(const Trajectory& traj, const JourneySpec& spec,
                             const TrainParams& params, int last,
                             double seed_eps_beta);

}  // namespace chains

}  // namespace eetc
