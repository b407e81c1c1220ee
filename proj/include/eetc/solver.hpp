#pragma once

#include <functional>
#include <limits>

#include <Eigen/Core>

#include "eetc/conic.hpp"

namespace eetc {

enum class SolveStatus {
  optimal,
  primal_infeasible,
  dual_infeasible,
  iteration_limit,
  numerical_failure,
};

const char* to_string(SolveStatus status);

/// One line of the per-iteration trace.
struct IterationTrace {
  int iteration = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double relative_gap = 0.0;
  double absolute_gap = 0.0;
  double mu = 0.0;
  double step = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  double kappa = 0.0;
};

struct SolverSettings {
  int max_iterations = 200;
  double feas_tol = 1e-9;       ///< relative primal/dual feasibility
  double gap_tol = 1e-9;        ///< relative duality gap
  double step_fraction = 0.99;  ///< fraction-to-boundary, in (0, 1)
  double static_reg = 1e-10;    ///< static KKT regularization
  /// Optional per-iteration sink for convergence records.
  std::function<void(const IterationTrace&)> trace;

  void validate() const;
};

/// Final solve measurements. The residuals here are the convergence
/// measures: like `residuals()` they compare against the data norms, but
/// additionally against the iterate norms, because on problems whose
/// solution or multipliers dwarf the data vectors the fixed normalization
/// asks for more than floating-point evaluation can distinguish.
struct SolveStats {
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::quiet_NaN();
  double dual_residual = std::numeric_limits<double>::quiet_NaN();
  double relative_gap = std::numeric_limits<double>::quiet_NaN();
  SolveStatus status = SolveStatus::numerical_failure;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int kkt_dynamic_bumps = 0;  ///< dynamic pivot fixes across all factorizations
};

/// Primal/dual solution of a standard-form conic program. y are the
/// equality multipliers; s is the dual cone variable (zero on the free
/// block) satisfying A'y + s = c at optimality.
struct SolveResult {
  Eigen::VectorXd x, y, s;
  SolveStats stats;
};

/// Normalized optimality residuals:
///   primal  ||A x - b|| / (1 + ||b||)
///   dual    ||A'y + s - c|| / (1 + ||c||)
///   gap     |c'x - b'y| / (1 + |c'x|)
struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

Residuals residuals(const ConicProgram& prog, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& s);

/// Nesterov-Todd scaling of one cone block: the unique scaling point w with
/// W z = W^{-T} s. Diagonal for the nonnegative cone, the standard
/// second-order-cone construction otherwise.
class NtScaling {
 public:
  ConeKind kind() const { return kind_; }
  /// The scaling point: per-coordinate sqrt(s/z) for nonneg blocks, the
  /// scaled point eta * wbar for soc3 blocks.
  const Eigen::VectorXd& w() const { return w_; }
  double eta() const { return eta_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;          ///< W u
  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& u) const;  ///< W^{-1} u

 private:
  friend NtScaling nt_scaling(const Eigen::VectorXd&, const Eigen::VectorXd&,
                              ConeKind);
  ConeKind kind_ = ConeKind::nonneg;
  Eigen::VectorXd w_;
  double eta_ = 1.0;
  double a_ = 1.0;          // soc3: leading entry of the normalized point
  Eigen::Vector2d q_{0, 0};  // soc3: trailing entries
};

/// Throws Error when either block is not strictly interior to its cone.
NtScaling nt_scaling(const Eigen::VectorXd& s_block,
                     const Eigen::VectorXd& z_block, ConeKind kind);

/// Solves the program with a homogeneous self-dual primal-dual
/// interior-point method (Nesterov-Todd scaling, predictor-corrector).
/// Deterministic: no randomized pivoting, fixed elimination ordering.
SolveResult solve(const ConicProgram& prog, const SolverSettings& settings = {});

}  // namespace eetc
