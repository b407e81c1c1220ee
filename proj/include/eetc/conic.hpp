#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "eetc/types.hpp"

namespace eetc {

enum class ConeKind { free_cone, nonneg, soc3 };

/// One contiguous block of the cone partition.
struct ConeBlock {
  ConeKind kind;
  int start;
  int width;
};

/// Half-open index range [start, start + count).
struct Range {
  int start = 0;
  int count = 0;
  int end() const { return start + count; }
  bool contains(int i) const { return i >= start && i < end(); }
};

/// Column map of the assembled program. Layout, for N segments:
///   [v | alpha | beta | F | E]           5N free variables
///   [slack families, row order]          7N nonnegative slacks
///   [pace cones | squared-speed cones]   2N soc3 triples, 3 columns each
struct VariableLayout {
  int segments = 0;
  Range v, alpha, beta, force, energy;
  Range slack;
  Range cone;
  /// Per-family slack sub-ranges, in row emission order:
  /// 0 speed limit, 1 effort upper, 2 effort lower, 3 traction power,
  /// 4 braking power, 5 traction-energy branch, 6 regeneration branch.
  std::array<Range, 7> slack_family;
  int total = 0;

  int pace_cone_start(int i) const { return cone.start + 3 * i; }
  int speed_cone_start(int i) const { return cone.start + 3 * (segments + i); }
};

/// Standard-form conic program
///   minimize    c'x
///   subject to  A x = b,  x in K
/// with K the product of one free block, one nonnegative block and 3-dim
/// second-order cones. Immutable after assembly.
///
/// Row order is deterministic: the time equality, then the per-segment
/// energy-balance equalities, an optional terminal-speed pin, then the seven
/// slack-coupling families (family-major), then the cone-coupling rows (pace
/// cones first).
struct ConicProgram {
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  std::vector<ConeBlock> cones;
  VariableLayout layout;

  int rows() const { return static_cast<int>(A.rows()); }
  int cols() const { return static_cast<int>(A.cols()); }
};

/// Closed-form size census used to cross-check an assembled program.
struct AssemblyCensus {
  int variables = 0;
  int rows = 0;
  int equality_rows = 0;  ///< time + energy balance + optional pin
  int slack_rows = 0;
  int cone_rows = 0;
  int nonneg_count = 0;
  int soc3_blocks = 0;
};

AssemblyCensus expected_census(const JourneySpec& spec);

/// Builds the column map for a journey.
VariableLayout make_layout(const JourneySpec& spec);

/// Affine rows of one cone block, in global (row, column) coordinates.
struct ConeBlockRows {
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::Vector3d rhs;
  int first_row;
  int cone_start;
};

/// Rows tying segment i's pace cone triple to (2, alpha_i - v_i,
/// alpha_i + v_i); membership enforces alpha_i * v_i >= 1 for positive
/// alpha_i, v_i.
ConeBlockRows soc_alpha_block(int i, const VariableLayout& layout,
                              int first_row);

/// Rows tying segment i's squared-speed cone triple to (2 v_i, beta_i - 1,
/// beta_i + 1); membership enforces v_i^2 <= beta_i for beta_i >= 0.
ConeBlockRows soc_beta_block(int i, const VariableLayout& layout,
                             int first_row);

/// Cone margin z - sqrt(x^2 + y^2); nonnegative inside the cone.
double soc3_margin(double x, double y, double z);

/// Membership of (alpha, v) under the pace-cone embedding.
bool alpha_cone_member(double alpha, double v, double tol = 0.0);

/// Membership of (beta, v) under the squared-speed-cone embedding.
bool beta_cone_member(double beta, double v, double tol = 0.0);

/// Transcribes a journey/train pair into a standard-form conic program.
/// Throws AssemblyError naming the offending constraint family on bad data.
ConicProgram assemble(const JourneySpec& spec, const TrainParams& params);

/// Reads the decision variables out of a solver vector. No recomputation:
/// effort and energy are reported exactly as solved.
Trajectory extract_solution(const Eigen::VectorXd& x,
                            const VariableLayout& layout);

/// Embeds a trajectory into a full program vector (slacks and cone triples
/// included). Slack values are derived from their defining rows.
Eigen::VectorXd embed_trajectory(const Trajectory& traj,
                                 const ConicProgram& prog);

/// Writes the program in the documented plain-text sparse format.
void export_program(const ConicProgram& prog, std::ostream& out);

}  // namespace eetc
