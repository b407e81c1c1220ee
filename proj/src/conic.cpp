#include "eetc/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "eetc/errors.hpp"

namespace eetc {

namespace {

constexpr int kSlackFamilies = 7;

int equality_row_count(const JourneySpec& spec) {
  return 1 + spec.segment_count + (spec.terminal_speed_fixed ? 1 : 0);
}

}  // namespace

AssemblyCensus expected_census(const JourneySpec& spec) {
  const int n = spec.segment_count;
  AssemblyCensus census;
  census.equality_rows = equality_row_count(spec);
  census.slack_rows = kSlackFamilies * n;
  census.cone_rows = 6 * n;
  census.rows = census.equality_rows + census.slack_rows + census.cone_rows;
  census.nonneg_count = kSlackFamilies * n;
  census.soc3_blocks = 2 * n;
  census.variables = 5 * n + census.nonneg_count + 3 * census.soc3_blocks;
  return census;
}

VariableLayout make_layout(const JourneySpec& spec) {
  const int n = spec.segment_count;
  VariableLayout layout;
  layout.segments = n;
  layout.v = {0, n};
  layout.alpha = {n, n};
  layout.beta = {2 * n, n};
  layout.force = {3 * n, n};
  layout.energy = {4 * n, n};
  layout.slack = {5 * n, kSlackFamilies * n};
  for (int f = 0; f < kSlackFamilies; ++f) {
    layout.slack_family[f] = {5 * n + f * n, n};
  }
  layout.cone = {(5 + kSlackFamilies) * n, 6 * n};
  layout.total = layout.cone.end();
  return layout;
}

ConeBlockRows soc_alpha_block(int i, const VariableLayout& layout,
                              int first_row) {
  ConeBlockRows rows;
  rows.first_row = first_row;
  rows.cone_start = layout.pace_cone_start(i);
  const int u = rows.cone_start;
  const int va = layout.v.start + i;
  const int al = layout.alpha.start + i;
  // Cone head first: u = (alpha + v, 2, alpha - v), so membership reads
  // sqrt(2^2 + (alpha - v)^2) <= alpha + v, i.e. alpha * v >= 1.
  rows.triplets = {
      {first_row, u, 1.0},
      {first_row, al, -1.0},
      {first_row, va, -1.0},
      {first_row + 1, u + 1, 1.0},
      {first_row + 2, u + 2, 1.0},
      {first_row + 2, al, -1.0},
      {first_row + 2, va, 1.0},
  };
  rows.rhs = {0.0, 2.0, 0.0};
  return rows;
}

ConeBlockRows soc_beta_block(int i, const VariableLayout& layout,
                             int first_row) {
  ConeBlockRows rows;
  rows.first_row = first_row;
  rows.cone_start = layout.speed_cone_start(i);
  const int u = rows.cone_start;
  const int va = layout.v.start + i;
  const int be = layout.beta.start + i;
  // Cone head first: u = (beta + 1, 2 v, beta - 1), so membership reads
  // sqrt((2v)^2 + (beta - 1)^2) <= beta + 1, i.e. v^2 <= beta.
  rows.triplets = {
      {first_row, u, 1.0},
      {first_row, be, -1.0},
      {first_row + 1, u + 1, 1.0},
      {first_row + 1, va, -2.0},
      {first_row + 2, u + 2, 1.0},
      {first_row + 2, be, -1.0},
  };
  rows.rhs = {1.0, 0.0, -1.0};
  return rows;
}

double soc3_margin(double x, double y, double z) {
  return z - std::hypot(x, y);
}

bool alpha_cone_member(double alpha, double v, double tol) {
  return soc3_margin(2.0, alpha - v, alpha + v) >= -tol;
}

bool beta_cone_member(double beta, double v, double tol) {
  return soc3_margin(2.0 * v, beta - 1.0, beta + 1.0) >= -tol;
}

ConicProgram assemble(const JourneySpec& spec, const TrainParams& params) {
  const int n = spec.segment_count;
  if (n <= 0 || !(spec.segment_length > 0.0)) {
    throw AssemblyError("geometry", "need a positive number of segments of positive length");
  }
  if (std::abs(spec.segment_length * n - spec.total_distance) >
      1e-9 * std::max(1.0, spec.total_distance)) {
    throw AssemblyError("geometry", "segment_length * segment_count != total_distance");
  }
  if (!(spec.journey_time > 0.0)) {
    throw AssemblyError("time", "journey_time must be positive");
  }
  if (spec.speed_limit.size() != n || spec.altitude_delta.size() != n) {
    throw AssemblyError("geometry", "per-segment data does not match segment_count");
  }
  for (int i = 0; i < n; ++i) {
    if (!(spec.speed_limit[i] > 0.0) || !std::isfinite(spec.speed_limit[i])) {
      throw AssemblyError("speed-limit",
                          "segment " + std::to_string(i + 1) + " has a nonpositive limit");
    }
  }
  try {
    params.validate();
  } catch (const ValidationError& e) {
    throw AssemblyError("parameters", e.what());
  }
  if (spec.terminal_speed_fixed &&
      !(spec.terminal_speed > 0.0 &&
        spec.terminal_speed <= spec.speed_limit[n - 1])) {
    throw AssemblyError("terminal", "terminal speed must be positive and within the last limit");
  }

  const double dd = spec.segment_length;
  const double half_m = 0.5 * params.mass;

  ConicProgram prog;
  prog.layout = make_layout(spec);
  const VariableLayout& L = prog.layout;
  const AssemblyCensus census = expected_census(spec);

  prog.c = Eigen::VectorXd::Zero(L.total);
  for (int i = 0; i < n; ++i) prog.c[L.energy.start + i] = 1.0;

  prog.b = Eigen::VectorXd::Zero(census.rows);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(40 * n);

  int row = 0;

  // Time budget: sum of dd * alpha_i equals the journey time.
  for (int i = 0; i < n; ++i) trip.emplace_back(row, L.alpha.start + i, dd);
  prog.b[row] = spec.journey_time;
  ++row;

  // Per-segment energy balance with the drag definition substituted in:
  //   dd*F_i - B*dd*v_i - (0.5M + C*dd)*beta_i + 0.5M*beta_{i-1}
  //     = A*dd + M*g*dH_i
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(row, L.force.start + i, dd);
    trip.emplace_back(row, L.v.start + i, -params.davis_b * dd);
    trip.emplace_back(row, L.beta.start + i, -(half_m + params.davis_c * dd));
    if (i > 0) trip.emplace_back(row, L.beta.start + i - 1, half_m);
    prog.b[row] = params.davis_a * dd +
                  params.mass * params.gravity * spec.altitude_delta[i];
    ++row;
  }

  if (spec.terminal_speed_fixed) {
    trip.emplace_back(row, L.v.start + n - 1, 1.0);
    prog.b[row] = spec.terminal_speed;
    ++row;
  }

  // Slack-coupled inequality families, family-major.
  for (int i = 0; i < n; ++i) {  // beta_i <= V_i^2
    trip.emplace_back(row, L.beta.start + i, 1.0);
    trip.emplace_back(row, L.slack_family[0].start + i, 1.0);
    prog.b[row] = spec.speed_limit[i] * spec.speed_limit[i];
    ++row;
  }
  for (int i = 0; i < n; ++i) {  // F_i <= F_max
    trip.emplace_back(row, L.force.start + i, 1.0);
    trip.emplace_back(row, L.slack_family[1].start + i, 1.0);
    prog.b[row] = params.f_max;
    ++row;
  }
  for (int i = 0; i < n; ++i) {  // F_i >= -F_max
    trip.emplace_back(row, L.force.start + i, 1.0);
    trip.emplace_back(row, L.slack_family[2].start + i, -1.0);
    prog.b[row] = -params.f_max;
    ++row;
  }
  for (int i = 0; i < n; ++i) {  // F_i <= P_t,max * alpha_i
    trip.emplace_back(row, L.force.start + i, 1.0);
    trip.emplace_back(row, L.alpha.start + i, -params.p_traction_max);
    trip.emplace_back(row, L.slack_family[3].start + i, 1.0);
    ++row;
  }
  for (int i = 0; i < n; ++i) {  // F_i >= -P_b,max * alpha_i
    trip.emplace_back(row, L.force.start + i, 1.0);
    trip.emplace_back(row, L.alpha.start + i, params.p_brake_max);
    trip.emplace_back(row, L.slack_family[4].start + i, -1.0);
    ++row;
  }
  for (int i = 0; i < n; ++i) {  // E_i >= F_i*dd / eta_t
    trip.emplace_back(row, L.energy.start + i, 1.0);
    trip.emplace_back(row, L.force.start + i, -dd / params.eta_t);
    trip.emplace_back(row, L.slack_family[5].start + i, -1.0);
    ++row;
  }
  for (int i = 0; i < n; ++i) {  // E_i >= F_i*dd * eta_b
    trip.emplace_back(row, L.energy.start + i, 1.0);
    trip.emplace_back(row, L.force.start + i, -dd * params.eta_b);
    trip.emplace_back(row, L.slack_family[6].start + i, -1.0);
    ++row;
  }

  // Cone-coupling rows, pace cones first.
  for (int i = 0; i < n; ++i) {
    ConeBlockRows block = soc_alpha_block(i, L, row);
    trip.insert(trip.end(), block.triplets.begin(), block.triplets.end());
    prog.b.segment<3>(row) = block.rhs;
    row += 3;
  }
  for (int i = 0; i < n; ++i) {
    ConeBlockRows block = soc_beta_block(i, L, row);
    trip.insert(trip.end(), block.triplets.begin(), block.triplets.end());
    prog.b.segment<3>(row) = block.rhs;
    row += 3;
  }

  if (row != census.rows) {
    throw AssemblyError("structure", "row count disagrees with the census");
  }

  prog.A.resize(census.rows, L.total);
  prog.A.setFromTriplets(trip.begin(), trip.end());
  prog.A.makeCompressed();

  prog.cones.push_back({ConeKind::free_cone, 0, 5 * n});
  prog.cones.push_back({ConeKind::nonneg, L.slack.start, L.slack.count});
  for (int k = 0; k < 2 * n; ++k) {
    prog.cones.push_back({ConeKind::soc3, L.cone.start + 3 * k, 3});
  }

  // Structural sanity: every row nonempty, no two rows identical.
  {
    std::vector<std::vector<std::pair<int, double>>> rows_entries(census.rows);
    for (const auto& t : trip) {
      rows_entries[t.row()].emplace_back(t.col(), t.value());
    }
    std::map<std::vector<std::pair<int, double>>, int> seen;
    for (int r = 0; r < census.rows; ++r) {
      auto& entries = rows_entries[r];
      if (entries.empty()) {
        throw AssemblyError("structure", "row " + std::to_string(r) + " is empty");
      }
      std::sort(entries.begin(), entries.end());
      auto [it, inserted] = seen.emplace(entries, r);
      if (!inserted) {
        throw AssemblyError("structure",
                            "rows " + std::to_string(it->second) + " and " +
                                std::to_string(r) + " are duplicates");
      }
    }
  }

  return prog;
}

Trajectory extract_solution(const Eigen::VectorXd& x,
                            const VariableLayout& layout) {
  if (x.size() != layout.total) {
    throw DimensionError("solution vector does not match the program layout");
  }
  Trajectory traj;
  const int n = layout.segments;
  traj.v = x.segment(layout.v.start, n);
  traj.alpha = x.segment(layout.alpha.start, n);
  traj.beta = x.segment(layout.beta.start, n);
  traj.force = x.segment(layout.force.start, n);
  traj.energy = x.segment(layout.energy.start, n);
  return traj;
}

Eigen::VectorXd embed_trajectory(const Trajectory& traj,
                                 const ConicProgram& prog) {
  const VariableLayout& L = prog.layout;
  const int n = L.segments;
  if (traj.segments() != n) {
    throw DimensionError("trajectory does not match the program layout");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.total);
  x.segment(L.v.start, n) = traj.v;
  x.segment(L.alpha.start, n) = traj.alpha;
  x.segment(L.beta.start, n) = traj.beta;
  x.segment(L.force.start, n) = traj.force;
  x.segment(L.energy.start, n) = traj.energy;

  // Every slack and cone variable appears in exactly one row together with
  // core variables only; solve each of those rows for the derived value.
  const Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(prog.A);
  for (int r = 0; r < prog.rows(); ++r) {
    int derived_col = -1;
    double derived_coeff = 0.0;
    double acc = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, r);
         it; ++it) {
      if (it.col() >= L.slack.start) {
        derived_col = static_cast<int>(it.col());
        derived_coeff = it.value();
      } else {
        acc += it.value() * x[it.col()];
      }
    }
    if (derived_col >= 0) {
      x[derived_col] = (prog.b[r] - acc) / derived_coeff;
    }
  }
  return x;
}

void export_program(const ConicProgram& prog, std::ostream& out) {
  char buf[64];
  const auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "eetc-conic-program v1\n";
  out << "vars " << prog.cols() << "\n";
  out << "rows " << prog.rows() << "\n";
  out << "cones " << prog.cones.size() << "\n";
  for (const ConeBlock& blk : prog.cones) {
    const char* kind = blk.kind == ConeKind::free_cone ? "free"
                       : blk.kind == ConeKind::nonneg  ? "nonneg"
                                                       : "soc3";
    out << kind << " " << blk.start << " " << blk.width << "\n";
  }
  int c_nnz = 0;
  for (int j = 0; j < prog.c.size(); ++j) c_nnz += prog.c[j] != 0.0;
  out << "c " << c_nnz << "\n";
  for (int j = 0; j < prog.c.size(); ++j) {
    if (prog.c[j] != 0.0) out << j << " " << fmt(prog.c[j]) << "\n";
  }
  out << "A " << prog.A.nonZeros() << "\n";
  for (int col = 0; col < prog.A.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(prog.A, col); it; ++it) {
      out << it.row() << " " << it.col() << " " << fmt(it.value()) << "\n";
    }
  }
  out << "b " << prog.b.size() << "\n";
  for (int r = 0; r < prog.b.size(); ++r) out << fmt(prog.b[r]) << "\n";
  out << "end\n";
}

}  // namespace eetc
