#include "eetc/conic.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "eetc/model.hpp"
#include "scenario_helpers.hpp"

using namespace eetc;
using eetc::testing::flat_journey;
using eetc::testing::table1_params;

TEST_CASE("census matches the assembled program") {
  for (int n : {1, 7, 100}) {
    const JourneySpec spec = flat_journey(n, 50.0 * n, 3.0 * n, 25.0);
    const ConicProgram prog = assemble(spec, table1_params());
    const AssemblyCensus census = expected_census(spec);
    CHECK(prog.cols() == census.variables);
    CHECK(prog.rows() == census.rows);
    CHECK(census.variables == 18 * n);
    CHECK(census.rows == 14 * n + 1);
    CHECK(census.equality_rows == n + 1);
    int soc_blocks = 0, nonneg = 0;
    for (const ConeBlock& blk : prog.cones) {
      if (blk.kind == ConeKind::soc3) ++soc_blocks;
      if (blk.kind == ConeKind::nonneg) nonneg += blk.width;
    }
    CHECK(soc_blocks == census.soc3_blocks);
    CHECK(nonneg == census.nonneg_count);
  }
}

TEST_CASE("terminal pinning adds one equality row") {
  JourneySpec spec = flat_journey(5, 250.0, 30.0, 25.0);
  spec.terminal_speed_fixed = true;
  spec.terminal_speed = 5.0;
  const ConicProgram prog = assemble(spec, table1_params());
  CHECK(prog.rows() == expected_census(spec).rows);
  CHECK(expected_census(spec).equality_rows == 5 + 2);
}

TEST_CASE("layout covers the variables exactly once") {
  const JourneySpec spec = flat_journey(6, 300.0, 25.0, 20.0);
  const VariableLayout layout = make_layout(spec);
  std::vector<int> hits(layout.total, 0);
  const auto mark = [&](const Range& r) {
    for (int j = r.start; j < r.end(); ++j) ++hits[j];
  };
  mark(layout.v);
  mark(layout.alpha);
  mark(layout.beta);
  mark(layout.force);
  mark(layout.energy);
  mark(layout.slack);
  mark(layout.cone);
  for (int h : hits) CHECK(h == 1);
  for (const Range& fam : layout.slack_family) {
    CHECK(layout.slack.contains(fam.start));
    CHECK(layout.slack.contains(fam.end() - 1));
  }
}

TEST_CASE("assembly rejects a nonpositive speed limit by family") {
  JourneySpec spec = flat_journey(4, 200.0, 20.0, 20.0);
  spec.speed_limit[2] = 0.0;
  try {
    assemble(spec, table1_params());
    FAIL("expected AssemblyError");
  } catch (const AssemblyError& e) {
    CHECK(e.family() == "speed-limit");
  }
}

TEST_CASE("pace-cone embedding classifies boundary, interior, infeasible") {
  // boundary: alpha v = 1
  CHECK(std::abs(soc3_margin(2.0, 2.0 - 0.5, 2.0 + 0.5)) <= 1e-12);
  CHECK(alpha_cone_member(2.0, 0.5, 1e-12));
  // interior: alpha v = 2
  CHECK(soc3_margin(2.0, 2.0 - 1.0, 2.0 + 1.0) > 0.5);
  CHECK(alpha_cone_member(2.0, 1.0));
  // infeasible: alpha v = 0.5
  CHECK(soc3_margin(2.0, 1.0 - 0.5, 1.0 + 0.5) < -0.5);
  CHECK(!alpha_cone_member(1.0, 0.5));
}

TEST_CASE("squared-speed-cone embedding classifies the three regimes") {
  CHECK(std::abs(soc3_margin(2.0 * 2.0, 4.0 - 1.0, 4.0 + 1.0)) <= 1e-12);
  CHECK(beta_cone_member(4.0, 2.0, 1e-12));
  CHECK(beta_cone_member(4.0, 1.0));
  CHECK(!beta_cone_member(4.0, 3.0));
}

TEST_CASE("cone tightness identities") {
  // (alpha+v)^2 - (alpha-v)^2 = 4 alpha v and (beta+1)^2 - (beta-1)^2 = 4 beta
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> val(0.01, 50.0);
  for (int k = 0; k < 10000; ++k) {
    const double a = val(rng), v = val(rng), b = val(rng);
    const double lhs_a = (a + v) * (a + v) - (a - v) * (a - v);
    CHECK(std::abs(lhs_a - 4.0 * a * v) <= 1e-10 * std::max(1.0, 4.0 * a * v));
    const double lhs_b = (b + 1.0) * (b + 1.0) - (b - 1.0) * (b - 1.0);
    CHECK(std::abs(lhs_b - 4.0 * b) <= 1e-10 * std::max(1.0, 4.0 * b));
  }
}

TEST_CASE("membership and direct inequality agree on random pairs") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> val(0.01, 40.0);
  for (int k = 0; k < 10000; ++k) {
    const double a = val(rng), v = val(rng), b = val(rng);
    const bool pace_direct = a * v >= 1.0;
    const bool pace_cone = alpha_cone_member(a, v, 1e-10);
    if (std::abs(a * v - 1.0) > 1e-10) CHECK(pace_direct == pace_cone);
    const bool speed_direct = v * v <= b;
    const bool speed_cone = beta_cone_member(b, v, 1e-10);
    if (std::abs(b - v * v) > 1e-10) CHECK(speed_direct == speed_cone);
  }
}

namespace {

Trajectory mild_feasible_trajectory(const JourneySpec& spec,
                                    const TrainParams& params,
                                    std::mt19937_64& rng) {
  // Speeds follow a gentle random walk so the implied efforts stay well
  // inside the force and power bounds; the from-rest segment starts slow
  // enough that its acceleration fits the rated power.
  std::uniform_real_distribution<double> start_frac(0.36, 0.44);
  std::uniform_real_distribution<double> walk(-0.4, 0.4);
  std::uniform_real_distribution<double> pace_slack(1.0, 1.15);
  std::uniform_real_distribution<double> beta_slack(1.0, 1.02);
  const int n = spec.segment_count;
  Trajectory traj;
  traj.v.resize(n);
  traj.alpha.resize(n);
  traj.beta.resize(n);
  traj.force.resize(n);
  traj.energy.resize(n);
  double v = spec.speed_limit[0] * start_frac(rng);
  for (int i = 0; i < n; ++i) {
    v = std::clamp(v + walk(rng), 0.4 * spec.speed_limit[i],
                   0.9 * spec.speed_limit[i]);
    traj.v[i] = v;
    traj.alpha[i] = pace_slack(rng) / v;
    traj.beta[i] =
        std::min(v * v * beta_slack(rng), spec.speed_limit[i] * spec.speed_limit[i]);
  }
  for (int i = 0; i < n; ++i) {
    const double beta_prev = i == 0 ? 0.0 : traj.beta[i - 1];
    traj.force[i] = segment_force(beta_prev, traj.v[i], traj.beta[i],
                                  spec.altitude_delta[i], spec, params);
    traj.energy[i] = electrical_energy(traj.force[i], spec, params) + 1.0;
  }
  return traj;
}

}  // namespace

TEST_CASE("embedding a feasible point satisfies every row and cone") {
  std::mt19937_64 rng(66);
  TrainParams params = table1_params();
  for (int rep = 0; rep < 20; ++rep) {
    JourneySpec spec = flat_journey(9, 900.0, 1.0, 22.0);
    Trajectory traj = mild_feasible_trajectory(spec, params, rng);
    spec.journey_time = spec.segment_length * traj.alpha.sum();
    const ConicProgram prog = assemble(spec, params);
    const Eigen::VectorXd x = embed_trajectory(traj, prog);

    CHECK((prog.A * x - prog.b).lpNorm<Eigen::Infinity>() <= 1e-8);
    for (const ConeBlock& blk : prog.cones) {
      if (blk.kind == ConeKind::nonneg) {
        CHECK(x.segment(blk.start, blk.width).minCoeff() >= -1e-9);
      } else if (blk.kind == ConeKind::soc3) {
        CHECK(soc3_margin(x[blk.start + 1], x[blk.start + 2], x[blk.start]) >=
              -1e-9);
      }
    }

    // extract(embed(traj)) round-trips the decision values exactly.
    const Trajectory back = extract_solution(x, prog.layout);
    CHECK((back.v - traj.v).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.alpha - traj.alpha).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.beta - traj.beta).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.force - traj.force).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.energy - traj.energy).lpNorm<Eigen::Infinity>() == 0.0);

    // The program objective touches only the energy entries, so the two
    // objective routes agree to summation-order rounding.
    for (int j = 0; j < prog.c.size(); ++j) {
      CHECK(prog.c[j] == (prog.layout.energy.contains(j) ? 1.0 : 0.0));
    }
    CHECK(prog.c.dot(x) ==
          doctest::Approx(objective(traj)).epsilon(4e-16));
  }
}

TEST_CASE("extraction rejects a truncated vector") {
  const JourneySpec spec = flat_journey(4, 200.0, 20.0, 20.0);
  const ConicProgram prog = assemble(spec, table1_params());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prog.cols() - 1);
  CHECK_THROWS_AS(extract_solution(x, prog.layout), DimensionError);
}

TEST_CASE("plain-text export round-trips the program data") {
  const JourneySpec spec = flat_journey(3, 150.0, 15.0, 20.0);
  const ConicProgram prog = assemble(spec, table1_params());
  std::stringstream stream;
  export_program(prog, stream);

  std::string tag;
  stream >> tag;
  CHECK(tag == "eetc-conic-program");
  stream >> tag;  // version
  int vars = 0, rows = 0, cones = 0;
  stream >> tag >> vars;
  CHECK(vars == prog.cols());
  stream >> tag >> rows;
  CHECK(rows == prog.rows());
  stream >> tag >> cones;
  CHECK(cones == static_cast<int>(prog.cones.size()));
  for (int k = 0; k < cones; ++k) {
    std::string kind;
    int start, width;
    stream >> kind >> start >> width;
    CHECK(start == prog.cones[k].start);
    CHECK(width == prog.cones[k].width);
  }
  int c_nnz = 0;
  stream >> tag >> c_nnz;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(vars);
  for (int k = 0; k < c_nnz; ++k) {
    int j;
    double value;
    stream >> j >> value;
    c[j] = value;
  }
  CHECK((c - prog.c).lpNorm<Eigen::Infinity>() == 0.0);
  long long a_nnz = 0;
  stream >> tag >> a_nnz;
  CHECK(a_nnz == prog.A.nonZeros());
  std::vector<Eigen::Triplet<double>> trip;
  for (long long k = 0; k < a_nnz; ++k) {
    int r, cidx;
    double value;
    stream >> r >> cidx >> value;
    trip.emplace_back(r, cidx, value);
  }
  Eigen::SparseMatrix<double> a(rows, vars);
  a.setFromTriplets(trip.begin(), trip.end());
  CHECK((Eigen::MatrixXd(a) - Eigen::MatrixXd(prog.A)).lpNorm<Eigen::Infinity>() ==
        0.0);
  int b_len = 0;
  stream >> tag >> b_len;
  Eigen::VectorXd b(b_len);
  for (int k = 0; k < b_len; ++k) stream >> b[k];
  CHECK((b - prog.b).lpNorm<Eigen::Infinity>() == 0.0);
}
