#include "eetc/exactness.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "eetc/model.hpp"
#include "eetc/solver.hpp"
#include "scenario_helpers.hpp"

using namespace eetc;
namespace eth = eetc::testing;

namespace {

// A comfortably interior base case: generous schedule on level track, solved
// and snapped to exact cone equality.
struct ExactBase {
  TrainParams params;
  JourneySpec spec;
  Trajectory traj;
};

ExactBase make_exact_base(int segments = 8) {
  // Pinned-terminal cruise: the train accelerates once and then holds
  // effort positive to the end (no coasting), below the speed limit. Every
  // chain segment carries real work and every inequality keeps a healthy
  // interior margin, which is what the perturbation machinery needs.
  ExactBase base;
  base.params = eth::table1_params();
  JourneySpec spec = eth::flat_journey(segments, 250.0 * segments, 0.0, 25.0);
  spec.terminal_speed_fixed = true;
  spec.terminal_speed = 18.0;
  spec.journey_time = 1.03 * spec.total_distance / 18.0;
  eth::SolvedCase solved = eth::solve_case(spec, base.params);
  REQUIRE(solved.result.stats.status == SolveStatus::optimal);
  auto [exact, adjusted] = eth::project_to_exact(solved.traj, spec, base.params);
  adjusted.terminal_speed_fixed = false;  // the descent argument frees v_N
  base.spec = adjusted;
  base.traj = exact;
  REQUIRE(check_model_b(base.traj, base.spec, base.params, 1e-8).feasible);
  for (int i = 0; i < segments; ++i) {
    // no-coast sanity for the work-constancy checks downstream
    REQUIRE(std::abs(base.traj.force[i]) * base.spec.segment_length > 10.0);
  }
  return base;
}

}  // namespace

TEST_CASE("gaps of an exactly tight trajectory vanish") {
  const ExactBase base = make_exact_base();
  const ExactnessReport report = gaps(base.traj, base.spec, 1e-6);
  CHECK(report.exact);
  CHECK(std::abs(report.max_alpha_gap) <= 1e-12);
  CHECK(std::abs(report.max_beta_gap) <= 1e-12);
  CHECK(report.assumption_flat_start);
}

TEST_CASE("an inflated squared speed is reported with its index and size") {
  const ExactBase base = make_exact_base();
  Trajectory traj = base.traj;
  traj.beta[2] += 0.5;
  const ExactnessReport report = gaps(traj, base.spec, 1e-6);
  CHECK(!report.exact);
  CHECK(report.max_beta_index == 2);
  CHECK(report.max_beta_gap == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("terminal slack is reported separately and never fails exactness") {
  const ExactBase base = make_exact_base();
  Trajectory traj = base.traj;
  traj.beta[traj.segments() - 1] += 1.0;
  const ExactnessReport report = gaps(traj, base.spec, 1e-6);
  CHECK(report.exact);
  CHECK(report.beta_terminal_slack == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("chain maps and their derivatives") {
  const ExactBase base = make_exact_base();
  const double v = 17.0, alpha = 1.0 / 16.0;

  SUBCASE("speed reduction solves the equal-slack equation") {
    const double eps_beta = 3.0;
    const double eps_v = chains::speed_reduction(v, eps_beta);
    // (v - eps_v)^2 == v^2 - eps_beta
    CHECK((v - eps_v) * (v - eps_v) ==
          doctest::Approx(v * v - eps_beta).epsilon(1e-14));
    CHECK_THROWS_AS(chains::speed_reduction(v, v * v + 1.0), Error);
  }

  SUBCASE("pace increase preserves the product") {
    const double eps_v = 0.4;
    const double eps_alpha = chains::pace_increase(v, alpha, eps_v);
    CHECK((v - eps_v) * (alpha + eps_alpha) ==
          doctest::Approx(v * alpha).epsilon(1e-14));
  }

  SUBCASE("pace decrease preserves the product under a speed rise") {
    const double eps_v = 0.4;
    const double eps_alpha = chains::pace_decrease(v, alpha, eps_v);
    CHECK((v + eps_v) * (alpha - eps_alpha) ==
          doctest::Approx(v * alpha).epsilon(1e-14));
  }

  SUBCASE("derivatives match central finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> vv(2.0, 30.0);
    std::uniform_real_distribution<double> frac(0.05, 0.6);
    for (int k = 0; k < 200; ++k) {
      const double v0 = vv(rng);
      const double a0 = 1.1 / v0;
      const double eb = frac(rng) * v0 * v0 * 0.5;
      const double h = 1e-6 * v0 * v0;
      const double fd = (chains::speed_reduction(v0, eb + h) -
                         chains::speed_reduction(v0, eb - h)) /
                        (2.0 * h);
      const double an = chains::speed_reduction_derivative(v0, eb);
      CHECK(std::abs(fd - an) <= 1e-6 * std::abs(an));

      const double ev = frac(rng) * v0 * 0.5;
      const double hv = 1e-6 * v0;
      const double fd2 = (chains::pace_increase(v0, a0, ev + hv) -
                          chains::pace_increase(v0, a0, ev - hv)) /
                         (2.0 * hv);
      const double an2 = chains::pace_increase_derivative(v0, a0, ev);
      CHECK(std::abs(fd2 - an2) <= 1e-6 * std::abs(an2));
    }
  }

  SUBCASE("work-preserving propagation uses the documented coefficients") {
    const double eps_beta = 2.0, eps_v = 0.1;
    const double got =
        chains::next_beta_reduction(eps_beta, eps_v, base.spec, base.params);
    const double half_m = 0.5 * base.params.mass;
    const double expect = ((half_m + base.params.davis_c * base.spec.segment_length) *
                               eps_beta +
                           base.params.davis_b * base.spec.segment_length * eps_v) /
                          half_m;
    CHECK(got == doctest::Approx(expect).epsilon(1e-15));
  }

  SUBCASE("zero drag slope stops the backward propagation") {
    TrainParams no_b = base.params;
    no_b.davis_b = 0.0;
    // A pivot speed drop alone seeds nothing below when B = 0.
    const double seed = no_b.davis_b * base.spec.segment_length * 0.1 /
                        (0.5 * no_b.mass);
    CHECK(seed == 0.0);
    const chains::BackwardChain chain =
        chains::backward_chain(base.traj, base.spec, no_b, 3, seed);
    CHECK(chain.valid);
    CHECK(chain.eps_beta.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(chain.eps_v.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(chain.alpha_sum == 0.0);
  }
}

TEST_CASE("backward chain keeps every interior work term constant") {
  const ExactBase base = make_exact_base();
  const int pivot = 5;
  const double seed = 1e-3;
  const chains::BackwardChain chain =
      chains::backward_chain(base.traj, base.spec, base.params, pivot - 1, seed);
  REQUIRE(chain.valid);

  Trajectory perturbed = base.traj;
  for (int j = 0; j < pivot; ++j) {
    perturbed.v[j] -= chain.eps_v[j];
    perturbed.beta[j] -= chain.eps_beta[j];
    perturbed.alpha[j] += chain.eps_alpha[j];
  }
  const double dd = base.spec.segment_length;
  for (int j = 1; j < pivot; ++j) {
    const double before =
        segment_force(base.traj.beta[j - 1], base.traj.v[j], base.traj.beta[j],
                      base.spec.altitude_delta[j], base.spec, base.params) *
        dd;
    const double after =
        segment_force(perturbed.beta[j - 1], perturbed.v[j], perturbed.beta[j],
                      base.spec.altitude_delta[j], base.spec, base.params) *
        dd;
    CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, std::abs(before)));
  }
  // products preserved
  for (int j = 0; j < pivot; ++j) {
    CHECK(perturbed.v[j] * perturbed.alpha[j] ==
          doctest::Approx(base.traj.v[j] * base.traj.alpha[j]).epsilon(1e-10));
  }
}

TEST_CASE("part 1 builds a descent certificate from pace slack") {
  const ExactBase base = make_exact_base();
  const int pivot = 5;
  auto [traj, spec] = eth::inflate_alpha(base.traj, base.spec, pivot, 1e-3);
  REQUIRE(check_model_b(traj, spec, base.params, 1e-8).feasible);

  const PerturbationCertificate cert =
      part1_perturbation(traj, spec, base.params, pivot, 1e-3);
  CHECK(cert.kind == PerturbationCertificate::Kind::part1);
  CHECK(cert.objective_after < cert.objective_before);
  CHECK(verify_descent(cert, spec, base.params, 1e-8));

  // Work terms promised constant: segments 2..pivot+1 (1-based).
  const double dd = spec.segment_length;
  for (int j = 1; j <= pivot; ++j) {
    const double before = traj.force[j] * dd;
    const double after = cert.perturbed.force[j] * dd;
    CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, std::abs(before)));
  }
  // First-segment work strictly dropped.
  CHECK(cert.perturbed.force[0] < traj.force[0]);
  // Pace sum preserved.
  CHECK(std::abs(cert.perturbed.alpha.sum() - traj.alpha.sum()) <= 1e-10);
}

TEST_CASE("part 1 at the first segment needs no chain") {
  const ExactBase base = make_exact_base();
  auto [traj, spec] = eth::inflate_alpha(base.traj, base.spec, 0, 5e-4);
  const PerturbationCertificate cert =
      part1_perturbation(traj, spec, base.params, 0, 1e-3);
  CHECK(cert.objective_after < cert.objective_before);
  CHECK(std::abs(cert.perturbed.alpha.sum() - traj.alpha.sum()) <= 1e-12);
  // only the pivot moved
  for (int j = 1; j < traj.segments(); ++j) {
    CHECK(cert.delta_v[j] == 0.0);
    CHECK(cert.delta_beta[j] == 0.0);
    CHECK(cert.delta_alpha[j] == 0.0);
  }
}

TEST_CASE("part 1 refuses a tight pivot") {
  const ExactBase base = make_exact_base();
  CHECK_THROWS_AS(
      part1_perturbation(base.traj, base.spec, base.params, 3, 1e-3),
      AlreadyExactError);
}

TEST_CASE("part 2 builds a descent certificate from squared-speed slack") {
  const ExactBase base = make_exact_base();
  for (int pivot : {1, 3, base.traj.segments() - 2}) {
    CAPTURE(pivot);
    const Trajectory traj =
        eth::inflate_beta(base.traj, base.spec, base.params, pivot, 1e-3, 1e-3);
    REQUIRE(check_model_b(traj, base.spec, base.params, 1e-8).feasible);

    const PerturbationCertificate cert =
        part2_perturbation(traj, base.spec, base.params, pivot);
    CHECK(cert.kind == PerturbationCertificate::Kind::part2);
    CHECK(cert.objective_after < cert.objective_before);
    CHECK(verify_descent(cert, base.spec, base.params, 1e-8));

    // Work terms promised constant on every segment but the first.
    const double dd = base.spec.segment_length;
    for (int j = 1; j < traj.segments(); ++j) {
      const double before = traj.force[j] * dd;
      const double after = cert.perturbed.force[j] * dd;
      CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, std::abs(before)));
    }
    CHECK(cert.perturbed.force[0] < traj.force[0]);
    CHECK(std::abs(cert.perturbed.alpha.sum() - traj.alpha.sum()) <= 1e-10);
    CHECK(cert.construction_order.find("bisection") != std::string::npos);
  }
}

TEST_CASE("part 2 refuses a tight pivot and a tight terminal") {
  const ExactBase base = make_exact_base();
  CHECK_THROWS_AS(part2_perturbation(base.traj, base.spec, base.params, 3),
                  AlreadyExactError);

  // Slack at the pivot but none at the terminal: precondition failure.
  Trajectory traj = base.traj;
  traj.beta[3] += 1e-3;
  CHECK_THROWS_AS(part2_perturbation(traj, base.spec, base.params, 3),
                  PreconditionError);
}

TEST_CASE("verify_descent rejects corrupted and null certificates") {
  const ExactBase base = make_exact_base();
  auto [traj, spec] = eth::inflate_alpha(base.traj, base.spec, 4, 1e-3);
  PerturbationCertificate cert =
      part1_perturbation(traj, spec, base.params, 4, 1e-3);
  REQUIRE(verify_descent(cert, spec, base.params, 1e-8));

  PerturbationCertificate corrupted = cert;
  corrupted.perturbed.beta[2] = 0.5 * corrupted.perturbed.v[2] *
                                corrupted.perturbed.v[2];  // cone broken
  CHECK(!verify_descent(corrupted, spec, base.params, 1e-8));

  PerturbationCertificate null_cert = cert;
  null_cert.perturbed = traj;
  null_cert.objective_after = null_cert.objective_before;
  CHECK(!verify_descent(null_cert, spec, base.params, 1e-8));
}

TEST_CASE("relaxed-model check covers the relaxation inequalities") {
  const ExactBase base = make_exact_base();
  Trajectory traj = base.traj;
  traj.alpha[2] = 0.9 / traj.v[2];  // pace below reciprocal speed
  const FeasibilityReport report =
      check_model_b(traj, base.spec, base.params, 1e-8);
  CHECK(!report.feasible);
  CHECK(report.relaxation_bound[2] > 0.0);
}
