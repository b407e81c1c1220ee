#include "eetc/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "eetc/conic.hpp"
#include "scenario_helpers.hpp"

using namespace eetc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("parameter file converts operator units to SI") {
  const TrainParams params = load_params("data/table1_params.txt");
  CHECK(params.mass == 144000.0);
  CHECK(params.f_max == 230810.0);
  CHECK(params.p_traction_max == 2520000.0);
  CHECK(params.p_brake_max == 2520000.0);
  CHECK(params.eta_t == 0.9);
  CHECK(params.eta_b == 0.6);
  CHECK(params.davis_a == 3001.6);
  // 2.016e-2 kN/(km/h) -> 20.16 N/(km/h) -> x3.6 N/(m/s)
  CHECK(params.davis_b == doctest::Approx(72.576).epsilon(1e-14));
  CHECK(params.davis_c ==
        doctest::Approx(6.9692e-4 * 1000.0 * 12.96).epsilon(1e-14));
  CHECK(params.gravity == 9.80665);  // default when the key is absent
}

TEST_CASE("parameter validation failures carry the file context") {
  const fs::path bad = temp_file("eetc_bad_params.txt",
                                 "mass_t = 144\nf_max_kn = 230.81\n"
                                 "p_t_max_kw = 2520\np_b_max_kw = 2520\n"
                                 "eta_t = 0.9\neta_b = 0\n"
                                 "davis_a_kn = 3.0016\n"
                                 "davis_b_kn_per_kmh = 2.016e-2\n"
                                 "davis_c_kn_per_kmh2 = 6.9692e-4\n");
  CHECK_THROWS_AS(load_params(bad), ParseError);
}

TEST_CASE("missing and unknown keys are parse errors") {
  const fs::path missing = temp_file("eetc_missing.txt", "mass_t = 144\n");
  CHECK_THROWS_AS(load_params(missing), ParseError);
  const fs::path unknown = temp_file("eetc_unknown.txt", "masss_t = 144\n");
  try {
    load_params(unknown);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("a flat track yields zero altitude deltas") {
  const fs::path alt = temp_file("eetc_flat_alt.csv",
                                 "position_m,altitude_m\n0,10\n5000,10\n");
  const fs::path lim =
      temp_file("eetc_flat_lim.csv", "from_m,limit_kmh\n0,72\n");
  const TrackProfile track = load_track(alt, lim);
  JourneyFile journey;
  journey.distance_m = 5000.0;
  journey.segments = 10;
  journey.time_s = 300.0;
  const JourneySpec spec = build_journey(track, journey);
  CHECK(spec.altitude_delta.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(spec.speed_limit[0] == doctest::Approx(20.0).epsilon(1e-14));
}

TEST_CASE("the bundled downhill span lands on the right segments") {
  const TrackProfile track =
      load_track("data/track_altitude.csv", "data/track_limits.csv");
  JourneyFile journey;
  journey.distance_m = 5000.0;
  journey.segments = 100;
  journey.time_s = 260.0;
  const JourneySpec spec = build_journey(track, journey);
  for (int i = 0; i < 100; ++i) {
    const double lo = i * 50.0, hi = (i + 1) * 50.0;
    if (hi <= 3000.0 || lo >= 4000.0) {
      CHECK(spec.altitude_delta[i] == 0.0);
    } else {
      CHECK(spec.altitude_delta[i] < 0.0);
    }
  }
  // limit sampling: 60 km/h applies from the segment containing 4200 m on
  CHECK(spec.speed_limit[83] == doctest::Approx(80.0 / 3.6));
  CHECK(spec.speed_limit[84] == doctest::Approx(60.0 / 3.6));
  // a change interior to a segment is sampled conservatively
  JourneyFile coarse = journey;
  coarse.segments = 8;  // 625 m segments; 4200 falls inside segment 7
  const JourneySpec spec8 = build_journey(track, coarse);
  CHECK(spec8.speed_limit[6] == doctest::Approx(60.0 / 3.6));
}

TEST_CASE("track structure errors carry line numbers") {
  const fs::path nonmono = temp_file(
      "eetc_nonmono.csv", "position_m,altitude_m\n0,0\n100,1\n100,2\n");
  const fs::path lim = temp_file("eetc_lim.csv", "from_m,limit_kmh\n0,72\n");
  try {
    load_track(nonmono, lim);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }

  const fs::path alt =
      temp_file("eetc_alt.csv", "position_m,altitude_m\n0,0\n5000,0\n");
  const fs::path overlap = temp_file(
      "eetc_overlap.csv", "from_m,limit_kmh\n0,72\n2000,60\n1500,80\n");
  try {
    load_track(alt, overlap);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }

  const fs::path negative =
      temp_file("eetc_neg.csv", "from_m,limit_kmh\n0,-5\n");
  CHECK_THROWS_AS(load_track(alt, negative), ParseError);
}

TEST_CASE("journeys beyond the track coverage are rejected") {
  const fs::path alt =
      temp_file("eetc_short_alt.csv", "position_m,altitude_m\n0,0\n1000,0\n");
  const fs::path lim = temp_file("eetc_lim2.csv", "from_m,limit_kmh\n0,72\n");
  const TrackProfile track = load_track(alt, lim);
  JourneyFile journey;
  journey.distance_m = 2000.0;
  journey.segments = 4;
  journey.time_s = 120.0;
  CHECK_THROWS_AS(build_journey(track, journey), ValidationError);
}

TEST_CASE("significant-digit rounding round-trips through text") {
  CHECK(round_sig(1.0 / 3.0) == doctest::Approx(0.333333333333).epsilon(1e-15));
  CHECK(round_sig(0.0) == 0.0);
  std::ostringstream s;
  s.precision(12);
  const double x = 12345.6789012345;
  CHECK(round_sig(round_sig(x)) == round_sig(x));
}

TEST_CASE("trajectory table round-trips and reproduces the audit bitwise") {
  const TrainParams params = testing::table1_params();
  JourneySpec spec = testing::flat_journey(12, 1200.0, 75.0, 22.0);
  testing::SolvedCase solved = testing::solve_case(spec, params);
  REQUIRE(solved.result.stats.status == SolveStatus::optimal);

  const Trajectory traj = rounded(solved.traj);
  std::ostringstream table;
  write_trajectory_csv(table, traj, spec);

  const fs::path path = temp_file("eetc_traj.csv", table.str());
  const Trajectory back = read_trajectory_csv(path, spec);
  CHECK((back.v - traj.v).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.alpha - traj.alpha).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.beta - traj.beta).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.force - traj.force).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.energy - traj.energy).lpNorm<Eigen::Infinity>() == 0.0);

  const std::string report_a = exactness_json(gaps(traj, spec));
  const std::string report_b = exactness_json(gaps(back, spec));
  CHECK(report_a == report_b);
}

TEST_CASE("pipeline solves the bundled case end to end") {
  RunConfig config;
  config.params_path = "data/table1_params.txt";
  config.journey_path = "data/journey_default.txt";
  config.track_altitude_path = "data/track_altitude.csv";
  config.track_limits_path = "data/track_limits.csv";
  config.override_segments = 20;  // quick variant of the bundled case
  config.output_dir = fs::temp_directory_path() / "eetc_pipe_test";
  fs::remove_all(config.output_dir);
  const PipelineResult result = run_pipeline(config);
  CHECK(result.exit_code == ExitCode::ok);
  CHECK(result.stats.status == SolveStatus::optimal);
  CHECK(result.exactness.exact);
  for (const char* name :
       {"trajectory.csv", "solve_stats.json", "exactness.json", "exactness.txt",
        "plot_speed_vs_distance.csv", "plot_effort_vs_distance.csv",
        "plot_alpha_vs_inv_v.csv", "plot_beta_vs_v2.csv"}) {
    CHECK(fs::exists(config.output_dir / name));
  }

  // Final cumulative time matches the schedule.
  const Eigen::VectorXd cum =
      result.trajectory.cumulative_time(5000.0 / 20);
  CHECK(std::abs(cum[19] - 260.0) <= 1e-6 * 260.0);

  // Audit-only reload reproduces the report byte for byte.
  JourneyFile jf = load_journey(config.journey_path);
  jf.segments = 20;
  const JourneySpec spec = build_journey(
      load_track(config.track_altitude_path, config.track_limits_path), jf);
  const Trajectory reloaded =
      read_trajectory_csv(config.output_dir / "trajectory.csv", spec);
  std::ifstream stored(config.output_dir / "exactness.json");
  std::stringstream buffer;
  buffer << stored.rdbuf();
  CHECK(exactness_json(gaps(reloaded, spec, config.exactness_tol)) ==
        buffer.str());
}

TEST_CASE("an impossible schedule maps to the infeasibility exit code") {
  RunConfig config;
  config.params_path = "data/table1_params.txt";
  config.journey_path = "data/journey_default.txt";
  config.track_altitude_path = "data/track_altitude.csv";
  config.track_limits_path = "data/track_limits.csv";
  config.override_segments = 20;
  config.override_time = 10.0;
  config.output_dir = fs::temp_directory_path() / "eetc_pipe_infeasible";
  fs::remove_all(config.output_dir);
  const PipelineResult result = run_pipeline(config);
  CHECK(result.exit_code == ExitCode::infeasible);
  CHECK(!fs::exists(config.output_dir / "trajectory.csv"));
}

TEST_CASE("a missing input maps to the parse exit code") {
  RunConfig config;
  config.params_path = "data/does_not_exist.txt";
  config.journey_path = "data/journey_default.txt";
  config.track_altitude_path = "data/track_altitude.csv";
  config.track_limits_path = "data/track_limits.csv";
  config.output_dir = fs::temp_directory_path() / "eetc_pipe_missing";
  const PipelineResult result = run_pipeline(config);
  CHECK(result.exit_code == ExitCode::parse_error);
}
