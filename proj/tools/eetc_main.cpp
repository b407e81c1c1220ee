#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "eetc/conic.hpp"
#include "eetc/errors.hpp"
#include "eetc/io.hpp"
#include "eetc/model.hpp"

namespace {

struct CommonInputs {
  std::string params_path;
  std::string journey_path;
  std::string track_altitude_path;
  std::string track_limits_path;
};

void add_input_options(CLI::App* cmd, CommonInputs* inputs) {
  cmd->add_option("--params", inputs->params_path, "train parameter file")
      ->required();
  cmd->add_option("--journey", inputs->journey_path, "journey file")->required();
  cmd->add_option("--track-altitude", inputs->track_altitude_path,
                  "altitude profile CSV")
      ->required();
  cmd->add_option("--track-limits", inputs->track_limits_path,
                  "speed limit CSV")
      ->required();
}

eetc::JourneySpec load_spec(const CommonInputs& inputs,
                            std::optional<int> segments,
                            std::optional<double> time_s,
                            std::optional<double> pin_terminal) {
  eetc::TrackProfile track = eetc::load_track(inputs.track_altitude_path,
                                              inputs.track_limits_path);
  eetc::JourneyFile journey = eetc::load_journey(inputs.journey_path);
  if (segments) journey.segments = *segments;
  if (time_s) journey.time_s = *time_s;
  if (pin_terminal) journey.terminal_speed_mps = *pin_terminal;
  return eetc::build_journey(track, journey);
}

int failure(eetc::ExitCode code, const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"energy-efficient train speed-profile optimizer"};
  app.require_subcommand(1);

  CommonInputs inputs;
  std::optional<int> segments;
  std::optional<double> time_s;
  std::optional<double> pin_terminal;

  // --- solve ---
  auto* solve_cmd = app.add_subcommand(
      "solve", "assemble, solve, audit and emit trajectory artifacts");
  add_input_options(solve_cmd, &inputs);
  std::string out_dir = "out";
  eetc::RunConfig config;
  bool no_audit = false;
  bool with_oracle = false;
  std::string trace_path;
  solve_cmd->add_option("--out", out_dir, "output directory");
  solve_cmd->add_option("--segments", segments, "override segment count");
  solve_cmd->add_option("--time", time_s, "override journey time [s]");
  solve_cmd->add_option("--pin-terminal", pin_terminal,
                        "pin the terminal speed [m/s]");
  solve_cmd->add_option("--feas-tol", config.solver.feas_tol,
                        "solver feasibility tolerance");
  solve_cmd->add_option("--gap-tol", config.solver.gap_tol,
                        "solver duality-gap tolerance");
  solve_cmd->add_option("--max-iters", config.solver.max_iterations,
                        "solver iteration limit");
  solve_cmd->add_option("--exactness-tol", config.exactness_tol,
                        "audit tolerance on the relaxation gaps");
  solve_cmd->add_flag("--no-audit", no_audit, "skip the exactness audit");
  solve_cmd->add_flag("--oracle", with_oracle,
                      "run the exhaustive check (needs <= 6 segments)");
  solve_cmd->add_option("--grid-res", config.grid.resolution,
                        "oracle grid points per segment");
  solve_cmd->add_option("--time-window", config.grid.time_window,
                        "oracle time window [s] (default 0.5% of T)");
  solve_cmd->add_option("--trace", trace_path,
                        "write per-iteration JSONL records here");

  // --- audit ---
  auto* audit_cmd = app.add_subcommand(
      "audit", "recompute the exactness report for a stored trajectory");
  CommonInputs audit_inputs;
  add_input_options(audit_cmd, &audit_inputs);
  std::string trajectory_path;
  std::string audit_json_path;
  double audit_tol = 1e-6;
  audit_cmd->add_option("--trajectory", trajectory_path, "trajectory CSV")
      ->required();
  audit_cmd->add_option("--tol", audit_tol, "exactness tolerance");
  audit_cmd->add_option("--json", audit_json_path,
                        "also write the report as JSON here");

  // --- oracle-check ---
  auto* oracle_cmd = app.add_subcommand(
      "oracle-check", "solve and compare against the exhaustive search");
  CommonInputs oracle_inputs;
  add_input_options(oracle_cmd, &oracle_inputs);
  int oracle_res = 60;
  double oracle_window = 0.0;
  std::optional<int> oracle_segments;
  std::optional<double> oracle_time;
  oracle_cmd->add_option("--grid-res", oracle_res, "grid points per segment");
  oracle_cmd->add_option("--time-window", oracle_window,
                         "time window [s] (default 0.5% of T)");
  oracle_cmd->add_option("--segments", oracle_segments,
                         "override segment count");
  oracle_cmd->add_option("--time", oracle_time, "override journey time [s]");

  // --- export-program ---
  auto* export_cmd = app.add_subcommand(
      "export-program", "write the assembled conic program as plain text");
  CommonInputs export_inputs;
  add_input_options(export_cmd, &export_inputs);
  std::string export_path;
  std::optional<int> export_segments;
  export_cmd->add_option("--out", export_path, "output file (default stdout)");
  export_cmd->add_option("--segments", export_segments,
                         "override segment count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) {
      config.params_path = inputs.params_path;
      config.journey_path = inputs.journey_path;
      config.track_altitude_path = inputs.track_altitude_path;
      config.track_limits_path = inputs.track_limits_path;
      config.output_dir = out_dir;
      config.audit = !no_audit;
      config.run_oracle = with_oracle;
      config.override_segments = segments;
      config.override_time = time_s;
      config.pin_terminal_speed = pin_terminal;
      if (!trace_path.empty()) config.trace_path = trace_path;

      const eetc::PipelineResult result = eetc::run_pipeline(config);
      std::cout << "status: " << eetc::to_string(result.stats.status)
                << "  iterations: " << result.stats.iterations << "\n";
      if (result.stats.status == eetc::SolveStatus::optimal) {
        std::cout << "objective: " << result.stats.objective << " J\n";
        if (config.audit) {
          std::cout << "exact: " << (result.exactness.exact ? "yes" : "no")
                    << "  (max pace gap " << result.exactness.max_alpha_gap
                    << ", max squared-speed gap "
                    << result.exactness.max_beta_gap << ")\n";
        }
        std::cout << "artifacts written to " << out_dir << "\n";
      }
      if (result.exit_code != eetc::ExitCode::ok) {
        return failure(result.exit_code, result.message);
      }
      return 0;
    }

    if (audit_cmd->parsed()) {
      const eetc::JourneySpec spec =
          load_spec(audit_inputs, std::nullopt, std::nullopt, std::nullopt);
      const eetc::Trajectory traj =
          eetc::read_trajectory_csv(trajectory_path, spec);
      const eetc::ExactnessReport report = eetc::gaps(traj, spec, audit_tol);
      eetc::write_exactness_text(std::cout, report);
      if (!audit_json_path.empty()) {
        std::ofstream out(audit_json_path);
        if (!out) {
          return failure(eetc::ExitCode::parse_error,
                         "cannot write " + audit_json_path);
        }
        out << eetc::exactness_json(report);
      }
      return report.exact ? 0 : static_cast<int>(eetc::ExitCode::not_exact);
    }

    if (oracle_cmd->parsed()) {
      eetc::RunConfig oc;
      oc.params_path = oracle_inputs.params_path;
      oc.journey_path = oracle_inputs.journey_path;
      oc.track_altitude_path = oracle_inputs.track_altitude_path;
      oc.track_limits_path = oracle_inputs.track_limits_path;
      oc.output_dir = std::filesystem::temp_directory_path() / "eetc-oracle";
      oc.run_oracle = true;
      oc.grid.resolution = oracle_res;
      oc.grid.time_window = oracle_window;
      oc.override_segments = oracle_segments;
      oc.override_time = oracle_time;
      const eetc::PipelineResult result = eetc::run_pipeline(oc);
      if (result.oracle) {
        std::cout << eetc::comparison_json(*result.oracle, 0);
      }
      if (result.exit_code != eetc::ExitCode::ok) {
        return failure(result.exit_code, result.message);
      }
      return 0;
    }

    if (export_cmd->parsed()) {
      const eetc::JourneySpec spec = load_spec(export_inputs, export_segments,
                                               std::nullopt, std::nullopt);
      const eetc::TrainParams params =
          eetc::load_params(export_inputs.params_path);
      const eetc::ConicProgram prog = eetc::assemble(spec, params);
      if (export_path.empty()) {
        eetc::export_program(prog, std::cout);
      } else {
        std::ofstream out(export_path);
        if (!out) {
          return failure(eetc::ExitCode::parse_error,
                         "cannot write " + export_path);
        }
        eetc::export_program(prog, out);
      }
      return 0;
    }
  } catch (const eetc::ParseError& e) {
    return failure(eetc::ExitCode::parse_error, e.what());
  } catch (const eetc::AssemblyError& e) {
    return failure(eetc::ExitCode::assembly_error, e.what());
  } catch (const eetc::Error& e) {
    return failure(eetc::ExitCode::solver_failure, e.what());
  }
  return static_cast<int>(eetc::ExitCode::usage);
}
