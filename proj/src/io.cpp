#include "eetc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "eetc/conic.hpp"
#include "eetc/errors.hpp"
#include "eetc/model.hpp"

namespace eetc {

namespace {

using nlohmann::json;

constexpr double kKmhToMps = 1.0 / 3.6;

std::string fmt(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

double parse_number(const std::string& text, const std::string& path,
                    int line) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0')) {
    throw ParseError(path, line, "expected a number, got '" + text + "'");
  }
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

struct KeyValueFile {
  std::map<std::string, std::pair<double, int>> values;  // value, line
  std::string path;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  double get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) {
      throw ParseError(path, 0, "missing key '" + key + "'");
    }
    return it->second.first;
  }
};

KeyValueFile load_key_value(const std::filesystem::path& path,
                            const std::vector<std::string>& known_keys) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  KeyValueFile kv;
  kv.path = path.string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(kv.path, line_no, "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(known_keys.begin(), known_keys.end(), key) ==
        known_keys.end()) {
      throw ParseError(kv.path, line_no, "unknown key '" + key + "'");
    }
    if (kv.values.count(key)) {
      throw ParseError(kv.path, line_no, "duplicate key '" + key + "'");
    }
    kv.values[key] = {parse_number(value, kv.path, line_no), line_no};
  }
  return kv;
}

struct CsvTable {
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
};

CsvTable load_csv(const std::filesystem::path& path,
                  const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) {
    throw ParseError(path.string(), 1, "empty file");
  }
  ++line_no;
  if (trim(line) != expected_header) {
    throw ParseError(path.string(), 1,
                     "expected header '" + expected_header + "'");
  }
  CsvTable table;
  const size_t width = split_csv(expected_header).size();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != width) {
      throw ParseError(path.string(), line_no, "wrong number of columns");
    }
    std::vector<double> row;
    for (const auto& f : fields) {
      row.push_back(parse_number(trim(f), path.string(), line_no));
    }
    table.rows.push_back(std::move(row));
    table.lines.push_back(line_no);
  }
  if (table.rows.empty()) {
    throw ParseError(path.string(), line_no, "no data rows");
  }
  return table;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
}

}  // namespace

double TrackProfile::altitude_at(double x) const {
  if (x < position[0] || x > position[position.size() - 1]) {
    throw ValidationError("position " + fmt(x) +
                          " m outside the track altitude coverage");
  }
  int hi = 1;
  while (hi < position.size() - 1 && position[hi] < x) ++hi;
  const double x0 = position[hi - 1], x1 = position[hi];
  const double h0 = altitude[hi - 1], h1 = altitude[hi];
  const double w = (x - x0) / (x1 - x0);
  return h0 + w * (h1 - h0);
}

double TrackProfile::min_limit_over(double a, double b) const {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < limit_from.size(); ++k) {
    const double from = limit_from[k];
    const double to = k + 1 < limit_from.size()
                          ? limit_from[k + 1]
                          : std::numeric_limits<double>::infinity();
    const double lo = std::max(a, from);
    const double hi = std::min(b, to);
    if (lo < hi) best = std::min(best, limit[k]);
  }
  if (!std::isfinite(best)) {
    throw ValidationError("no speed limit covers [" + fmt(a) + ", " + fmt(b) +
                          ") m");
  }
  return best;
}

TrackProfile load_track(const std::filesystem::path& altitude_csv,
                        const std::filesystem::path& limits_csv) {
  TrackProfile track;
  {
    const CsvTable t = load_csv(altitude_csv, "position_m,altitude_m");
    track.position.resize(t.rows.size());
    track.altitude.resize(t.rows.size());
    for (size_t r = 0; r < t.rows.size(); ++r) {
      track.position[r] = t.rows[r][0];
      track.altitude[r] = t.rows[r][1];
      if (r > 0 && track.position[r] <= track.position[r - 1]) {
        throw ParseError(altitude_csv.string(), t.lines[r],
                         "positions must be strictly increasing");
      }
    }
    if (track.position[0] != 0.0) {
      throw ParseError(altitude_csv.string(), t.lines[0],
                       "track must start at position 0");
    }
    if (track.position.size() < 2) {
      throw ParseError(altitude_csv.string(), t.lines[0],
                       "need at least two altitude points");
    }
  }
  {
    const CsvTable t = load_csv(limits_csv, "from_m,limit_kmh");
    track.limit_from.resize(t.rows.size());
    track.limit.resize(t.rows.size());
    for (size_t r = 0; r < t.rows.size(); ++r) {
      track.limit_from[r] = t.rows[r][0];
      track.limit[r] = t.rows[r][1] * kKmhToMps;
      if (t.rows[r][1] <= 0.0) {
        throw ParseError(limits_csv.string(), t.lines[r],
                         "speed limits must be positive");
      }
      if (r > 0 && track.limit_from[r] <= track.limit_from[r - 1]) {
        throw ParseError(limits_csv.string(), t.lines[r],
                         "limit spans overlap: from_m must be strictly increasing");
      }
    }
    if (track.limit_from[0] != 0.0) {
      throw ParseError(limits_csv.string(), t.lines[0],
                       "first limit span must start at 0");
    }
  }
  return track;
}

TrainParams load_params(const std::filesystem::path& path) {
  const std::vector<std::string> keys = {
      "mass_t",      "f_max_kn",           "p_t_max_kw",
      "p_b_max_kw",  "eta_t",              "eta_b",
      "davis_a_kn",  "davis_b_kn_per_kmh", "davis_c_kn_per_kmh2",
      "gravity_mps2"};
  const KeyValueFile kv = load_key_value(path, keys);

  TrainParams params;
  params.mass = kv.get("mass_t") * 1000.0;
  params.f_max = kv.get("f_max_kn") * 1000.0;
  params.p_traction_max = kv.get("p_t_max_kw") * 1000.0;
  params.p_brake_max = kv.get("p_b_max_kw") * 1000.0;
  params.eta_t = kv.get("eta_t");
  params.eta_b = kv.get("eta_b");
  params.davis_a = kv.get("davis_a_kn") * 1000.0;
  params.davis_b = kv.get("davis_b_kn_per_kmh") * 1000.0 * 3.6;
  params.davis_c = kv.get("davis_c_kn_per_kmh2") * 1000.0 * 3.6 * 3.6;
  if (kv.has("gravity_mps2")) params.gravity = kv.get("gravity_mps2");
  try {
    params.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return params;
}

JourneyFile load_journey(const std::filesystem::path& path) {
  const std::vector<std::string> keys = {"distance_m", "segments", "time_s",
                                         "terminal_speed_mps"};
  const KeyValueFile kv = load_key_value(path, keys);
  JourneyFile journey;
  journey.distance_m = kv.get("distance_m");
  const double segs = kv.get("segments");
  journey.segments = static_cast<int>(segs);
  if (journey.segments <= 0 || segs != journey.segments) {
    throw ParseError(path.string(), 0, "segments must be a positive integer");
  }
  journey.time_s = kv.get("time_s");
  if (kv.has("terminal_speed_mps")) {
    journey.terminal_speed_mps = kv.get("terminal_speed_mps");
  }
  return journey;
}

JourneySpec build_journey(const TrackProfile& track,
                          const JourneyFile& journey) {
  if (journey.segments <= 0) {
    throw ValidationError("journey needs a positive segment count");
  }
  if (!(journey.distance_m > 0.0)) {
    throw ValidationError("journey distance must be positive");
  }
  if (track.position[track.position.size() - 1] < journey.distance_m) {
    throw ValidationError("track altitude does not cover the journey distance");
  }
  JourneySpec spec;
  spec.total_distance = journey.distance_m;
  spec.segment_count = journey.segments;
  spec.segment_length = journey.distance_m / journey.segments;
  spec.journey_time = journey.time_s;
  spec.altitude_delta.resize(journey.segments);
  spec.speed_limit.resize(journey.segments);
  for (int i = 0; i < journey.segments; ++i) {
    const double d0 = i * spec.segment_length;
    const double d1 = (i + 1) * spec.segment_length;
    spec.altitude_delta[i] = track.altitude_at(d1) - track.altitude_at(d0);
    spec.speed_limit[i] = track.min_limit_over(d0, d1);
  }
  if (journey.terminal_speed_mps) {
    spec.terminal_speed_fixed = true;
    spec.terminal_speed = *journey.terminal_speed_mps;
  }
  spec.validate();
  return spec;
}

double round_sig(double x, int digits) {
  if (!std::isfinite(x)) return x;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
  return std::strtod(buf, nullptr);
}

Trajectory rounded(const Trajectory& traj, int digits) {
  Trajectory out = traj;
  const auto apply = [digits](Eigen::VectorXd& v) {
    for (int i = 0; i < v.size(); ++i) v[i] = round_sig(v[i], digits);
  };
  apply(out.v);
  apply(out.alpha);
  apply(out.beta);
  apply(out.force);
  apply(out.energy);
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          const JourneySpec& spec) {
  out << "index,position_m,v_mps,alpha_spm,beta_m2ps2,force_n,energy_j,"
         "cum_time_s,cum_energy_j\n";
  const Eigen::VectorXd cum_t = traj.cumulative_time(spec.segment_length);
  const Eigen::VectorXd cum_e = traj.cumulative_energy();
  for (int i = 0; i < traj.segments(); ++i) {
    out << (i + 1) << "," << fmt((i + 1) * spec.segment_length) << ","
        << fmt(traj.v[i]) << "," << fmt(traj.alpha[i]) << ","
        << fmt(traj.beta[i]) << "," << fmt(traj.force[i]) << ","
        << fmt(traj.energy[i]) << "," << fmt(cum_t[i]) << "," << fmt(cum_e[i])
        << "\n";
  }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path,
                               const JourneySpec& spec) {
  const CsvTable t = load_csv(
      path,
      "index,position_m,v_mps,alpha_spm,beta_m2ps2,force_n,energy_j,"
      "cum_time_s,cum_energy_j");
  if (static_cast<int>(t.rows.size()) != spec.segment_count) {
    throw ParseError(path.string(), 0,
                     "expected " + std::to_string(spec.segment_count) +
                         " rows, got " + std::to_string(t.rows.size()));
  }
  Trajectory traj;
  const int n = spec.segment_count;
  traj.v.resize(n);
  traj.alpha.resize(n);
  traj.beta.resize(n);
  traj.force.resize(n);
  traj.energy.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    if (static_cast<int>(row[0]) != i + 1) {
      throw ParseError(path.string(), t.lines[i], "rows must be in index order");
    }
    traj.v[i] = row[2];
    traj.alpha[i] = row[3];
    traj.beta[i] = row[4];
    traj.force[i] = row[5];
    traj.energy[i] = row[6];
  }
  return traj;
}

void write_exactness_text(std::ostream& out, const ExactnessReport& report) {
  const int digits = 17;
  out << "relaxation exactness report\n";
  out << "  segments: " << report.alpha_gap.size() << "\n";
  out << "  tolerance: " << fmt(report.tolerance, digits) << "\n";
  out << "  max pace gap (alpha*v - 1): " << fmt(report.max_alpha_gap, digits)
      << " at segment " << report.max_alpha_index + 1 << "\n";
  if (report.max_beta_index >= 0) {
    out << "  max squared-speed gap (beta - v^2), segments 1.."
        << report.beta_gap.size() - 1 << ": "
        << fmt(report.max_beta_gap, digits) << " at segment "
        << report.max_beta_index + 1 << "\n";
  }
  out << "  terminal squared-speed slack: "
      << fmt(report.beta_terminal_slack, digits) << "\n";
  out << "  flat first segment: " << (report.assumption_flat_start ? "yes" : "no")
      << "\n";
  out << "  note: " << report.terminal_note << "\n";
  out << "  exact: " << (report.exact ? "yes" : "no") << "\n";
}

std::string exactness_json(const ExactnessReport& report) {
  json j;
  j["segments"] = report.alpha_gap.size();
  j["tolerance"] = report.tolerance;
  j["exact"] = report.exact;
  j["max_alpha_gap"] = report.max_alpha_gap;
  j["max_alpha_segment"] = report.max_alpha_index + 1;
  j["max_beta_gap"] = report.max_beta_gap;
  j["max_beta_segment"] = report.max_beta_index + 1;
  j["beta_terminal_slack"] = report.beta_terminal_slack;
  j["assumption_flat_start"] = report.assumption_flat_start;
  j["terminal_note"] = report.terminal_note;
  j["alpha_gap"] = std::vector<double>(
      report.alpha_gap.data(), report.alpha_gap.data() + report.alpha_gap.size());
  j["beta_gap"] = std::vector<double>(
      report.beta_gap.data(), report.beta_gap.data() + report.beta_gap.size());
  return j.dump(2) + "\n";
}

std::string solve_stats_json(const SolveStats& stats) {
  json j;
  j["status"] = to_string(stats.status);
  j["iterations"] = stats.iterations;
  j["primal_residual"] = stats.primal_residual;
  j["dual_residual"] = stats.dual_residual;
  j["relative_gap"] = stats.relative_gap;
  j["objective_j"] = stats.objective;
  j["kkt_dynamic_bumps"] = stats.kkt_dynamic_bumps;
  return j.dump(2) + "\n";
}

std::string comparison_json(const ComparisonRecord& record,
                            long long tuples_checked) {
  json j;
  switch (record.outcome) {
    case ComparisonRecord::Outcome::pass: j["outcome"] = "pass"; break;
    case ComparisonRecord::Outcome::fail: j["outcome"] = "fail"; break;
    case ComparisonRecord::Outcome::inconclusive:
      j["outcome"] = "oracle-inconclusive";
      break;
  }
  j["conic_objective_j"] = record.conic_objective;
  j["oracle_objective_j"] = record.oracle_objective;
  j["difference_j"] = record.difference;
  j["tolerance_j"] = record.tolerance;
  j["tuples_checked"] = tuples_checked;
  return j.dump(2) + "\n";
}

PipelineResult run_pipeline(const RunConfig& config) {
  PipelineResult out;

  TrainParams params;
  TrackProfile track;
  JourneyFile journey;
  JourneySpec spec;
  try {
    params = load_params(config.params_path);
    journey = load_journey(config.journey_path);
    track = load_track(config.track_altitude_path, config.track_limits_path);
    if (config.override_segments) journey.segments = *config.override_segments;
    if (config.override_time) journey.time_s = *config.override_time;
    if (config.pin_terminal_speed) {
      journey.terminal_speed_mps = *config.pin_terminal_speed;
    }
    spec = build_journey(track, journey);
  } catch (const Error& e) {
    out.exit_code = ExitCode::parse_error;
    out.message = e.what();
    return out;
  }

  ConicProgram prog;
  try {
    prog = assemble(spec, params);
  } catch (const AssemblyError& e) {
    out.exit_code = ExitCode::assembly_error;
    out.message = e.what();
    return out;
  }

  std::filesystem::create_directories(config.output_dir);

  SolverSettings settings = config.solver;
  std::ofstream trace_out;
  if (config.trace_path) {
    trace_out.open(*config.trace_path);
    if (!trace_out) {
      out.exit_code = ExitCode::parse_error;
      out.message = "cannot open trace file " + config.trace_path->string();
      return out;
    }
    settings.trace = [&trace_out](const IterationTrace& t) {
      json j;
      j["iteration"] = t.iteration;
      j["primal_residual"] = t.primal_residual;
      j["dual_residual"] = t.dual_residual;
      j["relative_gap"] = t.relative_gap;
      j["absolute_gap"] = t.absolute_gap;
      j["mu"] = t.mu;
      j["step"] = t.step;
      j["sigma"] = t.sigma;
      j["tau"] = t.tau;
      j["kappa"] = t.kappa;
      trace_out << j.dump() << "\n";
    };
  }

  SolveResult solved;
  try {
    solved = solve(prog, settings);
  } catch (const Error& e) {
    out.exit_code = ExitCode::solver_failure;
    out.message = e.what();
    return out;
  }
  out.stats = solved.stats;
  write_file(config.output_dir / "solve_stats.json",
             solve_stats_json(solved.stats));

  if (solved.stats.status == SolveStatus::primal_infeasible ||
      solved.stats.status == SolveStatus::dual_infeasible) {
    out.exit_code = ExitCode::infeasible;
    out.message = std::string("schedule is ") + to_string(solved.stats.status);
    return out;
  }
  if (solved.stats.status != SolveStatus::optimal) {
    out.exit_code = ExitCode::solver_failure;
    out.message = std::string("solver stopped: ") + to_string(solved.stats.status);
    return out;
  }

  // Emission and auditing both run on the table-precision values.
  out.trajectory = rounded(extract_solution(solved.x, prog.layout));
  {
    std::ostringstream table;
    write_trajectory_csv(table, out.trajectory, spec);
    write_file(config.output_dir / "trajectory.csv", table.str());
  }
  {
    std::ostringstream plot;
    plot << "position_m,v_mps,limit_mps\n";
    plot << "0,0," << fmt(spec.speed_limit[0]) << "\n";
    for (int i = 0; i < spec.segment_count; ++i) {
      plot << fmt((i + 1) * spec.segment_length) << ","
           << fmt(out.trajectory.v[i]) << "," << fmt(spec.speed_limit[i])
           << "\n";
    }
    write_file(config.output_dir / "plot_speed_vs_distance.csv", plot.str());
  }
  {
    std::ostringstream plot;
    plot << "position_m,force_n\n";
    for (int i = 0; i < spec.segment_count; ++i) {
      plot << fmt((i + 1) * spec.segment_length) << ","
           << fmt(out.trajectory.force[i]) << "\n";
    }
    write_file(config.output_dir / "plot_effort_vs_distance.csv", plot.str());
  }
  {
    std::ostringstream plot;
    plot << "index,alpha_spm,inv_v_spm\n";
    for (int i = 0; i < spec.segment_count; ++i) {
      plot << (i + 1) << "," << fmt(out.trajectory.alpha[i]) << ","
           << fmt(1.0 / out.trajectory.v[i]) << "\n";
    }
    write_file(config.output_dir / "plot_alpha_vs_inv_v.csv", plot.str());
  }
  {
    std::ostringstream plot;
    plot << "index,beta_m2ps2,v_sq_m2ps2\n";
    for (int i = 0; i < spec.segment_count; ++i) {
      plot << (i + 1) << "," << fmt(out.trajectory.beta[i]) << ","
           << fmt(out.trajectory.v[i] * out.trajectory.v[i]) << "\n";
    }
    write_file(config.output_dir / "plot_beta_vs_v2.csv", plot.str());
  }

  if (config.audit) {
    out.exactness = gaps(out.trajectory, spec, config.exactness_tol);
    write_file(config.output_dir / "exactness.json",
               exactness_json(out.exactness));
    std::ostringstream text;
    write_exactness_text(text, out.exactness);
    write_file(config.output_dir / "exactness.txt", text.str());
  }

  if (config.run_oracle) {
    try {
      const OracleResult oracle = grid_search_model_a(spec, params, config.grid);
      const double window = config.grid.time_window > 0.0
                                ? config.grid.time_window
                                : 0.005 * spec.journey_time;
      // Window effect priced by the time-row dual, plus the stated 1% slack.
      const double tol = std::abs(solved.y[0]) * window +
                         0.01 * std::abs(solved.stats.objective);
      const ComparisonRecord record =
          compare(solved.stats.objective, oracle, tol);
      out.oracle = record;
      write_file(config.output_dir / "oracle.json",
                 comparison_json(record, oracle.tuples_checked));
    } catch (const Error& e) {
      out.exit_code = ExitCode::oracle_mismatch;
      out.message = std::string("oracle check failed: ") + e.what();
      return out;
    }
  }

  if (config.audit && !out.exactness.exact) {
    out.exit_code = ExitCode::not_exact;
    out.message = "relaxation gaps exceed the exactness tolerance";
    return out;
  }
  if (out.oracle &&
      out.oracle->outcome == ComparisonRecord::Outcome::fail) {
    out.exit_code = ExitCode::oracle_mismatch;
    out.message = "conic objective exceeds the oracle bound";
    return out;
  }
  out.exit_code = ExitCode::ok;
  return out;
}

}  // namespace eetc
