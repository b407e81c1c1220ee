#include "eetc/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <vector>

#include "eetc/errors.hpp"
#include "eetc/model.hpp"

namespace eetc {

namespace {

constexpr int kMaxSegments = 6;  // combinatorial guard

struct SearchContext {
  const JourneySpec* spec;
  const TrainParams* params;
  std::vector<Eigen::VectorXd> grid;
  double window = 0.0;
  // Cheapest possible remaining time from each depth onward, for pruning.
  Eigen::VectorXd min_time_tail, max_time_tail;
};

struct BranchBest {
  bool found = false;
  double objective = 0.0;
  std::vector<int> choice;
  long long checked = 0;
};

// Depth-first enumeration below a fixed first-segment choice.
void search(const SearchContext& ctx, int depth, double beta_prev,
            double elapsed, double energy, std::vector<int>& choice,
            BranchBest& best) {
  const JourneySpec& spec = *ctx.spec;
  const TrainParams& params = *ctx.params;
  const int n = spec.segment_count;
  const double dd = spec.segment_length;

  const Eigen::VectorXd& speeds = ctx.grid[depth];
  for (int g = 0; g < speeds.size(); ++g) {
    const double v = speeds[g];
    const double t = elapsed + dd / v;
    // Time-window pruning: bail when even the extreme completions miss it.
    if (t + ctx.min_time_tail[depth] > spec.journey_time + ctx.window) continue;
    if (t + ctx.max_time_tail[depth] < spec.journey_time - ctx.window) continue;

    const double beta = v * v;
    const double force = segment_force(beta_prev, v, beta,
                                       spec.altitude_delta[depth], spec, params);
    if (std::abs(force) > params.f_max) continue;
    if (force > params.p_traction_max / v) continue;
    if (force < -params.p_brake_max / v) continue;

    const double e = energy + electrical_energy(force, spec, params);
    choice[depth] = g;
    if (depth + 1 == n) {
      ++best.checked;
      if (std::abs(t - spec.journey_time) <= ctx.window &&
          (!best.found || e < best.objective ||
           (e == best.objective && choice < best.choice))) {
        best.found = true;
        best.objective = e;
        best.choice = choice;
      }
    } else {
      search(ctx, depth + 1, beta, t, e, choice, best);
    }
  }
}

Trajectory tuple_to_trajectory(const SearchContext& ctx,
                               const std::vector<int>& choice) {
  const JourneySpec& spec = *ctx.spec;
  const TrainParams& params = *ctx.params;
  const int n = spec.segment_count;
  Trajectory traj;
  traj.v.resize(n);
  traj.alpha.resize(n);
  traj.beta.resize(n);
  traj.force.resize(n);
  traj.energy.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = ctx.grid[i][choice[i]];
    traj.v[i] = v;
    traj.alpha[i] = 1.0 / v;
    traj.beta[i] = v * v;
    const double beta_prev = i == 0 ? 0.0 : traj.beta[i - 1];
    traj.force[i] = segment_force(beta_prev, v, traj.beta[i],
                                  spec.altitude_delta[i], spec, params);
    traj.energy[i] = electrical_energy(traj.force[i], spec, params);
  }
  return traj;
}

}  // namespace

void GridSpec::validate(const JourneySpec& spec) const {
  if (resolution < 2) throw ValidationError("grid resolution must be >= 2");
  if (!(time_window >= 0.0)) {
    throw ValidationError("time window must be nonnegative");
  }
  const auto check_bounds = [&](const Eigen::VectorXd& v, const char* name) {
    if (v.size() != 0 && v.size() != spec.segment_count) {
      throw ValidationError(std::string(name) +
                            " must be empty or one entry per segment");
    }
  };
  check_bounds(speed_lo, "speed_lo");
  check_bounds(speed_hi, "speed_hi");
}

std::vector<Eigen::VectorXd> make_speed_grid(const JourneySpec& spec,
                                             const GridSpec& grid) {
  grid.validate(spec);
  const int n = spec.segment_count;
  const int r = grid.resolution;
  std::vector<Eigen::VectorXd> out(n);
  for (int i = 0; i < n; ++i) {
    const bool pinned = spec.terminal_speed_fixed && i == n - 1;
    if (pinned) {
      out[i] = Eigen::VectorXd::Constant(1, spec.terminal_speed);
      continue;
    }
    const double hi =
        grid.speed_hi.size() ? grid.speed_hi[i] : spec.speed_limit[i];
    const double lo =
        grid.speed_lo.size() ? grid.speed_lo[i] : 0.2 * spec.speed_limit[i];
    if (!(lo > 0.0) || !(hi >= lo)) {
      throw ValidationError("grid speed bounds must satisfy 0 < lo <= hi");
    }
    out[i].resize(r);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int g = 0; g < r; ++g) {
      out[i][g] = std::exp(llo + (lhi - llo) * g / (r - 1));
    }
    out[i][r - 1] = hi;  // endpoint free of rounding drift
  }
  return out;
}

OracleResult grid_search_model_a(const JourneySpec& spec,
                                 const TrainParams& params,
                                 const GridSpec& grid) {
  spec.validate();
  params.validate();
  if (spec.segment_count > kMaxSegments) {
    throw Error("grid_search_model_a: more than " +
                std::to_string(kMaxSegments) + " segments");
  }

  SearchContext ctx;
  ctx.spec = &spec;
  ctx.params = &params;
  ctx.grid = make_speed_grid(spec, grid);
  ctx.window = grid.time_window > 0.0 ? grid.time_window
                                      : 0.005 * spec.journey_time;

  const int n = spec.segment_count;
  const double dd = spec.segment_length;
  ctx.min_time_tail = Eigen::VectorXd::Zero(n);
  ctx.max_time_tail = Eigen::VectorXd::Zero(n);
  for (int i = n - 2; i >= 0; --i) {
    ctx.min_time_tail[i] =
        ctx.min_time_tail[i + 1] + dd / ctx.grid[i + 1].maxCoeff();
    ctx.max_time_tail[i] =
        ctx.max_time_tail[i + 1] + dd / ctx.grid[i + 1].minCoeff();
  }

  // One branch per leading-segment speed, merged by (objective, tuple).
  const int branches = static_cast<int>(ctx.grid[0].size());
  std::vector<BranchBest> branch_best(branches);
  const auto run_branch = [&](int g0) {
    std::vector<int> choice(n, 0);
    const double v = ctx.grid[0][g0];
    const double t = dd / v;
    if (t + ctx.min_time_tail[0] > spec.journey_time + ctx.window) return;
    if (t + ctx.max_time_tail[0] < spec.journey_time - ctx.window) return;
    const double beta = v * v;
    const double force =
        segment_force(0.0, v, beta, spec.altitude_delta[0], spec, params);
    if (std::abs(force) > params.f_max) return;
    if (force > params.p_traction_max / v) return;
    if (force < -params.p_brake_max / v) return;
    const double e = electrical_energy(force, spec, params);
    choice[0] = g0;
    BranchBest& best = branch_best[g0];
    if (n == 1) {
      ++best.checked;
      if (std::abs(t - spec.journey_time) <= ctx.window) {
        best.found = true;
        best.objective = e;
        best.choice = choice;
      }
    } else {
      search(ctx, 1, beta, t, e, choice, best);
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, branches);
  if (workers <= 1) {
    for (int g0 = 0; g0 < branches; ++g0) run_branch(g0);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int g0 = next.fetch_add(1); g0 < branches;
             g0 = next.fetch_add(1)) {
          run_branch(g0);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  OracleResult result;
  for (const BranchBest& best : branch_best) {
    result.tuples_checked += best.checked;
    if (!best.found) continue;
    if (!result.feasible_found || best.objective < result.best_objective) {
      result.feasible_found = true;
      result.best_objective = best.objective;
      result.best = tuple_to_trajectory(ctx, best.choice);
    }
  }
  return result;
}

ComparisonRecord compare(double conic_objective, const OracleResult& oracle,
                         double tol) {
  ComparisonRecord record;
  record.conic_objective = conic_objective;
  record.tolerance = tol;
  if (!oracle.feasible_found) {
    record.outcome = ComparisonRecord::Outcome::inconclusive;
    return record;
  }
  record.oracle_objective = oracle.best_objective;
  record.difference = conic_objective - oracle.best_objective;
  record.outcome = record.difference <= tol
                       ? ComparisonRecord::Outcome::pass
                       : ComparisonRecord::Outcome::fail;
  return record;
}

}  // namespace eetc
