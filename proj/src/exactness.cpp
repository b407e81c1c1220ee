#include "eetc/exactness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "eetc/errors.hpp"
#include "eetc/model.hpp"

namespace eetc {

namespace {

constexpr double kSlackMargin = 1e-8;   // below this a slack counts as tight
constexpr int kMaxShrinks = 60;
constexpr int kBisectionIters = 200;
constexpr double kBisectionRelWidth = 1e-14;
constexpr double kConstructionFeasTol = 1e-8;

double first_segment_work(const Trajectory& traj, const JourneySpec& spec,
                          const TrainParams& params) {
  return segment_force(0.0, traj.v[0], traj.beta[0], spec.altitude_delta[0],
                       spec, params) *
         spec.segment_length;
}

void recompute_effort_and_energy(Trajectory& traj, const JourneySpec& spec,
                                 const TrainParams& params) {
  const int n = traj.segments();
  for (int i = 0; i < n; ++i) {
    const double beta_prev = i == 0 ? 0.0 : traj.beta[i - 1];
    traj.force[i] = segment_force(beta_prev, traj.v[i], traj.beta[i],
                                  spec.altitude_delta[i], spec, params);
    traj.energy[i] = electrical_energy(traj.force[i], spec, params);
  }
}

bool all_positive(const Trajectory& traj) {
  return (traj.v.array() > 0.0).all() && (traj.alpha.array() > 0.0).all() &&
         (traj.beta.array() > 0.0).all();
}

// Chain over segments [first, last] seeded at `last`, plus the
// work-preserving reduction it demands one segment below `first`.
struct RangedChain {
  Eigen::VectorXd eps_beta, eps_v, eps_alpha;  // indexed first..last
  double alpha_sum = 0.0;
  double extension_below = 0.0;
  bool valid = false;
};

RangedChain ranged_chain(const Trajectory& traj, const JourneySpec& spec,
                         const TrainParams& params, int first, int last,
                         double seed_eps_beta) {
  RangedChain out;
  const int len = last - first + 1;
  out.eps_beta = Eigen::VectorXd::Zero(std::max(len, 0));
  out.eps_v = Eigen::VectorXd::Zero(std::max(len, 0));
  out.eps_alpha = Eigen::VectorXd::Zero(std::max(len, 0));
  if (len <= 0) {  // empty chain: the seed value passes straight through
    out.extension_below = seed_eps_beta;
    out.valid = true;
    return out;
  }
  double eb = seed_eps_beta;
  for (int j = last; j >= first; --j) {
    const int k = j - first;
    const double vj = traj.v[j];
    if (!(eb >= 0.0) || eb >= vj * vj) return out;  // sqrt domain lost
    const double ev = chains::speed_reduction(vj, eb);
    if (ev >= vj) return out;
    out.eps_beta[k] = eb;
    out.eps_v[k] = ev;
    out.eps_alpha[k] = chains::pace_increase(vj, traj.alpha[j], ev);
    out.alpha_sum += out.eps_alpha[k];
    eb = chains::next_beta_reduction(eb, ev, spec, params);
  }
  out.extension_below = eb;
  out.valid = true;
  return out;
}

FeasibilityReport relaxed_report_or_throw(const Trajectory& traj,
                                          const JourneySpec& spec,
                                          const TrainParams& params) {
  return check_model_b(traj, spec, params, kConstructionFeasTol);
}

}  // namespace

namespace chains {

double speed_reduction(double v, double eps_beta) {
  if (!(v > 0.0) || !(eps_beta >= 0.0) || eps_beta >= v * v) {
    throw Error("speed_reduction: need 0 <= eps_beta < v^2");
  }
  return v - std::sqrt(v * v - eps_beta);
}

double speed_reduction_derivative(double v, double eps_beta) {
  if (!(v > 0.0) || !(eps_beta >= 0.0) || eps_beta >= v * v) {
    throw Error("speed_reduction_derivative: need 0 <= eps_beta < v^2");
  }
  return 1.0 / (2.0 * std::sqrt(v * v - eps_beta));
}

double pace_increase(double v, double alpha, double eps_v) {
  if (!(eps_v >= 0.0) || eps_v >= v) {
    throw Error("pace_increase: need 0 <= eps_v < v");
  }
  return alpha * eps_v / (v - eps_v);
}

double pace_increase_derivative(double v, double alpha, double eps_v) {
  if (!(eps_v >= 0.0) || eps_v >= v) {
    throw Error("pace_increase_derivative: need 0 <= eps_v < v");
  }
  const double d = v - eps_v;
  return v * alpha / (d * d);
}

double pace_decrease(double v, double alpha, double eps_v) {
  if (!(eps_v >= 0.0)) throw Error("pace_decrease: need eps_v >= 0");
  return alpha * eps_v / (v + eps_v);
}

double next_beta_reduction(double eps_beta, double eps_v,
                           const JourneySpec& spec, const TrainParams& params) {
  const double half_m = 0.5 * params.mass;
  const double dd = spec.segment_length;
  return ((half_m + params.davis_c * dd) * eps_beta +
          params.davis_b * dd * eps_v) /
         half_m;
}

BackwardChain backward_chain(const Trajectory& traj, const JourneySpec& spec,
                             const TrainParams& params, int last,
                             double seed_eps_beta) {
  BackwardChain out;
  if (last < 0) {  // empty: nothing below the pivot
    out.eps_beta.resize(0);
    out.eps_v.resize(0);
    out.eps_alpha.resize(0);
    out.valid = true;
    return out;
  }
  RangedChain rc = ranged_chain(traj, spec, params, 0, last, seed_eps_beta);
  out.eps_beta = rc.eps_beta;
  out.eps_v = rc.eps_v;
  out.eps_alpha = rc.eps_alpha;
  out.alpha_sum = rc.alpha_sum;
  out.valid = rc.valid;
  return out;
}

}  // namespace chains

ExactnessReport gaps(const Trajectory& traj, const JourneySpec& spec,
                     double tol) {
  traj.validate_dimensions(spec);
  const int n = traj.segments();
  ExactnessReport report;
  report.tolerance = tol;
  report.alpha_gap = traj.alpha.cwiseProduct(traj.v).array() - 1.0;
  report.beta_gap = traj.beta - traj.v.cwiseProduct(traj.v);

  report.max_alpha_gap = 0.0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(report.alpha_gap[i]) >= std::abs(report.max_alpha_gap)) {
      report.max_alpha_gap = report.alpha_gap[i];
      report.max_alpha_index = i;
    }
  }
  report.max_beta_gap = 0.0;
  report.max_beta_index = -1;
  for (int i = 0; i + 1 < n; ++i) {
    if (std::abs(report.beta_gap[i]) >= std::abs(report.max_beta_gap)) {
      report.max_beta_gap = report.beta_gap[i];
      report.max_beta_index = i;
    }
  }
  report.beta_terminal_slack = report.beta_gap[n - 1];
  report.assumption_flat_start = spec.altitude_delta[0] == 0.0;

  std::ostringstream note;
  note << "terminal squared-speed slack " << report.beta_terminal_slack
       << " reported separately and excluded from the exactness verdict";
  report.terminal_note = note.str();

  report.exact = std::abs(report.max_alpha_gap) <= tol &&
                 (n < 2 || std::abs(report.max_beta_gap) <= tol);
  return report;
}

FeasibilityReport check_model_b(const Trajectory& traj, const JourneySpec& spec,
                                const TrainParams& params, double tol) {
  traj.validate_dimensions(spec);
  const int n = spec.segment_count;
  const double dd = spec.segment_length;

  FeasibilityReport report;
  report.energy_balance.resize(n);
  report.force_bound.resize(n);
  report.power_bound.resize(n);
  report.speed_bound.resize(n);
  report.energy_bound.resize(n);
  report.relaxation_bound.resize(n);

  double elapsed = 0.0;
  for (int i = 0; i < n; ++i) {
    const double vi = traj.v[i];
    const double ai = traj.alpha[i];
    const double bi = traj.beta[i];
    const double fi = traj.force[i];
    elapsed += dd * ai;

    const double beta_prev = i == 0 ? 0.0 : traj.beta[i - 1];
    const double f_def =
        segment_force(beta_prev, vi, bi, spec.altitude_delta[i], spec, params);
    report.energy_balance[i] = std::abs(fi - f_def);

    report.force_bound[i] = std::max(0.0, std::abs(fi) - params.f_max);
    report.power_bound[i] = std::max({0.0, fi - params.p_traction_max * ai,
                                      -params.p_brake_max * ai - fi});
    report.speed_bound[i] =
        std::max(0.0, bi - spec.speed_limit[i] * spec.speed_limit[i]);

    const double work = fi * dd;
    report.energy_bound[i] =
        std::max({0.0, work / params.eta_t - traj.energy[i],
                  work * params.eta_b - traj.energy[i]});

    double relax = std::max({0.0, 1.0 - ai * vi, vi * vi - bi});
    if (vi <= 0.0 || ai <= 0.0 || bi <= 0.0) {
      relax += 1.0 - std::min({vi, ai, bi});
    }
    report.relaxation_bound[i] = relax;
  }
  report.time_residual = elapsed - spec.journey_time;
  report.finalize(tol);
  return report;
}

PerturbationCertificate part1_perturbation(const Trajectory& traj,
                                           const JourneySpec& spec,
                                           const TrainParams& params, int pivot,
                                           double eps_v) {
  traj.validate_dimensions(spec);
  const int n = traj.segments();
  if (pivot < 0 || pivot >= n) throw Error("part1: pivot out of range");
  if (!(eps_v > 0.0)) throw Error("part1: eps_v must be positive");
  if (!all_positive(traj)) throw Error("part1: trajectory fields must be positive");

  const double slack = traj.alpha[pivot] * traj.v[pivot] - 1.0;
  if (slack <= kSlackMargin) {
    throw AlreadyExactError("part1: pace inequality is tight at the pivot");
  }
  if (first_segment_work(traj, spec, params) <= 0.0) {
    throw PreconditionError("part1: first-segment work must be positive");
  }

  const double objective_before = objective(traj);
  const double dd = spec.segment_length;
  const double half_m = 0.5 * params.mass;

  double t = std::min(eps_v, 0.5 * traj.v[pivot]);
  for (int shrink = 0; shrink <= kMaxShrinks; ++shrink, t *= 0.5) {
    if (!(t > 0.0)) break;
    // Pivot speed drop t forces this reduction one segment below to keep the
    // pivot's work unchanged.
    const double seed = params.davis_b * dd * t / half_m;
    chains::BackwardChain chain =
        chains::backward_chain(traj, spec, params, pivot - 1, seed);
    if (!chain.valid) continue;
    const double pivot_alpha_cut = chain.alpha_sum;
    if (pivot_alpha_cut >= traj.alpha[pivot]) continue;
    if ((traj.v[pivot] - t) * (traj.alpha[pivot] - pivot_alpha_cut) < 1.0) {
      continue;
    }

    Trajectory perturbed = traj;
    for (int j = 0; j < pivot; ++j) {
      perturbed.v[j] -= chain.eps_v[j];
      perturbed.beta[j] -= chain.eps_beta[j];
      perturbed.alpha[j] += chain.eps_alpha[j];
    }
    perturbed.v[pivot] -= t;
    perturbed.alpha[pivot] -= pivot_alpha_cut;
    if (!all_positive(perturbed)) continue;
    recompute_effort_and_energy(perturbed, spec, params);

    const double objective_after = objective(perturbed);
    if (!(objective_after < objective_before)) continue;
    FeasibilityReport feas = relaxed_report_or_throw(perturbed, spec, params);
    if (!feas.feasible) continue;

    PerturbationCertificate cert;
    cert.kind = PerturbationCertificate::Kind::part1;
    cert.pivot = pivot;
    cert.delta_v = perturbed.v - traj.v;
    cert.delta_beta = perturbed.beta - traj.beta;
    cert.delta_alpha = perturbed.alpha - traj.alpha;
    cert.objective_before = objective_before;
    cert.objective_after = objective_after;
    cert.perturbed = std::move(perturbed);
    cert.relaxed_feasibility = std::move(feas);
    cert.construction_order =
        "pivot speed/pace cut; backward work-preserving chain to segment 1";
    cert.shrink_count = shrink;
    return cert;
  }
  throw AuditNumericalError("part1: shrink limit exceeded without a valid certificate");
}

namespace {

// Forward block of the part-2 construction: given the terminal
// squared-speed cut e_tb, balance the pace budget above the pivot with a
// bisection over the seed reduction at segment N-2, then report the
// work-preserving cut the chain demands at the pivot.
struct ForwardBlock {
  bool valid = false;
  RangedChain chain;  // segments pivot+1 .. N-2
  double seed = 0.0;
  double eps_tv = 0.0, eps_ta = 0.0, e_tb = 0.0;
  double extension = 0.0;  // required pivot cut
};

ForwardBlock forward_block(const Trajectory& traj, const JourneySpec& spec,
                           const TrainParams& params, int pivot, double e_tb) {
  const int n = traj.segments();
  const int term = n - 1;
  const double dd = spec.segment_length;
  const double half_m = 0.5 * params.mass;
  const double b_dd = params.davis_b * dd;
  const double ebar = (1.0 + params.davis_c * dd / half_m) * e_tb;

  ForwardBlock out;
  out.e_tb = e_tb;

  const auto terminal_speed_rise = [&](double seed) {
    // Work preservation at the terminal segment ties the three cuts. At the
    // upper seed endpoint the rise is zero analytically; clamp the rounding.
    double rise = ((half_m + params.davis_c * dd) * e_tb - half_m * seed) / b_dd;
    if (rise < 0.0 && rise > -1e-9 * (1.0 + std::abs(e_tb))) rise = 0.0;
    return rise;
  };

  if (pivot == n - 2) {
    // No intermediate segments: the budget forces the terminal speed to
    // stay put and the seed is pinned at its upper endpoint.
    out.seed = ebar;
    out.eps_tv = 0.0;
    out.eps_ta = 0.0;
    out.chain = ranged_chain(traj, spec, params, pivot + 1, n - 2, out.seed);
    out.extension = out.seed;
    out.valid = true;
    return out;
  }

  if (params.davis_b == 0.0) {
    // Speed has no effect on work: the seed is pinned at ebar and the
    // terminal speed rise comes from the pace budget alone.
    out.seed = ebar;
    out.chain = ranged_chain(traj, spec, params, pivot + 1, n - 2, out.seed);
    if (!out.chain.valid) return out;
    out.eps_ta = out.chain.alpha_sum;
    if (out.eps_ta >= traj.alpha[term]) return out;
    out.eps_tv = traj.v[term] * out.eps_ta / (traj.alpha[term] - out.eps_ta);
    out.extension = out.chain.extension_below;
    out.valid = true;
    return out;
  }

  // Pace budget above the pivot as a function of the seed; strictly
  // increasing, so a sign check at the endpoints certifies the root.
  const auto budget = [&](double seed, RangedChain* chain_out) {
    RangedChain chain = ranged_chain(traj, spec, params, pivot + 1, n - 2, seed);
    if (!chain.valid) return std::numeric_limits<double>::quiet_NaN();
    const double eps_tv = terminal_speed_rise(seed);
    if (!(eps_tv >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double eps_ta =
        chains::pace_decrease(traj.v[term], traj.alpha[term], eps_tv);
    const double sum = chain.alpha_sum;
    if (chain_out) *chain_out = std::move(chain);
    return sum - eps_ta;
  };

  const double f_lo = budget(0.0, nullptr);
  const double f_hi = budget(ebar, nullptr);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi)) return out;
  if (!(f_lo < 0.0)) {
    throw AuditNumericalError(
        "part2: pace-budget function is not negative at zero seed");
  }
  if (!(f_hi > 0.0)) return out;  // degenerate upper endpoint: shrink instead

  double lo = 0.0, hi = ebar;
  for (int iter = 0;
       iter < kBisectionIters && hi - lo > kBisectionRelWidth * ebar; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double fm = budget(mid, nullptr);
    if (!std::isfinite(fm)) return out;
    (fm < 0.0 ? lo : hi) = mid;
  }
  out.seed = 0.5 * (lo + hi);
  if (!std::isfinite(budget(out.seed, &out.chain))) return out;
  out.eps_tv = terminal_speed_rise(out.seed);
  out.eps_ta = chains::pace_decrease(traj.v[term], traj.alpha[term], out.eps_tv);
  out.extension = out.chain.extension_below;
  out.valid = true;
  return out;
}

}  // namespace

PerturbationCertificate part2_perturbation(const Trajectory& traj,
                                           const JourneySpec& spec,
                                           const TrainParams& params,
                                           int pivot) {
  traj.validate_dimensions(spec);
  const int n = traj.segments();
  if (n < 2) throw Error("part2: needs at least two segments");
  if (pivot < 0 || pivot > n - 2) {
    throw Error("part2: pivot must lie below the terminal segment");
  }
  if (!all_positive(traj)) throw Error("part2: trajectory fields must be positive");

  const int term = n - 1;
  const double pivot_slack =
      traj.beta[pivot] - traj.v[pivot] * traj.v[pivot];
  if (pivot_slack <= kSlackMargin) {
    throw AlreadyExactError("part2: squared-speed inequality is tight at the pivot");
  }
  const double terminal_slack = traj.beta[term] - traj.v[term] * traj.v[term];
  if (terminal_slack <= kSlackMargin) {
    throw PreconditionError("part2: terminal squared-speed slack required");
  }
  if (first_segment_work(traj, spec, params) <= 0.0) {
    throw PreconditionError("part2: first-segment work must be positive");
  }

  const double objective_before = objective(traj);
  const double dd = spec.segment_length;
  const double half_m = 0.5 * params.mass;
  const double b_dd = params.davis_b * dd;

  double t = 0.25 * std::min(pivot_slack, terminal_slack);
  for (int shrink = 0; shrink <= kMaxShrinks; ++shrink, t *= 0.5) {
    if (!(t > 0.0)) break;

    // 1. Backward chain below the pivot plus the pivot's pace budget: find
    //    the seed whose chain keeps the pivot's work unchanged given the cut
    //    t. The work residual is strictly decreasing in the seed.
    double pivot_v_rise = 0.0, pivot_alpha_cut = 0.0;
    chains::BackwardChain lower;
    lower.valid = true;
    bool lower_ok = true;
    if (pivot > 0) {
      const double s_max = (half_m + params.davis_c * dd) * t / half_m;
      const auto work_residual = [&](double s, chains::BackwardChain* out,
                                     double* v_rise, double* a_cut) {
        chains::BackwardChain chain =
            chains::backward_chain(traj, spec, params, pivot - 1, s);
        if (!chain.valid) return std::numeric_limits<double>::quiet_NaN();
        const double a = chain.alpha_sum;
        if (a >= traj.alpha[pivot]) {
          return std::numeric_limits<double>::quiet_NaN();
        }
        const double ev = traj.v[pivot] * a / (traj.alpha[pivot] - a);
        if (out) *out = std::move(chain);
        if (v_rise) *v_rise = ev;
        if (a_cut) *a_cut = a;
        return (half_m + params.davis_c * dd) * t - b_dd * ev - half_m * s;
      };
      // residual(s_max) <= 0 holds analytically; a domain failure here means
      // t is too large for the current point.
      if (!std::isfinite(work_residual(s_max, nullptr, nullptr, nullptr))) {
        continue;
      }
      double lo = 0.0, hi = s_max;
      bool domain_ok = true;
      for (int iter = 0;
           iter < kBisectionIters && hi - lo > kBisectionRelWidth * s_max;
           ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double rm = work_residual(mid, nullptr, nullptr, nullptr);
        if (!std::isfinite(rm)) {
          domain_ok = false;
          break;
        }
        (rm > 0.0 ? lo : hi) = mid;
      }
      if (!domain_ok) continue;
      const double s_root = 0.5 * (lo + hi);
      if (!std::isfinite(work_residual(s_root, &lower, &pivot_v_rise,
                                       &pivot_alpha_cut))) {
        continue;
      }
      lower_ok = lower.valid;
    }
    if (!lower_ok) continue;

    // Pivot slack must absorb both the cut and the speed rise.
    {
      const double nv = traj.v[pivot] + pivot_v_rise;
      if (nv * nv > traj.beta[pivot] - t) continue;
    }

    // 2. Forward block: grow the terminal cut until the chain demands at
    //    least t at the pivot, then bisect the match.
    double e_lo = 0.0;
    double e_hi = t * half_m / (half_m + params.davis_c * dd);
    ForwardBlock fb;
    bool bracket = false;
    for (int grow = 0; grow < 60; ++grow) {
      fb = forward_block(traj, spec, params, pivot, e_hi);
      if (!fb.valid) break;
      if (e_hi > terminal_slack) break;  // cannot consume more than the slack
      if (fb.extension >= t) {
        bracket = true;
        break;
      }
      e_lo = e_hi;
      e_hi *= 2.0;
    }
    if (!bracket) continue;
    for (int iter = 0;
         iter < kBisectionIters && e_hi - e_lo > kBisectionRelWidth * e_hi;
         ++iter) {
      const double mid = 0.5 * (e_lo + e_hi);
      ForwardBlock trial = forward_block(traj, spec, params, pivot, mid);
      if (!trial.valid) {
        e_hi = mid;
        continue;
      }
      if (trial.extension < t) {
        e_lo = mid;
      } else {
        e_hi = mid;
        fb = std::move(trial);
      }
    }
    fb = forward_block(traj, spec, params, pivot, e_hi);
    if (!fb.valid) continue;

    // Terminal slack must absorb the terminal cut and speed rise.
    {
      const double nv = traj.v[term] + fb.eps_tv;
      if (nv * nv > traj.beta[term] - fb.e_tb) continue;
      if (fb.eps_ta >= traj.alpha[term]) continue;
    }

    // 3. Assemble the perturbed point.
    Trajectory perturbed = traj;
    for (int j = 0; j < pivot; ++j) {
      perturbed.v[j] -= lower.eps_v[j];
      perturbed.beta[j] -= lower.eps_beta[j];
      perturbed.alpha[j] += lower.eps_alpha[j];
    }
    perturbed.beta[pivot] -= fb.extension;  // == t up to the bisection width
    perturbed.v[pivot] += pivot_v_rise;
    perturbed.alpha[pivot] -= pivot_alpha_cut;
    for (int j = pivot + 1; j <= n - 2; ++j) {
      const int k = j - (pivot + 1);
      perturbed.v[j] -= fb.chain.eps_v[k];
      perturbed.beta[j] -= fb.chain.eps_beta[k];
      perturbed.alpha[j] += fb.chain.eps_alpha[k];
    }
    perturbed.beta[term] -= fb.e_tb;
    perturbed.v[term] += fb.eps_tv;
    perturbed.alpha[term] -= fb.eps_ta;

    if (!all_positive(perturbed)) continue;
    recompute_effort_and_energy(perturbed, spec, params);

    const double objective_after = objective(perturbed);
    if (!(objective_after < objective_before)) continue;
    FeasibilityReport feas = relaxed_report_or_throw(perturbed, spec, params);
    if (!feas.feasible) continue;

    PerturbationCertificate cert;
    cert.kind = PerturbationCertificate::Kind::part2;
    cert.pivot = pivot;
    cert.delta_v = perturbed.v - traj.v;
    cert.delta_beta = perturbed.beta - traj.beta;
    cert.delta_alpha = perturbed.alpha - traj.alpha;
    cert.objective_before = objective_before;
    cert.objective_after = objective_after;
    cert.perturbed = std::move(perturbed);
    cert.relaxed_feasibility = std::move(feas);
    cert.construction_order =
        "backward chain below the pivot first; pace budget at the pivot "
        "second; forward chain with the terminal pace-budget bisection last";
    cert.shrink_count = shrink;
    return cert;
  }
  throw AuditNumericalError("part2: shrink limit exceeded without a valid certificate");
}

bool verify_descent(const PerturbationCertificate& cert,
                    const JourneySpec& spec, const TrainParams& params,
                    double tol) {
  FeasibilityReport feas = check_model_b(cert.perturbed, spec, params, tol);
  if (!feas.feasible) return false;
  const double drop = cert.objective_before - cert.objective_after;
  return drop > tol * std::abs(cert.objective_before);
}

}  // namespace eetc
