#include "eetc/types.hpp"

#include <cmath>
#include <string>

namespace eetc {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

void TrainParams::validate() const {
  require(std::isfinite(mass) && mass > 0.0, "mass must be positive");
  require(std::isfinite(gravity) && gravity > 0.0, "gravity must be positive");
  require(davis_a >= 0.0, "davis_a must be nonnegative");
  require(davis_b >= 0.0, "davis_b must be nonnegative");
  require(davis_c >= 0.0, "davis_c must be nonnegative");
  require(eta_t > 0.0 && eta_t <= 1.0, "eta_t must lie in (0, 1]");
  require(eta_b > 0.0 && eta_b <= 1.0, "eta_b must lie in (0, 1]");
  require(f_max > 0.0, "f_max must be positive");
  require(p_traction_max > 0.0, "p_traction_max must be positive");
  require(p_brake_max > 0.0, "p_brake_max must be positive");
}

void JourneySpec::validate(bool require_flat_start) const {
  require(segment_count > 0, "segment_count must be positive");
  require(std::isfinite(total_distance) && total_distance > 0.0,
          "total_distance must be positive");
  require(std::isfinite(segment_length) && segment_length > 0.0,
          "segment_length must be positive");
  const double product = segment_length * static_cast<double>(segment_count);
  require(std::abs(product - total_distance) <= 1e-9 * total_distance,
          "segment_length * segment_count must equal total_distance");
  require(std::isfinite(journey_time) && journey_time > 0.0,
          "journey_time must be positive");
  require(altitude_delta.size() == segment_count,
          "altitude_delta must have one entry per segment");
  require(speed_limit.size() == segment_count,
          "speed_limit must have one entry per segment");
  for (int i = 0; i < segment_count; ++i) {
    require(std::isfinite(speed_limit[i]) && speed_limit[i] > 0.0,
            "speed_limit[" + std::to_string(i + 1) + "] must be positive");
    require(std::isfinite(altitude_delta[i]),
            "altitude_delta[" + std::to_string(i + 1) + "] must be finite");
  }
  if (require_flat_start) {
    require(altitude_delta[0] == 0.0,
            "first segment must be level (altitude_delta[1] = 0)");
  }
  if (terminal_speed_fixed) {
    require(terminal_speed > 0.0 &&
                terminal_speed <= speed_limit[segment_count - 1],
            "terminal_speed must be positive and within the last speed limit");
  }
}

Eigen::VectorXd Trajectory::cumulative_time(double segment_length) const {
  Eigen::VectorXd out(alpha.size());
  double acc = 0.0;
  for (int i = 0; i < alpha.size(); ++i) {
    acc += segment_length * alpha[i];
    out[i] = acc;
  }
  return out;
}

Eigen::VectorXd Trajectory::cumulative_energy() const {
  Eigen::VectorXd out(energy.size());
  double acc = 0.0;
  for (int i = 0; i < energy.size(); ++i) {
    acc += energy[i];
    out[i] = acc;
  }
  return out;
}

void Trajectory::validate_dimensions(const JourneySpec& spec) const {
  const int n = spec.segment_count;
  if (v.size() != n || alpha.size() != n || beta.size() != n ||
      force.size() != n || energy.size() != n) {
    throw DimensionError("trajectory dimensions do not match the journey");
  }
}

void FeasibilityReport::finalize(double tol) {
  worst = std::abs(time_residual);
  const auto fold = [this](const Eigen::VectorXd& r) {
    if (r.size() > 0) worst = std::max(worst, r.cwiseAbs().maxCoeff());
  };
  fold(energy_balance);
  fold(force_bound);
  fold(power_bound);
  fold(speed_bound);
  fold(energy_bound);
  fold(relaxation_bound);
  tolerance = tol;
  feasible = worst <= tol;
}

}  // namespace eetc
