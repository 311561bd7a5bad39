#include "pernn/steering/pursuit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pernn/errors.hpp"

namespace pernn::steering {

double sensor_angle_rad(int k) { return (10.0 * k - 90.0) * std::numbers::pi / 180.0; }

SteeringAction action_from_norm(double delta_norm) {
  const double n = std::clamp(delta_norm, -1.0, 1.0);
  return {n, kMaxSteerRad * n};
}

SteeringAction action_from_rad(double delta_rad) { return action_from_norm(delta_rad / kMaxSteerRad); }

double pure_pursuit_delta(double wheelbase, double theta, double lookahead) {
  if (!(lookahead > 0.0)) throw DomainError("lookahead", "lookahead distance must be positive");
  if (!(wheelbase > 0.0)) throw DomainError("wheelbase", "wheelbase must be positive");
  return std::atan(2.0 * wheelbase * std::sin(theta) / lookahead);
}

ReferencePoint heuristic_reference(const SensorArray& ranges) {
  int best = 0;
  for (int k = 1; k < kSensorCount; ++k) {
    if (ranges[static_cast<std::size_t>(k)] > ranges[static_cast<std::size_t>(best)]) best = k;
  }
  return {ranges[static_cast<std::size_t>(best)], sensor_angle_rad(best)};
}

PursuitPhysics::PursuitPhysics(double wheelbase) : wheelbase_(wheelbase) {
  if (!(wheelbase > 0.0)) throw ValidationError("wheelbase must be positive");
}

ad::NodeId PursuitPhysics::emit(ad::Tape& t, std::span<const ad::NodeId> in) const {
  if (in.size() != 2) throw ValidationError("pure pursuit block takes (lookahead, theta)");
  const ad::NodeId two_l = t.parameter("phys/two_wheelbase", ad::Matrix::Constant(1, 1, 2.0 * wheelbase_), false);
  const ad::NodeId ratio = t.divide(t.multiply(two_l, t.sin(in[1])), in[0]);
  return t.arctan(ratio);
}

void PursuitPhysics::check_intermediates(const ad::Matrix& m) const {
  if ((m.col(0).array() <= 0.0).any()) {
    throw DomainError("lookahead", "lookahead distance must be positive");
  }
}

nlohmann::json PursuitPhysics::config() const { return {{"kind", kind()}, {"wheelbase", wheelbase_}}; }

std::shared_ptr<const blocks::PhysicsBlock> pursuit_physics_from_config(const nlohmann::json& c) {
  if (c.value("kind", std::string()) != "pure_pursuit") throw ValidationError("not a pure pursuit block");
  return std::make_shared<PursuitPhysics>(c.at("wheelbase").get<double>());
}

}  // namespace pernn::steering
