#pragma once

#include <array>
#include <memory>

#include "pernn/blocks/physics.hpp"

namespace pernn::steering {

inline constexpr int kSensorCount = 19;
inline constexpr double kMaxRange = 200.0;
inline constexpr double kMaxSteerRad = 0.366519;
inline constexpr double kWheelbase = 2.5;

using SensorArray = std::array<double, kSensorCount>;

// Sensor k looks at (10k - 90) degrees relative to the car axis,
// counter-clockwise positive; k = 0 is the right side.
double sensor_angle_rad(int k);

struct SteeringAction {
  double delta_norm = 0.0;
  double delta_rad = 0.0;
};

// Clamps to [-1, 1] before converting.
SteeringAction action_from_norm(double delta_norm);
SteeringAction action_from_rad(double delta_rad);

struct ReferencePoint {
  double lookahead = 0.0;  // m
  double theta = 0.0;      // rad
};

// atan(2 L sin(theta) / l). Throws DomainError for l <= 0 or L <= 0.
double pure_pursuit_delta(double wheelbase, double theta, double lookahead);

// Longest free ray (first index on ties) as the reference point.
ReferencePoint heuristic_reference(const SensorArray& ranges);

// Intermediates (lookahead, theta) -> steering angle in radians. The
// wheelbase is a fixed parameter.
class PursuitPhysics final : public blocks::PhysicsBlock {
 public:
  explicit PursuitPhysics(double wheelbase = kWheelbase);

  std::string kind() const override { return "pure_pursuit"; }
  std::vector<std::string> intermediate_names() const override { return {"lookahead", "theta"}; }
  ad::NodeId emit(ad::Tape& tape, std::span<const ad::NodeId> intermediates) const override;
  void check_intermediates(const ad::Matrix& intermediates) const override;
  nlohmann::json config() const override;

  double wheelbase() const { return wheelbase_; }

 private:
  double wheelbase_;
};

std::shared_ptr<const blocks::PhysicsBlock> pursuit_physics_from_config(const nlohmann::json& config);

}  // namespace pernn::steering
