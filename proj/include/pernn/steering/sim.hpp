#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pernn/steering/pursuit.hpp"
#include "pernn/steering/track.hpp"

namespace pernn::steering {

struct Pose {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

// Kinematic bicycle, explicit Euler.
Pose step_vehicle(const Pose& pose, double speed, double delta_rad, double dt, double wheelbase);

struct SensorReading {
  SensorArray ranges{};
  SensorArray opponents{};
  bool off_track = false;
};

inline constexpr double kTrafficRadius = 1.0;

// Rangefinders against track edges and traffic discs (radius 1 m).
SensorReading raycast_sensors(const Pose& pose, const Track& track, std::span<const Vec2> traffic);

inline constexpr int kFeatureCount = 45;

struct VehicleState {
  double alpha_axis = 0.0;  // heading minus track tangent, rad
  double d_center = 0.0;    // lateral offset / half-width, left positive
  double z = 0.0;           // m
  std::array<double, 3> velocity_kmh{};  // along axis, lateral, vertical
  SensorArray ranges{};
  SensorArray opponents{};
  double wheelbase = kWheelbase;
};

// [alpha_axis, d_center, z, vx, vy, vz, r0..r18, o0..o18]
std::array<double, kFeatureCount> features(const VehicleState& s);
std::vector<std::string> feature_names();

enum class Scenario { empty, traffic };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct SimConfig {
  double dt = 0.05;
  double speed = 15.0;
  double wheelbase = kWheelbase;
  double boundary_margin = 0.5;
};

struct TrafficCar {
  double s = 0.0;
  double lateral = 0.0;
  double speed = 10.0;
};

// Ground truth the scripted expert may read.
struct Privileged {
  const Track* track = nullptr;
  Pose pose;
  Projection projection;
  std::span<const TrafficCar> traffic;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() {}
  virtual SteeringAction act(const VehicleState& state, const Privileged& truth) = 0;
};

struct ExpertConfig {
  double lookahead_gain = 0.4;
  double lookahead_min = 8.0;
  double lookahead_max = 30.0;
  double curvature_horizon = 40.0;
  double avoid_window = 40.0;
  double noise_sigma = 0.01;  // rad, stationary std of the applied perturbation
  double noise_phi = 0.9;     // AR(1) coefficient
};

// Pure pursuit toward a centerline point shifted by a lane offset that steers
// around slower vehicles ahead.
class ExpertPolicy final : public Policy {
 public:
  explicit ExpertPolicy(ExpertConfig cfg = {}, double wheelbase = kWheelbase);
  SteeringAction act(const VehicleState& state, const Privileged& truth) override;
  ReferencePoint last_reference() const { return last_; }

 private:
  ExpertConfig cfg_;
  double wheelbase_;
  ReferencePoint last_;
};

// One simulated car on one track.
class Episode {
 public:
  Episode(const Track& track, SimConfig cfg, Pose start, std::vector<TrafficCar> traffic = {});

  VehicleState state() const;
  Privileged privileged() const;
  // Applies delta_rad for one step; returns false on boundary contact.
  bool step(double delta_rad);

  const Pose& pose() const { return pose_; }
  const Projection& projection() const { return proj_; }
  bool boundary_contact() const;
  double distance() const { return distance_; }
  std::span<const TrafficCar> traffic() const { return traffic_; }

 private:
  const Track* track_;
  SimConfig cfg_;
  Pose pose_;
  Projection proj_;
  std::vector<TrafficCar> traffic_;
  double vz_ = 0.0;
  double distance_ = 0.0;
};

Pose start_pose(const Track& track, double s, double lateral = 0.0, double heading_offset = 0.0);

struct Demonstration {
  Scenario scenario = Scenario::empty;
  std::array<double, kFeatureCount> x{};
  double delta_norm = 0.0;
  std::string track_id;
};

struct DemoConfig {
  int episodes_per_track = 8;
  int steps_per_episode = 250;
  int min_traffic = 1;
  int max_traffic = 4;
  // Uniform start perturbation: lateral in +-fraction of the half-width,
  // heading in +-radians.
  double start_lateral_frac = 0.7;
  double start_heading = 0.2;
  ExpertConfig expert;
  SimConfig sim;
};

struct DemoSet {
  std::vector<Demonstration> rows;
  std::vector<std::string> truncated;  // "<track>/<episode>" of episodes that left the track
};

DemoSet generate_demonstrations(std::span<const Track> tracks, Scenario scenario, const DemoConfig& cfg,
                                std::uint64_t seed);

void write_demonstrations_csv(const std::string& path, std::span<const Demonstration> rows);
std::vector<Demonstration> read_demonstrations_csv(const std::string& path);

// (d[i+2] - 2 d[i+1] + 2 d[i-1] - d[i-2]) / (2 dt^3) for every interior i.
std::vector<double> third_derivative(std::span<const double> series, double dt);

struct TrackDrive {
  std::string track_id;
  TrackCategory category = TrackCategory::road;
  double distance_m = 0.0;
  double avg_abs_jerk = 0.0;
  int steps = 0;
  bool boundary_contact = false;
};

struct DrivingReport {
  double avg_distance = 0.0;
  double avg_abs_jerk = 0.0;
  std::vector<TrackDrive> tracks;
};

// Constant-speed rollout from the start of each track until boundary contact
// or max_steps.
DrivingReport evaluate_driving(Policy& policy, std::span<const Track> tracks, int max_steps,
                               const SimConfig& sim = {});

struct Benchmark {
  std::vector<Track> train;
  std::vector<Track> test;
};

// Road and oval training tracks; dirt and unseen road tracks for test.
Benchmark make_benchmark(std::uint64_t seed, int train_tracks = 6, int dirt_tracks = 3, int road_test_tracks = 3);

}  // namespace pernn::steering
