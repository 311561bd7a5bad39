#include "pernn/steering/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"
#include "pernn/text.hpp"

namespace pernn::steering {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMsToKmh = 3.6;

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

Vec2 lane_point(const Track& track, double s, double lateral) {
  const double h = track.heading_at(s);
  return track.point_at(s) + lateral * Vec2(-std::sin(h), std::cos(h));
}

}  // namespace

Pose step_vehicle(const Pose& pose, double speed, double delta_rad, double dt, double wheelbase) {
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  Pose next;
  next.position = pose.position + speed * dt * unit(pose.heading);
  next.heading = pose.heading + speed * std::tan(delta_rad) / wheelbase * dt;
  return next;
}

SensorReading raycast_sensors(const Pose& pose, const Track& track, std::span<const Vec2> traffic) {
  SensorReading r;
  r.opponents.fill(kMaxRange);
  const Projection proj = track.project(pose.position);
  if (std::abs(proj.lateral) > track.half_width()) {
    r.ranges.fill(0.0);
    r.off_track = true;
    return r;
  }
  for (int k = 0; k < kSensorCount; ++k) {
    const Vec2 dir = unit(pose.heading + sensor_angle_rad(k));
    const auto ki = static_cast<std::size_t>(k);
    r.ranges[ki] = std::clamp(track.raycast_edges(pose.position, dir, kMaxRange), 0.0, kMaxRange);
    for (const Vec2& c : traffic) {
      const Vec2 m = c - pose.position;
      const double b = m.dot(dir);
      const double disc = b * b - (m.squaredNorm() - kTrafficRadius * kTrafficRadius);
      if (disc < 0.0) continue;
      const double t = std::max(0.0, b - std::sqrt(disc));
      if (b + std::sqrt(disc) >= 0.0) r.opponents[ki] = std::min(r.opponents[ki], t);
    }
  }
  return r;
}

std::array<double, kFeatureCount> features(const VehicleState& s) {
  std::array<double, kFeatureCount> f{};
  f[0] = s.alpha_axis;
  f[1] = s.d_center;
  f[2] = s.z;
  f[3] = s.velocity_kmh[0];
  f[4] = s.velocity_kmh[1];
  f[5] = s.velocity_kmh[2];
  for (std::size_t k = 0; k < kSensorCount; ++k) {
    f[6 + k] = s.ranges[k];
    f[6 + kSensorCount + k] = s.opponents[k];
  }
  return f;
}

std::vector<std::string> feature_names() {
  std::vector<std::string> n = {"alpha_axis", "d_center", "z", "vx", "vy", "vz"};
  for (int k = 0; k < kSensorCount; ++k) n.push_back("r" + std::to_string(k));
  for (int k = 0; k < kSensorCount; ++k) n.push_back("o" + std::to_string(k));
  return n;
}

std::string to_string(Scenario s) { return s == Scenario::empty ? "empty" : "traffic"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "empty") return Scenario::empty;
  if (s == "traffic") return Scenario::traffic;
  throw ValidationError("unknown scenario '" + s + "'");
}

// ---------------------------------------------------------------------------
// Expert

ExpertPolicy::ExpertPolicy(ExpertConfig cfg, double wheelbase) : cfg_(cfg), wheelbase_(wheelbase) {}

SteeringAction ExpertPolicy::act(const VehicleState& state, const Privileged& truth) {
  (void)state;
  const Track& track = *truth.track;
  const double s = truth.projection.s;
  const double kappa = track.tapered_curvature(s, cfg_.curvature_horizon);
  const double radius = kappa > 0.0 ? 1.0 / kappa : std::numeric_limits<double>::infinity();
  const double ahead = std::clamp(cfg_.lookahead_gain * radius, cfg_.lookahead_min, cfg_.lookahead_max);

  double offset = 0.0;
  std::vector<double> blockers;
  for (const TrafficCar& car : truth.traffic) {
    const double gap = track.forward_distance(s, car.s);
    if (gap >= 0.0 && gap <= cfg_.avoid_window) blockers.push_back(car.lateral);
  }
  if (!blockers.empty()) {
    const double hw = track.half_width();
    double best_clear = -1.0;
    for (double cand : {0.0, 0.5 * hw, -0.5 * hw}) {
      double clear = std::numeric_limits<double>::infinity();
      for (double b : blockers) clear = std::min(clear, std::abs(cand - b));
      if (clear > best_clear + 1e-9) {
        best_clear = clear;
        offset = cand;
      }
    }
  }

  const Vec2 target = lane_point(track, s + ahead, offset);
  const Vec2 d = target - truth.pose.position;
  last_.lookahead = d.norm();
  last_.theta = wrap_angle(std::atan2(d.y(), d.x()) - truth.pose.heading);
  return action_from_rad(pure_pursuit_delta(wheelbase_, last_.theta, last_.lookahead));
}

// ---------------------------------------------------------------------------
// Episode

Episode::Episode(const Track& track, SimConfig cfg, Pose start, std::vector<TrafficCar> traffic)
    : track_(&track), cfg_(cfg), pose_(start), traffic_(std::move(traffic)) {
  proj_ = track.project(pose_.position);
}

VehicleState Episode::state() const {
  std::vector<Vec2> cars;
  cars.reserve(traffic_.size());
  for (const auto& c : traffic_) cars.push_back(lane_point(*track_, c.s, c.lateral));
  const SensorReading r = raycast_sensors(pose_, *track_, cars);
  VehicleState s;
  s.alpha_axis = wrap_angle(pose_.heading - proj_.heading);
  s.d_center = proj_.lateral / track_->half_width();
  s.z = track_->elevation_at(proj_.s);
  s.velocity_kmh = {cfg_.speed * kMsToKmh, 0.0, vz_ * kMsToKmh};
  s.ranges = r.ranges;
  s.opponents = r.opponents;
  s.wheelbase = cfg_.wheelbase;
  return s;
}

Privileged Episode::privileged() const { return {track_, pose_, proj_, traffic_}; }

bool Episode::step(double delta_rad) {
  const double delta = std::clamp(delta_rad, -kMaxSteerRad, kMaxSteerRad);
  const double z0 = track_->elevation_at(proj_.s);
  pose_ = step_vehicle(pose_, cfg_.speed, delta, cfg_.dt, cfg_.wheelbase);
  proj_ = track_->project(pose_.position);
  vz_ = (track_->elevation_at(proj_.s) - z0) / cfg_.dt;
  distance_ += cfg_.speed * cfg_.dt;
  for (auto& c : traffic_) c.s = std::fmod(c.s + c.speed * cfg_.dt, track_->length());
  return !boundary_contact();
}

bool Episode::boundary_contact() const {
  return std::abs(proj_.lateral) > track_->half_width() - cfg_.boundary_margin;
}

Pose start_pose(const Track& track, double s, double lateral, double heading_offset) {
  return {lane_point(track, s, lateral), track.heading_at(s) + heading_offset};
}

// ---------------------------------------------------------------------------
// Demonstrations

DemoSet generate_demonstrations(std::span<const Track> tracks, Scenario scenario, const DemoConfig& cfg,
                                std::uint64_t seed) {
  if (cfg.min_traffic < 0 || cfg.max_traffic < cfg.min_traffic) throw ValidationError("bad traffic range");
  DemoSet out;
  const double innov = cfg.expert.noise_sigma * std::sqrt(1.0 - cfg.expert.noise_phi * cfg.expert.noise_phi);
  for (const Track& track : tracks) {
    for (int e = 0; e < cfg.episodes_per_track; ++e) {
      Rng rng = make_rng(seed, "demo/" + to_string(scenario) + "/" + track.id() + "/" + std::to_string(e));
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const double hw = track.half_width();
      const double s0 = u01(rng) * track.length();
      const double lat0 = (u01(rng) * 2.0 - 1.0) * hw * cfg.start_lateral_frac;
      const double head0 = (u01(rng) * 2.0 - 1.0) * cfg.start_heading;
      std::vector<TrafficCar> traffic;
      if (scenario == Scenario::traffic) {
        const int count = std::uniform_int_distribution<int>(cfg.min_traffic, cfg.max_traffic)(rng);
        for (int c = 0; c < count; ++c) {
          TrafficCar car;
          car.s = std::fmod(s0 + 15.0 + u01(rng) * (track.length() - 30.0), track.length());
          car.lateral = (u01(rng) < 0.5 ? -0.5 : 0.5) * hw;
          car.speed = 8.0 + 4.0 * u01(rng);
          traffic.push_back(car);
        }
      }
      Episode ep(track, cfg.sim, start_pose(track, s0, lat0, head0), std::move(traffic));
      ExpertPolicy expert(cfg.expert, cfg.sim.wheelbase);
      double noise = cfg.expert.noise_sigma * gauss(rng);
      for (int step = 0; step < cfg.steps_per_episode; ++step) {
        const VehicleState st = ep.state();
        const SteeringAction clean = expert.act(st, ep.privileged());
        out.rows.push_back({scenario, features(st), clean.delta_norm, track.id()});
        noise = cfg.expert.noise_phi * noise + innov * gauss(rng);
        if (!ep.step(clean.delta_rad + noise)) {
          out.truncated.push_back(track.id() + "/" + std::to_string(e));
          break;
        }
      }
    }
  }
  return out;
}

void write_demonstrations_csv(const std::string& path, std::span<const Demonstration> rows) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write demonstrations '" + path + "'");
  f << "scenario";
  for (const auto& n : feature_names()) f << ',' << n;
  f << ",delta_norm\n";
  for (const auto& r : rows) {
    f << to_string(r.scenario);
    for (double v : r.x) f << ',' << text::format_double(v);
    f << ',' << text::format_double(r.delta_norm) << '\n';
  }
  if (!f) throw ValidationError("failed writing demonstrations '" + path + "'");
}

std::vector<Demonstration> read_demonstrations_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot read demonstrations '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  if (!text::next_data_line(f, line, lineno)) throw ValidationError("empty demonstrations file");
  std::string expected = "scenario";
  for (const auto& n : feature_names()) expected += "," + n;
  expected += ",delta_norm";
  if (line != expected) throw ValidationError("unexpected demonstrations header");
  std::vector<Demonstration> rows;
  while (text::next_data_line(f, line, lineno)) {
    if (line.empty()) continue;
    const auto cells = text::split(line);
    if (cells.size() != kFeatureCount + 2) {
      throw ValidationError("demonstrations line " + std::to_string(lineno) + ": expected " +
                            std::to_string(kFeatureCount + 2) + " fields");
    }
    Demonstration d;
    d.scenario = scenario_from_string(std::string(cells[0]));
    auto parse = [&](std::string_view c) {
      const auto v = text::parse_double(c);
      if (!v) throw ValidationError("demonstrations line " + std::to_string(lineno) + ": bad number");
      return *v;
    };
    for (std::size_t k = 0; k < kFeatureCount; ++k) d.x[k] = parse(cells[k + 1]);
    d.delta_norm = parse(cells[kFeatureCount + 1]);
    rows.push_back(d);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<double> third_derivative(std::span<const double> d, double dt) {
  std::vector<double> out;
  if (d.size() < 5) return out;
  const double den = 2.0 * dt * dt * dt;
  for (std::size_t i = 2; i + 2 < d.size(); ++i) {
    out.push_back((d[i + 2] - 2.0 * d[i + 1] + 2.0 * d[i - 1] - d[i - 2]) / den);
  }
  return out;
}

DrivingReport evaluate_driving(Policy& policy, std::span<const Track> tracks, int max_steps, const SimConfig& sim) {
  DrivingReport report;
  for (const Track& track : tracks) {
    policy.reset();
    Episode ep(track, sim, start_pose(track, 0.0));
    std::vector<double> deltas;
    TrackDrive row;
    row.track_id = track.id();
    row.category = track.category();
    for (int step = 0; step < max_steps; ++step) {
      const SteeringAction a = policy.act(ep.state(), ep.privileged());
      deltas.push_back(a.delta_rad);
      ++row.steps;
      if (!ep.step(a.delta_rad)) {
        row.boundary_contact = true;
        break;
      }
    }
    row.distance_m = ep.distance();
    const auto jerk = third_derivative(deltas, sim.dt);
    double sum = 0.0;
    for (double j : jerk) sum += std::abs(j);
    row.avg_abs_jerk = jerk.empty() ? 0.0 : sum / static_cast<double>(jerk.size());
    report.tracks.push_back(row);
  }
  if (!report.tracks.empty()) {
    for (const auto& t : report.tracks) {
      report.avg_distance += t.distance_m;
      report.avg_abs_jerk += t.avg_abs_jerk;
    }
    report.avg_distance /= static_cast<double>(report.tracks.size());
    report.avg_abs_jerk /= static_cast<double>(report.tracks.size());
  }
  return report;
}

Benchmark make_benchmark(std::uint64_t seed, int train_tracks, int dirt_tracks, int road_test_tracks) {
  Benchmark b;
  for (int i = 0; i < train_tracks; ++i) {
    const bool oval = i % 3 == 1;
    const std::string id = (oval ? "oval-" : "road-") + std::to_string(i);
    b.train.push_back(generate_track(oval ? TrackCategory::oval : TrackCategory::road, stream_seed(seed, id), id));
  }
  for (int i = 0; i < dirt_tracks; ++i) {
    const std::string id = "dirt-" + std::to_string(i);
    b.test.push_back(generate_track(TrackCategory::dirt, stream_seed(seed, id), id));
  }
  for (int i = 0; i < road_test_tracks; ++i) {
    const std::string id = "road-test-" + std::to_string(i);
    b.test.push_back(generate_track(TrackCategory::road, stream_seed(seed, id), id));
  }
  return b;
}

}  // namespace pernn::steering
