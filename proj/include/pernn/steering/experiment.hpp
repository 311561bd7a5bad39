#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pernn/steering/models.hpp"

namespace pernn::steering {

struct SteeringExperimentConfig {
  std::uint64_t seed = 0;
  int train_tracks = 6;
  int dirt_tracks = 3;
  int road_test_tracks = 3;
  DemoConfig demo;
  // Held-out demonstrations on the test tracks for MAE.
  int test_episodes_per_track = 1;
  int max_steps = 12000;
  std::vector<blocks::Variant> variants = {blocks::Variant::pernn, blocks::Variant::penn,
                                           blocks::Variant::fcnn, blocks::Variant::pinn};
};

struct VariantResult {
  blocks::Variant variant = blocks::Variant::pernn;
  ad::Index parameters = 0;
  double test_mae = 0.0;
  DrivingReport driving;
  SteeringTrainResult training;
};

struct SteeringExperiment {
  std::vector<VariantResult> results;
  DrivingReport expert;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::vector<std::string> truncated;

  const VariantResult& of(blocks::Variant v) const;
};

SteeringExperiment run_steering_experiment(const SteeringExperimentConfig& cfg,
                                           const SteeringTrainConfig& train_cfg);

nlohmann::json to_json(const DrivingReport& r);
nlohmann::json to_json(const SteeringExperiment& e);

}  // namespace pernn::steering
