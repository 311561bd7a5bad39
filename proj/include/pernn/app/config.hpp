#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pernn/blocks/model.hpp"
#include "pernn/nee/estimate.hpp"
#include "pernn/nee/models.hpp"
#include "pernn/nee/synth.hpp"
#include "pernn/steering/experiment.hpp"

namespace pernn::app {

enum class Domain { steering, nee };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct SteeringData {
  int train_tracks = 6;
  int dirt_tracks = 3;
  int road_test_tracks = 3;
  int test_episodes_per_track = 1;
  int max_steps = 12000;
  steering::DemoConfig demo;
};

struct NeeData {
  // When set, records come from this flux CSV instead of the generator.
  std::string csv;
  int train_days = 48;
  int test_days = 12;
  nee::SynthConfig synth;
  nee::WindowFitConfig windows;
};

struct TrainOverrides {
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<int> phase1_epochs;
  std::optional<int> phase2_epochs;
  std::optional<int> single_epochs;
  std::optional<double> threshold_fraction;
  std::optional<bool> phase2_includes_empty;
  std::optional<std::vector<ad::Index>> learning_widths;
  std::optional<std::vector<ad::Index>> residual_widths;
};

// One run: flat INI sections [run], [steering], [nee], [train], [gapfill].
struct RunConfig {
  Domain domain = Domain::steering;
  blocks::Variant variant = blocks::Variant::pernn;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  SteeringData steering;
  NeeData nee;
  TrainOverrides train;
  int gaps_per_scale = 4;
  // SHA-256 of the config bytes.
  std::string hash;
};

// Unknown sections or keys and malformed values raise ValidationError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

steering::SteeringTrainConfig steering_train_config(const RunConfig& c);
nee::NeeTrainConfig nee_train_config(const RunConfig& c);

// Fresh model for the configured domain and variant, width overrides applied.
blocks::PernnModel make_model(const RunConfig& c);

// Resolves every physics kind this program knows about.
blocks::PhysicsFactory physics_factory();

nlohmann::json generator_json(const RunConfig& c);

}  // namespace pernn::app
