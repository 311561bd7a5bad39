#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "pernn/nee/models.hpp"
#include "pernn/nee/synth.hpp"

namespace pernn::nee {

struct NeeExperimentConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;  // days and seed are set from the fields below
  int train_days = 48;
  int test_days = 12;
  std::vector<blocks::Variant> variants = {blocks::Variant::pernn, blocks::Variant::penn,
                                           blocks::Variant::fcnn, blocks::Variant::pinn};
};

// Noise-free series from the ODE with E0 = 200, rb = 2 over 60 days; the last
// 12 days are held out.
NeeExperimentConfig oracle_experiment_config(std::uint64_t seed);

// Noisy growing-season series (sigma = 0.5): 120 training days followed by 30
// test days, with soil-temperature coupling, a seasonal base rate and
// synoptic temperature anomalies that the respiration ODE does not model.
NeeExperimentConfig noisy_experiment_config(std::uint64_t seed);

struct NeeVariantResult {
  blocks::Variant variant = blocks::Variant::pernn;
  ad::Index parameters = 0;
  NeeReport report;
  NeeTrainResult training;
};

struct NeeExperiment {
  std::vector<NeeVariantResult> results;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  double test_target_std = 0.0;
  double persistence_mae = 0.0;

  const NeeVariantResult& of(blocks::Variant v) const;
};

NeeExperiment run_nee_experiment(const NeeExperimentConfig& cfg, const NeeTrainConfig& train_cfg);

nlohmann::json to_json(const NeeExperiment& e);

}  // namespace pernn::nee
