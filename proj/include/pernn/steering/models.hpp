#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pernn/blocks/model.hpp"
#include "pernn/steering/sim.hpp"
#include "pernn/train/scaler.hpp"
#include "pernn/train/trainer.hpp"

namespace pernn::steering {

// Learning block [32, 16, 8] with lookahead / heading heads and residual
// block [8, 4] for PERNN and PENN; [64, 32, 16, 8, 4] for FCNN and PINN.
blocks::Architecture steering_architecture(blocks::Variant variant);

blocks::PernnModel make_steering_model(blocks::Variant variant, std::uint64_t seed);

// Features scaled, target in radians, heuristic intermediate labels, the
// pure-pursuit steering for the heuristic reference point and a mask that is
// 1 on empty-road rows.
train::Dataset steering_dataset(std::span<const Demonstration> rows, const train::FeatureScaler& scaler);

struct SteeringTrainConfig {
  train::TrainConfig phase1;
  train::TrainConfig phase2;
  // Single-phase budget for FCNN and PINN.
  train::TrainConfig single;
  // Phase II on empty-road and traffic rows instead of traffic rows only.
  bool phase2_includes_empty = false;
  // When positive, the loss threshold of phase II and of single-phase runs is
  // this fraction of the training-target variance.
  double threshold_fraction_of_variance = 0.01;
};

SteeringTrainConfig default_steering_train_config(std::uint64_t seed);

struct SteeringTrainResult {
  std::vector<train::LossRecord> history;
  bool diverged = false;
};

// PERNN / PENN: phase I on the empty-road rows with heuristic labels (MAE),
// phase II on the traffic rows (MSE on steering). FCNN: one phase on all rows.
// PINN: one phase on all rows with the physics term on empty-road rows. The
// scaler is fitted on all rows and stored in the model metadata.
SteeringTrainResult train_steering_model(blocks::PernnModel& model, std::span<const Demonstration> rows,
                                         const SteeringTrainConfig& cfg);

train::FeatureScaler scaler_of(const blocks::PernnModel& model);

// Predicted steering in radians, clamped to the actuator range, for raw
// (unscaled) feature rows.
std::vector<double> predict_steering(const blocks::PernnModel& model, std::span<const Demonstration> rows);

class NetworkPolicy final : public Policy {
 public:
  explicit NetworkPolicy(const blocks::PernnModel& model);
  SteeringAction act(const VehicleState& state, const Privileged& truth) override;

 private:
  const blocks::PernnModel* model_;
  train::FeatureScaler scaler_;
};


}  // namespace pernn::steering
