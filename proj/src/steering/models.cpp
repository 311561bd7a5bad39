#include "pernn/steering/models.hpp"

#include <cmath>
#include <numbers>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"

namespace pernn::steering {

using blocks::Variant;

blocks::Architecture steering_architecture(Variant variant) {
  blocks::Architecture a;
  a.variant = variant;
  a.input_width = kFeatureCount;
  a.activation = blocks::Activation::leaky_relu;
  if (blocks::has_physics(variant)) {
    a.learning_widths = {32, 16, 8};
    a.heads = {{"lookahead", blocks::Squash::sigmoid_range, 0.5, kMaxRange, 1.0 / 50.0},
               {"theta", blocks::Squash::tanh_range, -std::numbers::pi / 2, std::numbers::pi / 2, 1.0}};
    if (variant == Variant::pernn) {
      a.residual_widths = {8, 4};
      a.residual_init_gain = 1e-3;
    }
  } else {
    a.learning_widths = {64, 32, 16, 8, 4};
  }
  return a;
}

blocks::PernnModel make_steering_model(Variant variant, std::uint64_t seed) {
  std::shared_ptr<const blocks::PhysicsBlock> physics;
  if (blocks::has_physics(variant)) physics = std::make_shared<PursuitPhysics>(kWheelbase);
  return blocks::PernnModel(steering_architecture(variant), physics, seed);
}

train::Dataset steering_dataset(std::span<const Demonstration> rows, const train::FeatureScaler& scaler) {
  const auto n = static_cast<ad::Index>(rows.size());
  ad::Matrix raw(n, kFeatureCount);
  train::Dataset d;
  d.intermediates.resize(n, 2);
  d.target.resize(n, 1);
  d.physics_pred.resize(n, 1);
  d.mask.resize(n, 1);
  for (ad::Index i = 0; i < n; ++i) {
    const Demonstration& r = rows[static_cast<std::size_t>(i)];
    for (int k = 0; k < kFeatureCount; ++k) raw(i, k) = r.x[static_cast<std::size_t>(k)];
    SensorArray ranges;
    for (int k = 0; k < kSensorCount; ++k) ranges[static_cast<std::size_t>(k)] = r.x[static_cast<std::size_t>(6 + k)];
    const ReferencePoint ref = heuristic_reference(ranges);
    d.intermediates(i, 0) = ref.lookahead;
    d.intermediates(i, 1) = ref.theta;
    d.target(i, 0) = action_from_norm(r.delta_norm).delta_rad;
    d.physics_pred(i, 0) =
        ref.lookahead > 0.0 ? pure_pursuit_delta(kWheelbase, ref.theta, ref.lookahead) : 0.0;
    d.mask(i, 0) = r.scenario == Scenario::empty ? 1.0 : 0.0;
  }
  d.x = scaler.transform(raw);
  return d;
}

SteeringTrainConfig default_steering_train_config(std::uint64_t seed) {
  SteeringTrainConfig c;
  c.phase1.seed = stream_seed(seed, "phase1");
  c.phase1.max_epochs = 30;
  c.phase1.phase = train::Phase::warm_start;
  c.phase2.seed = stream_seed(seed, "phase2");
  c.phase2.max_epochs = 60;
  c.phase2.phase = train::Phase::integrated;
  c.single.seed = stream_seed(seed, "single");
  c.single.max_epochs = 60;
  c.single.phase = train::Phase::integrated;
  return c;
}

namespace {

std::vector<Demonstration> of_scenario(std::span<const Demonstration> rows, Scenario s) {
  std::vector<Demonstration> out;
  for (const auto& r : rows)
    if (r.scenario == s) out.push_back(r);
  return out;
}

ad::Matrix raw_features(std::span<const Demonstration> rows) {
  ad::Matrix m(static_cast<ad::Index>(rows.size()), kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < kFeatureCount; ++k) m(static_cast<ad::Index>(i), k) = rows[i].x[static_cast<std::size_t>(k)];
  return m;
}

train::TrainConfig with_threshold(train::TrainConfig c, const train::Dataset& d, double fraction) {
  if (fraction > 0.0) {
    const double mean = d.target.mean();
    const double var = (d.target.array() - mean).square().mean();
    if (var > 0.0) c.loss_threshold = fraction * var;
  }
  return c;
}

void append(SteeringTrainResult& acc, const train::TrainResult& r) {
  acc.history.insert(acc.history.end(), r.history.begin(), r.history.end());
  acc.diverged = acc.diverged || r.diverged;
}

}  // namespace

SteeringTrainResult train_steering_model(blocks::PernnModel& model, std::span<const Demonstration> rows,
                                         const SteeringTrainConfig& cfg) {
  if (rows.empty()) throw ValidationError("no demonstrations to train on");
  const train::FeatureScaler scaler = train::FeatureScaler::fit(raw_features(rows));
  model.metadata["scaler"] = scaler.to_json();
  model.metadata["domain"] = "steering";
  SteeringTrainResult result;
  switch (model.architecture().variant) {
    case Variant::pernn:
    case Variant::penn: {
      const auto d1 = of_scenario(rows, Scenario::empty);
      const auto d2 = of_scenario(rows, Scenario::traffic);
      if (d1.empty() || d2.empty()) throw ValidationError("two-phase training needs empty and traffic rows");
      append(result, train::train_phase1(model, steering_dataset(d1, scaler), cfg.phase1,
                                         train::Objective::intermediates_mae));
      if (result.diverged) return result;
      const train::Dataset phase2_data =
          cfg.phase2_includes_empty ? steering_dataset(rows, scaler) : steering_dataset(d2, scaler);
      append(result, train::train_phase2(model, phase2_data,
                                         with_threshold(cfg.phase2, phase2_data, cfg.threshold_fraction_of_variance),
                                         train::Objective::target_mse));
      break;
    }
    case Variant::fcnn:
    case Variant::pinn: {
      const train::Dataset all = steering_dataset(rows, scaler);
      const auto objective =
          model.architecture().variant == Variant::pinn ? train::Objective::pinn : train::Objective::target_mse;
      append(result, train::train_phase2(model, all,
                                         with_threshold(cfg.single, all, cfg.threshold_fraction_of_variance),
                                         objective));
      break;
    }
  }
  return result;
}

train::FeatureScaler scaler_of(const blocks::PernnModel& model) {
  if (!model.metadata.contains("scaler")) throw ValidationError("model carries no feature scaler");
  return train::FeatureScaler::from_json(model.metadata.at("scaler"));
}

std::vector<double> predict_steering(const blocks::PernnModel& model, std::span<const Demonstration> rows) {
  if (rows.empty()) return {};
  const train::FeatureScaler scaler = scaler_of(model);
  ad::Bindings in;
  in[std::string(blocks::kFeatureInput)] = scaler.transform(raw_features(rows));
  const ad::Matrix y = model.predict(in).target;
  std::vector<double> out;
  out.reserve(rows.size());
  for (ad::Index i = 0; i < y.rows(); ++i) out.push_back(action_from_rad(y(i, 0)).delta_rad);
  return out;
}

NetworkPolicy::NetworkPolicy(const blocks::PernnModel& model) : model_(&model), scaler_(scaler_of(model)) {}

SteeringAction NetworkPolicy::act(const VehicleState& state, const Privileged&) {
  const auto f = features(state);
  ad::Matrix raw(1, kFeatureCount);
  for (int k = 0; k < kFeatureCount; ++k) raw(0, k) = f[static_cast<std::size_t>(k)];
  ad::Bindings in;
  in[std::string(blocks::kFeatureInput)] = scaler_.transform(raw);
  return action_from_rad(model_->predict(in).target(0, 0));
}

}  // namespace pernn::steering
