#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pernn/blocks/model.hpp"
#include "pernn/nee/estimate.hpp"
#include "pernn/nee/flux.hpp"
#include "pernn/train/scaler.hpp"
#include "pernn/train/trainer.hpp"

namespace pernn::nee {

// Nine measured channels, NEE_t, hour and day-of-year sin/cos, month and
// season one-of-k.
inline constexpr int kNeeFeatureCount = 30;
using NeeFeatures = std::array<double, kNeeFeatureCount>;

NeeFeatures nee_features(const FluxRecord& r, double nee_t);

// One night transition t -> t + 1.
struct NeeSample {
  std::size_t index = 0;  // record t in the source series
  NeeFeatures x{};
  double tair = 0.0;
  double nee_t = 0.0;
  double nee_next = 0.0;
  double dnee_dt = 0.0;  // finite difference, per second
  double dT_dt = 0.0;    // finite difference, degC per second
  RespirationParams params;  // windowed estimate at t
};

// Transitions where both records are night, on the grid and carry NEE.
std::vector<NeeSample> build_samples(std::span<const FluxRecord> series, const WindowedParams& params);

// Labels: E0, base rate, dT/dt in degC per hour. Raw inputs: unscaled Tair and
// NEE_t. PINN supervision: Euler forecast from the labels.
train::Dataset nee_dataset(std::span<const NeeSample> samples, const train::FeatureScaler& scaler);

blocks::Architecture nee_architecture(blocks::Variant variant);
blocks::PernnModel make_nee_model(blocks::Variant variant, std::uint64_t seed);

struct NeeTrainConfig {
  train::TrainConfig phase1;
  train::TrainConfig phase2;
  train::TrainConfig single;
  // Loss threshold of phase II and single-phase runs as a fraction of the
  // variance of NEE_{t+1}.
  double threshold_fraction_of_variance = 0.05;
};

NeeTrainConfig default_nee_train_config(std::uint64_t seed);

struct NeeTrainResult {
  std::vector<train::LossRecord> history;
  bool diverged = false;
};

// PERNN / PENN: phase I on the intermediate labels, phase II on labels plus
// NEE_{t+1}. FCNN: NEE_{t+1} only. PINN: NEE_{t+1} plus the physics term.
NeeTrainResult train_nee_model(blocks::PernnModel& model, std::span<const NeeSample> samples,
                               const NeeTrainConfig& cfg);

struct NeePrediction {
  std::vector<double> nee_next;
  // Empty for FCNN and PINN.
  std::vector<double> e0;
  std::vector<double> rb;
  std::vector<double> dT_dt;    // degC per second
  std::vector<double> dnee_dt;  // per second
};

NeePrediction predict_nee(const blocks::PernnModel& model, std::span<const NeeSample> samples);

// One-step forecast report. Intermediate MAEs are absent for variants without
// a physics block.
struct NeeReport {
  std::size_t samples = 0;
  double mae = 0.0;
  double r2 = 0.0;
  double mmd = 0.0;
  double wasserstein = 0.0;
  double kl = 0.0;
  std::optional<double> e0_mae;
  std::optional<double> rb_mae;
  std::optional<double> dT_mae;
  std::optional<double> dnee_mae;
};

NeeReport evaluate_nee(const blocks::PernnModel& model, std::span<const NeeSample> samples);
nlohmann::json to_json(const NeeReport& r);

// Gap filling.
enum class GapScale { daily, weekly, monthly, quarterly };
inline constexpr std::array<GapScale, 4> kGapScales{GapScale::daily, GapScale::weekly, GapScale::monthly,
                                                   GapScale::quarterly};
std::string to_string(GapScale s);
std::size_t gap_length(GapScale s);  // records

// NEE_{i+1} from record i and the current NEE state.
using StepFiller = std::function<double(std::size_t i, double nee_i)>;

StepFiller model_filler(const blocks::PernnModel& model, std::span<const FluxRecord> series);
// Steps along the true series: nee_i + (truth[i+1] - truth[i]).
StepFiller oracle_filler(std::span<const double> truth);
StepFiller persistence_filler();

struct Gap {
  std::size_t begin = 0;  // first masked record
  std::size_t end = 0;    // one past the last
  bool shortened = false;
};

struct FilledPoint {
  Timestamp time = 0;
  double truth = 0.0;
  double prediction = 0.0;
  bool was_gap = false;
};

struct GapReport {
  GapScale scale = GapScale::daily;
  std::vector<Gap> gaps;
  std::size_t points = 0;  // night records scored
  double mae = 0.0;
  double r2 = 0.0;
  double mmd = 0.0;
  double wasserstein = 0.0;
  double kl = 0.0;
  std::vector<FilledPoint> filled;
};

// Starts are night records whose predecessor is a night record with NEE.
// Gaps do not overlap; a gap running past the data end or across a break in
// the grid is shortened and flagged.
std::vector<Gap> place_gaps(std::span<const FluxRecord> series, GapScale scale, std::size_t count,
                            std::uint64_t seed);

// Iterated one-step rollout through every gap, seeded from the last observed
// NEE. Metrics over night records inside gaps.
GapReport gapfill_evaluate(std::span<const FluxRecord> series, const StepFiller& filler, GapScale scale,
                           std::size_t count, std::uint64_t seed);

nlohmann::json to_json(const GapReport& r);
void write_filled_csv(const std::string& path, std::span<const FilledPoint> filled);

}  // namespace pernn::nee
