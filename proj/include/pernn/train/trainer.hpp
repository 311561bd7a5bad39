#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pernn/autodiff/tape.hpp"
#include "pernn/blocks/model.hpp"

namespace pernn::train {

enum class Phase { warm_start, integrated };

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 100;
  double loss_threshold = 1e-3;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;
  Phase phase = Phase::warm_start;
  // Warm-start stop rule: relative improvement below tolerance over window.
  double convergence_tolerance = 1e-5;
  int convergence_window = 5;
};

void validate(const TrainConfig& cfg);

struct AdamState {
  std::map<std::uint32_t, ad::Matrix> m;
  std::map<std::uint32_t, ad::Matrix> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update of every parameter present in `grads`.
// Throws NumericError naming the parameter on a non-finite gradient; no
// parameter is modified in that case.
void adam_step(ad::Tape& tape, const ad::GradientMap& grads, AdamState& state, const TrainConfig& cfg);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_global_norm(ad::GradientMap& grads, double max_norm);

double mse_loss(std::span<const double> pred, std::span<const double> target);
double mae_loss(std::span<const double> pred, std::span<const double> target);
// MSE(pred, target) + MSE(pred, physics_pred) over samples with mask != 0
// (zero when no sample is masked). Unweighted sum.
double pinn_loss(std::span<const double> pred, std::span<const double> target,
                 std::span<const double> physics_pred, std::span<const double> mask);

// Row-aligned training data. Empty matrices are allowed for fields a given
// objective does not read.
struct Dataset {
  ad::Matrix x;
  ad::Matrix intermediates;  // labels, one column per head
  ad::Matrix target;         // n x 1
  ad::Matrix physics_pred;   // n x 1, PINN physics supervision
  ad::Matrix mask;           // n x 1, 1 where physics supervision applies
  std::map<std::string, ad::Matrix, std::less<>> raw;  // extra tape inputs

  ad::Index rows() const { return x.rows(); }
  Dataset take(std::span<const ad::Index> rows) const;
  ad::Bindings bindings() const;
};

enum class Objective {
  intermediates_mae,
  intermediates_mse,
  target_mse,
  target_plus_intermediates_mse,
  pinn,
};

struct LossRecord {
  int epoch = 0;
  std::string phase;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  bool converged = false;
  bool diverged = false;
};

// Generic mini-batch loop. stop_on_threshold selects the Phase II rule
// (epoch loss < loss_threshold); otherwise the warm-start convergence rule.
TrainResult fit(blocks::PernnModel& model, const Dataset& data, const TrainConfig& cfg,
                Objective objective, const std::string& phase_label, bool stop_on_threshold);

// Phase I: learning block on intermediate labels. Marks the model as warm
// started.
TrainResult train_phase1(blocks::PernnModel& model, const Dataset& data, const TrainConfig& cfg,
                         Objective objective);

// Phase II: complete model. PERNN / PENN require a prior train_phase1.
TrainResult train_phase2(blocks::PernnModel& model, const Dataset& data, const TrainConfig& cfg,
                         Objective objective);

// Mean objective value over the whole dataset in inference mode.
double evaluate_objective(const blocks::PernnModel& model, const Dataset& data, Objective objective);

void write_history_csv(const std::string& path, std::span<const LossRecord> history);

inline constexpr const char* kPhase1DoneKey = "phase1_done";

}  // namespace pernn::train
