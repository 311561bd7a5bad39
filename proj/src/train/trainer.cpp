#include "pernn/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"

namespace pernn::train {

namespace out = blocks::out;
using ad::Index;
using ad::Matrix;
using ad::NodeId;

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) {
    throw ValidationError("adam betas must lie in (0, 1)");
  }
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("adam epsilon must be positive");
  if (!(cfg.loss_threshold > 0.0)) throw ValidationError("loss threshold must be positive");
  if (cfg.max_epochs < 0) throw ValidationError("max epochs must be >= 0");
  if (cfg.convergence_window < 1) throw ValidationError("convergence window must be >= 1");
}

void adam_step(ad::Tape& tape, const ad::GradientMap& grads, AdamState& state, const TrainConfig& cfg) {
  for (const auto& [id, g] : grads.entries()) {
    if (!g.allFinite()) {
      throw NumericError("non-finite gradient for parameter '" + tape.node(NodeId{id}).name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [id, g] : grads.entries()) {
    Matrix& p = tape.parameter_value(NodeId{id});
    auto [mit, m_new] = state.m.try_emplace(id, Matrix::Zero(p.rows(), p.cols()));
    auto [vit, v_new] = state.v.try_emplace(id, Matrix::Zero(p.rows(), p.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  }
}

double clip_global_norm(ad::GradientMap& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    ad::GradientMap scaled;
    for (const auto& [id, g] : grads.entries()) scaled.set(NodeId{id}, g * s);
    grads = std::move(scaled);
  }
  return norm;
}

namespace {

void require_lengths(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) throw ValidationError(std::string(what) + ": empty input");
  if (a.size() != b.size()) throw ValidationError(std::string(what) + ": length mismatch");
}

}  // namespace

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  require_lengths(pred, target, "mse_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double mae_loss(std::span<const double> pred, std::span<const double> target) {
  require_lengths(pred, target, "mae_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double pinn_loss(std::span<const double> pred, std::span<const double> target,
                 std::span<const double> physics_pred, std::span<const double> mask) {
  require_lengths(pred, target, "pinn_loss");
  require_lengths(pred, physics_pred, "pinn_loss");
  require_lengths(pred, mask, "pinn_loss");
  double phy = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    phy += (pred[i] - physics_pred[i]) * (pred[i] - physics_pred[i]);
    ++count;
  }
  return mse_loss(pred, target) + (count ? phy / static_cast<double>(count) : 0.0);
}

// ---------------------------------------------------------------------------
// Datasets

Dataset Dataset::take(std::span<const Index> idx) const {
  auto rows_of = [&](const Matrix& m) {
    if (m.size() == 0) return Matrix();
    Matrix r(static_cast<Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) r.row(static_cast<Index>(k)) = m.row(idx[k]);
    return r;
  };
  Dataset d;
  d.x = rows_of(x);
  d.intermediates = rows_of(intermediates);
  d.target = rows_of(target);
  d.physics_pred = rows_of(physics_pred);
  d.mask = rows_of(mask);
  for (const auto& [k, m] : raw) d.raw[k] = rows_of(m);
  return d;
}

ad::Bindings Dataset::bindings() const {
  ad::Bindings b;
  b[std::string(blocks::kFeatureInput)] = x;
  for (const auto& [k, m] : raw) b[k] = m;
  return b;
}

namespace {

constexpr const char* kLabelIntermediates = "label/intermediates";
constexpr const char* kLabelTarget = "label/target";
constexpr const char* kLabelPhysics = "label/physics";
constexpr const char* kLabelMask = "label/mask";
constexpr const char* kLabelMaskNorm = "label/mask_norm";

bool uses_intermediates(Objective o) {
  return o == Objective::intermediates_mae || o == Objective::intermediates_mse ||
         o == Objective::target_plus_intermediates_mse;
}

bool uses_target(Objective o) {
  return o == Objective::target_mse || o == Objective::target_plus_intermediates_mse ||
         o == Objective::pinn;
}

// sum over heads of mean over rows of f(scale * (pred - label)).
NodeId intermediate_term(ad::Tape& t, const blocks::PernnModel& model, bool absolute) {
  const auto& heads = model.architecture().heads;
  const auto k = static_cast<Index>(heads.size());
  Matrix scales(1, k);
  for (Index i = 0; i < k; ++i) scales(0, i) = heads[static_cast<std::size_t>(i)].loss_scale;
  NodeId label = t.input(kLabelIntermediates, k);
  NodeId diff = t.multiply(t.subtract(model.node(out::intermediates), label), t.constant(scales));
  NodeId per = absolute ? t.abs(diff) : t.square(diff);
  return t.multiply(t.scalar(static_cast<double>(k)), t.mean(per));
}

NodeId append_loss(ad::Tape& t, const blocks::PernnModel& model, Objective o) {
  if (uses_intermediates(o) && !model.has(out::intermediates)) {
    throw ValidationError("objective needs intermediate outputs but the model has none");
  }
  switch (o) {
    case Objective::intermediates_mae: return intermediate_term(t, model, true);
    case Objective::intermediates_mse: return intermediate_term(t, model, false);
    case Objective::target_mse: {
      NodeId y = t.input(kLabelTarget, 1);
      return t.mean(t.square(t.subtract(model.node(out::target), y)));
    }
    case Objective::target_plus_intermediates_mse: {
      NodeId y = t.input(kLabelTarget, 1);
      NodeId data = t.mean(t.square(t.subtract(model.node(out::target), y)));
      return t.add(data, intermediate_term(t, model, false));
    }
    case Objective::pinn: {
      NodeId pred = model.node(out::target);
      NodeId y = t.input(kLabelTarget, 1);
      NodeId phys = t.input(kLabelPhysics, 1);
      NodeId mask = t.input(kLabelMask, 1);
      NodeId norm = t.input(kLabelMaskNorm, 1);
      NodeId data = t.mean(t.square(t.subtract(pred, y)));
      NodeId phy = t.multiply(norm, t.sum(t.multiply(mask, t.square(t.subtract(pred, phys)))));
      return t.add(data, phy);
    }
  }
  throw ValidationError("unknown objective");
}

void check_data(const blocks::PernnModel& model, const Dataset& d, Objective o) {
  if (d.rows() < 1) throw ValidationError("training data is empty");
  if (d.x.cols() != model.architecture().input_width) {
    throw ValidationError("feature width " + std::to_string(d.x.cols()) + " does not match model input width " +
                          std::to_string(model.architecture().input_width));
  }
  auto rows_match = [&](const Matrix& m, const char* what, Index cols) {
    if (m.rows() != d.rows() || m.cols() != cols) {
      throw ValidationError(std::string("training data field '") + what + "' has wrong shape");
    }
  };
  if (uses_intermediates(o)) {
    rows_match(d.intermediates, "intermediates", static_cast<Index>(model.architecture().heads.size()));
  }
  if (uses_target(o)) rows_match(d.target, "target", 1);
  if (o == Objective::pinn) {
    rows_match(d.physics_pred, "physics_pred", 1);
    rows_match(d.mask, "mask", 1);
  }
}

ad::Bindings batch_bindings(const Dataset& b, Objective o) {
  ad::Bindings in = b.bindings();
  if (uses_intermediates(o)) in[kLabelIntermediates] = b.intermediates;
  if (uses_target(o)) in[kLabelTarget] = b.target;
  if (o == Objective::pinn) {
    in[kLabelPhysics] = b.physics_pred;
    in[kLabelMask] = b.mask;
    const double count = (b.mask.array() != 0.0).count();
    in[kLabelMaskNorm] = Matrix::Constant(1, 1, count > 0 ? 1.0 / count : 0.0);
  }
  return in;
}

}  // namespace

TrainResult fit(blocks::PernnModel& model, const Dataset& data, const TrainConfig& cfg,
                Objective objective, const std::string& phase_label, bool stop_on_threshold) {
  validate(cfg);
  check_data(model, data, objective);
  TrainResult result;
  if (cfg.max_epochs == 0) return result;

  ad::Tape work = model.tape();
  const NodeId loss = append_loss(work, model, objective);
  AdamState adam;
  Rng rng = make_rng(cfg.seed, "shuffle");
  const Index n = data.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Index begin = 0; begin < n; begin += cfg.batch_size) {
      const Index end = std::min(n, begin + cfg.batch_size);
      const std::span<const Index> idx(order.data() + begin, static_cast<std::size_t>(end - begin));
      const Dataset batch = data.take(idx);
      const ad::Evaluation ev = ad::forward(work, batch_bindings(batch, objective), ad::Mode::training);
      const double batch_loss = ev.scalar(loss);
      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        break;
      }
      total += batch_loss * static_cast<double>(end - begin);
      ad::GradientMap grads = ad::backward(work, ev, loss);
      clip_global_norm(grads, cfg.clip_norm);
      try {
        adam_step(work, grads, adam, cfg);
      } catch (const NumericError& e) {
        spdlog::warn("{} epoch {}: {}", phase_label, epoch, e.what());
        result.diverged = true;
        break;
      }
      ad::update_running_stats(work, ev);
    }
    const double elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const double epoch_loss = result.diverged ? std::numeric_limits<double>::quiet_NaN()
                                              : total / static_cast<double>(n);
    result.history.push_back({epoch, phase_label, epoch_loss, elapsed});
    spdlog::debug("{} epoch {} loss {:.6g}", phase_label, epoch, epoch_loss);
    if (result.diverged) break;

    if (stop_on_threshold) {
      if (epoch_loss < cfg.loss_threshold) {
        result.converged = true;
        break;
      }
    } else if (epoch >= cfg.convergence_window) {
      const double past = result.history[result.history.size() - 1 - static_cast<std::size_t>(cfg.convergence_window)].loss;
      const double rel = (past - epoch_loss) / std::max(std::abs(past), 1e-300);
      if (rel < cfg.convergence_tolerance) {
        result.converged = true;
        break;
      }
    }
  }

  // Copy trained values (parameters and running statistics) back.
  for (NodeId p : model.tape().parameters()) {
    if (model.tape().node(p).name.starts_with("phys/")) continue;
    model.tape().parameter_value(p) = work.parameter_value(p);
  }
  return result;
}

TrainResult train_phase1(blocks::PernnModel& model, const Dataset& data, const TrainConfig& cfg,
                         Objective objective) {
  if (!uses_intermediates(objective) || uses_target(objective)) {
    throw ValidationError("phase I trains on intermediate labels only");
  }
  TrainResult r = fit(model, data, cfg, objective, "phase1", false);
  if (!r.diverged) model.metadata[kPhase1DoneKey] = true;
  return r;
}

TrainResult train_phase2(blocks::PernnModel& model, const Dataset& data, const TrainConfig& cfg,
                         Objective objective) {
  if (blocks::has_physics(model.architecture().variant) &&
      !model.metadata.value(kPhase1DoneKey, false)) {
    throw ValidationError("phase II requires a phase I initialised learning block");
  }
  return fit(model, data, cfg, objective, "phase2", true);
}

double evaluate_objective(const blocks::PernnModel& model, const Dataset& data, Objective objective) {
  check_data(model, data, objective);
  ad::Tape t = model.tape();
  const NodeId loss = append_loss(t, model, objective);
  return ad::forward(t, batch_bindings(data, objective), ad::Mode::inference).scalar(loss);
}

void write_history_csv(const std::string& path, std::span<const LossRecord> history) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write loss history '" + path + "'");
  f << "epoch,phase,loss\n";
  f.precision(17);
  for (const auto& r : history) {
    f << r.epoch << ',' << r.phase << ',' << r.loss << '\n';
  }
}

}  // namespace pernn::train
