#include "pernn/nee/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "pernn/errors.hpp"
#include "pernn/metrics/metrics.hpp"
#include "pernn/nee/physics.hpp"
#include "pernn/random.hpp"
#include "pernn/text.hpp"

namespace pernn::nee {

using blocks::Variant;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int season_of(int month) { return (month % 12) / 3; }  // DJF, MAM, JJA, SON

ad::Matrix raw_features(std::span<const NeeSample> samples) {
  ad::Matrix m(static_cast<ad::Index>(samples.size()), kNeeFeatureCount);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (int k = 0; k < kNeeFeatureCount; ++k) m(static_cast<ad::Index>(i), k) = samples[i].x[static_cast<std::size_t>(k)];
  return m;
}

ad::Matrix column(std::span<const NeeSample> samples, double NeeSample::*field) {
  ad::Matrix m(static_cast<ad::Index>(samples.size()), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) m(static_cast<ad::Index>(i), 0) = samples[i].*field;
  return m;
}

std::vector<double> to_vector(const ad::Matrix& m, ad::Index col = 0) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (ad::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, col);
  return v;
}

train::FeatureScaler scaler_of(const blocks::PernnModel& model) {
  if (!model.metadata.contains("scaler")) throw ValidationError("model carries no feature scaler");
  return train::FeatureScaler::from_json(model.metadata.at("scaler"));
}

train::TrainConfig with_threshold(train::TrainConfig c, const train::Dataset& d, double fraction) {
  if (fraction > 0.0) {
    const double mean = d.target.mean();
    const double var = (d.target.array() - mean).square().mean();
    if (var > 0.0) c.loss_threshold = fraction * var;
  }
  return c;
}

void append(NeeTrainResult& acc, const train::TrainResult& r) {
  acc.history.insert(acc.history.end(), r.history.begin(), r.history.end());
  acc.diverged = acc.diverged || r.diverged;
}

}  // namespace

NeeFeatures nee_features(const FluxRecord& r, double nee_t) {
  NeeFeatures f{};
  f[0] = r.tair;
  f[1] = r.rg;
  f[2] = r.rh;
  f[3] = r.vpd;
  f[4] = r.ustar;
  f[5] = r.tsoil1;
  f[6] = r.tsoil2;
  f[7] = r.h;
  f[8] = r.tau;
  f[9] = nee_t;
  const double hour = hour_of_day(r.time);
  f[10] = std::sin(kTwoPi * hour / 24.0);
  f[11] = std::cos(kTwoPi * hour / 24.0);
  const double doy = day_of_year(r.time) - 1;
  f[12] = std::sin(kTwoPi * doy / 365.25);
  f[13] = std::cos(kTwoPi * doy / 365.25);
  const int month = month_of(r.time);
  f[static_cast<std::size_t>(13 + month)] = 1.0;
  f[static_cast<std::size_t>(26 + season_of(month))] = 1.0;
  return f;
}

std::vector<NeeSample> build_samples(std::span<const FluxRecord> series, const WindowedParams& params) {
  std::vector<NeeSample> out;
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    const FluxRecord& a = series[i];
    const FluxRecord& b = series[i + 1];
    if (b.time - a.time != static_cast<Timestamp>(kStep)) continue;
    if (!is_night(a) || !is_night(b) || !a.has_nee() || !b.has_nee()) continue;
    NeeSample s;
    s.index = i;
    s.x = nee_features(a, a.nee);
    s.tair = a.tair;
    s.nee_t = a.nee;
    s.nee_next = b.nee;
    s.dnee_dt = (b.nee - a.nee) / kStep;
    s.dT_dt = (b.tair - a.tair) / kStep;
    s.params = params.at(a.time);
    out.push_back(s);
  }
  return out;
}

train::Dataset nee_dataset(std::span<const NeeSample> samples, const train::FeatureScaler& scaler) {
  const auto n = static_cast<ad::Index>(samples.size());
  train::Dataset d;
  d.x = scaler.transform(raw_features(samples));
  d.intermediates.resize(n, 3);
  d.physics_pred.resize(n, 1);
  d.mask = ad::Matrix::Ones(n, 1);
  for (ad::Index i = 0; i < n; ++i) {
    const NeeSample& s = samples[static_cast<std::size_t>(i)];
    d.intermediates(i, 0) = s.params.e0;
    d.intermediates(i, 1) = s.params.rb;
    d.intermediates(i, 2) = s.dT_dt * 3600.0;
    d.physics_pred(i, 0) = forecast_next(s.nee_t, nee_ode_rhs(s.params, s.tair, s.dT_dt));
  }
  d.target = column(samples, &NeeSample::nee_next);
  d.raw[kTairInput] = column(samples, &NeeSample::tair);
  d.raw[kNeeInput] = column(samples, &NeeSample::nee_t);
  return d;
}

blocks::Architecture nee_architecture(Variant variant) {
  blocks::Architecture a;
  a.variant = variant;
  a.input_width = kNeeFeatureCount;
  a.activation = blocks::Activation::leaky_relu;
  a.learning_style = blocks::LayerStyle::skip_batchnorm;
  a.learning_widths = {32, 32, 16};
  if (blocks::has_physics(variant)) {
    a.heads = {{"e0", blocks::Squash::sigmoid_range, kE0Min, kE0Max, 1.0 / 100.0},
               {"rb", blocks::Squash::softplus, 0.0, 0.0, 1.0},
               {"dT_dt", blocks::Squash::tanh_range, -6.0, 6.0, 1.0}};
    if (variant == Variant::pernn) {
      a.residual_widths = {16, 8};
      a.residual_style = blocks::LayerStyle::skip_batchnorm;
      a.residual_scale = 1.0 / kStep;
      a.residual_init_gain = 1e-3;
    }
  }
  return a;
}

blocks::PernnModel make_nee_model(Variant variant, std::uint64_t seed) {
  std::shared_ptr<const blocks::PhysicsBlock> physics;
  if (blocks::has_physics(variant)) physics = std::make_shared<NeePhysics>(kStep);
  return blocks::PernnModel(nee_architecture(variant), physics, seed);
}

NeeTrainConfig default_nee_train_config(std::uint64_t seed) {
  NeeTrainConfig c;
  c.phase1.seed = stream_seed(seed, "phase1");
  c.phase1.max_epochs = 60;
  c.phase1.phase = train::Phase::warm_start;
  c.phase2.seed = stream_seed(seed, "phase2");
  c.phase2.max_epochs = 100;
  c.phase2.phase = train::Phase::integrated;
  c.single.seed = stream_seed(seed, "single");
  c.single.max_epochs = 100;
  c.single.phase = train::Phase::integrated;
  return c;
}

NeeTrainResult train_nee_model(blocks::PernnModel& model, std::span<const NeeSample> samples,
                               const NeeTrainConfig& cfg) {
  if (samples.empty()) throw ValidationError("no night transitions to train on");
  const train::FeatureScaler scaler = train::FeatureScaler::fit(raw_features(samples));
  model.metadata["scaler"] = scaler.to_json();
  model.metadata["domain"] = "nee";
  const train::Dataset data = nee_dataset(samples, scaler);
  NeeTrainResult result;
  switch (model.architecture().variant) {
    case Variant::pernn:
    case Variant::penn:
      append(result, train::train_phase1(model, data, cfg.phase1, train::Objective::intermediates_mse));
      if (result.diverged) return result;
      append(result, train::train_phase2(model, data,
                                         with_threshold(cfg.phase2, data, cfg.threshold_fraction_of_variance),
                                         train::Objective::target_plus_intermediates_mse));
      break;
    case Variant::fcnn:
    case Variant::pinn: {
      const auto objective =
          model.architecture().variant == Variant::pinn ? train::Objective::pinn : train::Objective::target_mse;
      append(result, train::train_phase2(model, data,
                                         with_threshold(cfg.single, data, cfg.threshold_fraction_of_variance),
                                         objective));
      break;
    }
  }
  return result;
}

NeePrediction predict_nee(const blocks::PernnModel& model, std::span<const NeeSample> samples) {
  NeePrediction p;
  if (samples.empty()) return p;
  ad::Bindings in;
  in[std::string(blocks::kFeatureInput)] = scaler_of(model).transform(raw_features(samples));
  in[kTairInput] = column(samples, &NeeSample::tair);
  in[kNeeInput] = column(samples, &NeeSample::nee_t);
  const blocks::Prediction y = model.predict(in);
  p.nee_next = to_vector(y.target);
  if (y.intermediates.size() > 0) {
    p.e0 = to_vector(y.intermediates, 0);
    p.rb = to_vector(y.intermediates, 1);
    p.dT_dt = to_vector(y.intermediates / 3600.0, 2);
    p.dnee_dt = to_vector(y.output);
  }
  return p;
}

NeeReport evaluate_nee(const blocks::PernnModel& model, std::span<const NeeSample> samples) {
  if (samples.size() < 2) throw ValidationError("need at least two samples to evaluate");
  const NeePrediction p = predict_nee(model, samples);
  std::vector<double> truth;
  truth.reserve(samples.size());
  for (const auto& s : samples) truth.push_back(s.nee_next);
  NeeReport r;
  r.samples = samples.size();
  r.mae = metrics::mae(p.nee_next, truth);
  r.r2 = metrics::r2_score(p.nee_next, truth);
  r.mmd = metrics::mmd(p.nee_next, truth);
  r.wasserstein = metrics::wasserstein_1d(p.nee_next, truth);
  r.kl = metrics::kl_divergence(p.nee_next, truth);
  if (!p.e0.empty()) {
    std::vector<double> e0, rb, dT, dnee;
    for (const auto& s : samples) {
      e0.push_back(s.params.e0);
      rb.push_back(s.params.rb);
      dT.push_back(s.dT_dt);
      dnee.push_back(s.dnee_dt);
    }
    r.e0_mae = metrics::mae(p.e0, e0);
    r.rb_mae = metrics::mae(p.rb, rb);
    r.dT_mae = metrics::mae(p.dT_dt, dT);
    r.dnee_mae = metrics::mae(p.dnee_dt, dnee);
  }
  return r;
}

nlohmann::json to_json(const NeeReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("NA"); };
  return {{"samples", r.samples},
          {"mae", r.mae},
          {"r2", r.r2},
          {"mmd", r.mmd},
          {"wasserstein", r.wasserstein},
          {"kl", r.kl},
          {"intermediates",
           {{"E0", opt(r.e0_mae)}, {"r_b", opt(r.rb_mae)}, {"dT_air", opt(r.dT_mae)}, {"dNEE", opt(r.dnee_mae)}}}};
}

std::string to_string(GapScale s) {
  switch (s) {
    case GapScale::daily: return "daily";
    case GapScale::weekly: return "weekly";
    case GapScale::monthly: return "monthly";
    case GapScale::quarterly: return "quarterly";
  }
  return "?";
}

std::size_t gap_length(GapScale s) {
  switch (s) {
    case GapScale::daily: return 48;
    case GapScale::weekly: return 7 * 48;
    case GapScale::monthly: return 30 * 48;
    case GapScale::quarterly: return 90 * 48;
  }
  return 0;
}

StepFiller model_filler(const blocks::PernnModel& model, std::span<const FluxRecord> series) {
  const train::FeatureScaler scaler = scaler_of(model);
  return [&model, series, scaler](std::size_t i, double nee_i) {
    const NeeFeatures f = nee_features(series[i], nee_i);
    ad::Matrix raw(1, kNeeFeatureCount);
    for (int k = 0; k < kNeeFeatureCount; ++k) raw(0, k) = f[static_cast<std::size_t>(k)];
    ad::Bindings in;
    in[std::string(blocks::kFeatureInput)] = scaler.transform(raw);
    in[kTairInput] = ad::Matrix::Constant(1, 1, series[i].tair);
    in[kNeeInput] = ad::Matrix::Constant(1, 1, nee_i);
    return model.predict(in).target(0, 0);
  };
}

StepFiller oracle_filler(std::span<const double> truth) {
  return [truth](std::size_t i, double nee_i) { return nee_i + (truth[i + 1] - truth[i]); };
}

StepFiller persistence_filler() {
  return [](std::size_t, double nee_i) { return nee_i; };
}

std::vector<Gap> place_gaps(std::span<const FluxRecord> series, GapScale scale, std::size_t count,
                            std::uint64_t seed) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (is_night(series[i]) && is_night(series[i - 1]) && series[i - 1].has_nee() &&
        series[i].time - series[i - 1].time == static_cast<Timestamp>(kStep)) {
      starts.push_back(i);
    }
  }
  std::vector<Gap> gaps;
  if (starts.empty() || count == 0) return gaps;
  Rng rng = make_rng(seed, "gaps/" + to_string(scale));
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  const std::size_t len = gap_length(scale);
  const std::size_t attempts = 50 * count;
  for (std::size_t a = 0; a < attempts && gaps.size() < count; ++a) {
    Gap g;
    g.begin = starts[pick(rng)];
    g.end = g.begin;
    while (g.end < series.size() && g.end - g.begin < len &&
           (g.end == g.begin || series[g.end].time - series[g.end - 1].time == static_cast<Timestamp>(kStep))) {
      ++g.end;
    }
    g.shortened = g.end - g.begin < len;
    // Keep one observed record between gaps so every gap has its own seed.
    const bool overlaps = std::any_of(gaps.begin(), gaps.end(), [&](const Gap& o) {
      return g.begin <= o.end && o.begin <= g.end;
    });
    if (!overlaps) gaps.push_back(g);
  }
  std::sort(gaps.begin(), gaps.end(), [](const Gap& a, const Gap& b) { return a.begin < b.begin; });
  return gaps;
}

GapReport gapfill_evaluate(std::span<const FluxRecord> series, const StepFiller& filler, GapScale scale,
                           std::size_t count, std::uint64_t seed) {
  GapReport r;
  r.scale = scale;
  r.gaps = place_gaps(series, scale, count, seed);
  r.filled.reserve(series.size());
  for (const auto& rec : series) r.filled.push_back({rec.time, rec.nee, rec.nee, false});

  std::vector<double> pred, truth;
  for (const Gap& g : r.gaps) {
    double nee = series[g.begin - 1].nee;
    for (std::size_t i = g.begin; i < g.end; ++i) {
      nee = filler(i - 1, nee);
      if (!std::isfinite(nee)) throw NumericError("gap filling produced a non-finite value");
      r.filled[i].prediction = nee;
      r.filled[i].was_gap = true;
      if (is_night(series[i]) && series[i].has_nee()) {
        pred.push_back(nee);
        truth.push_back(series[i].nee);
      }
    }
  }
  r.points = pred.size();
  if (r.points >= 2) {
    r.mae = metrics::mae(pred, truth);
    const double m = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    const bool constant = std::all_of(truth.begin(), truth.end(), [&](double v) { return v == m; });
    r.r2 = constant ? std::numeric_limits<double>::quiet_NaN() : metrics::r2_score(pred, truth);
    r.mmd = metrics::mmd(pred, truth);
    r.wasserstein = metrics::wasserstein_1d(pred, truth);
    r.kl = metrics::kl_divergence(pred, truth);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.mae = r.r2 = r.mmd = r.wasserstein = r.kl = nan;
  }
  return r;
}

nlohmann::json to_json(const GapReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  std::size_t shortened = 0;
  nlohmann::json gaps = nlohmann::json::array();
  for (const Gap& g : r.gaps) {
    shortened += g.shortened ? 1 : 0;
    gaps.push_back({{"begin", format_timestamp(r.filled[g.begin].time)},
                    {"records", g.end - g.begin},
                    {"shortened", g.shortened}});
  }
  return {{"scale", to_string(r.scale)}, {"n_gaps", r.gaps.size()}, {"n_shortened", shortened},
          {"points", r.points},          {"mae", num(r.mae)},       {"r2", num(r.r2)},
          {"mmd", num(r.mmd)},           {"wasserstein", num(r.wasserstein)},
          {"kl", num(r.kl)},             {"gaps", gaps}};
}

void write_filled_csv(const std::string& path, std::span<const FilledPoint> filled) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  auto cell = [](double v) { return std::isnan(v) ? std::string() : text::format_double(v); };
  f << "timestamp,truth,prediction,was_gap\n";
  for (const auto& p : filled) {
    f << format_timestamp(p.time) << ',' << cell(p.truth) << ',' << cell(p.prediction) << ','
      << (p.was_gap ? 1 : 0) << '\n';
  }
  if (!f) throw ValidationError("write failed for " + path);
}

}  // namespace pernn::nee
