#include "pernn/nee/experiment.hpp"

#include <cmath>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"

namespace pernn::nee {

NeeExperimentConfig oracle_experiment_config(std::uint64_t seed) {
  NeeExperimentConfig c;
  c.seed = seed;
  c.train_days = 48;
  c.test_days = 12;
  return c;
}

NeeExperimentConfig noisy_experiment_config(std::uint64_t seed) {
  NeeExperimentConfig c;
  c.seed = seed;
  c.train_days = 120;
  c.test_days = 30;
  c.synth.start = make_timestamp(2012, 3, 1);
  c.synth.noise_sigma = 0.5;
  c.synth.soil_coupling = 0.3;
  c.synth.rb_seasonal_amplitude = 0.25;
  c.synth.anomaly_sigma = 3.0;
  c.synth.anomaly_tau_hours = 48.0;
  return c;
}

const NeeVariantResult& NeeExperiment::of(blocks::Variant v) const {
  for (const auto& r : results)
    if (r.variant == v) return r;
  throw ValidationError("variant " + blocks::to_string(v) + " was not run");
}

NeeExperiment run_nee_experiment(const NeeExperimentConfig& cfg, const NeeTrainConfig& train_cfg) {
  if (cfg.train_days < 1 || cfg.test_days < 1) throw ValidationError("train and test spans must be at least a day");
  SynthConfig synth = cfg.synth;
  synth.days = cfg.train_days + cfg.test_days;
  synth.seed = stream_seed(cfg.seed, "data");
  const SynthSeries series = synth_flux_generate(synth);
  const auto split = static_cast<std::ptrdiff_t>(cfg.train_days) * 48;
  const std::vector<FluxRecord> train(series.records.begin(), series.records.begin() + split);
  const std::vector<FluxRecord> test(series.records.begin() + split, series.records.end());
  const auto train_samples = build_samples(train, estimate_params_windowed(train));
  const auto test_samples = build_samples(test, estimate_params_windowed(test));

  NeeExperiment e;
  e.train_samples = train_samples.size();
  e.test_samples = test_samples.size();
  double mean = 0.0;
  for (const auto& s : test_samples) mean += s.nee_next / static_cast<double>(test_samples.size());
  double var = 0.0, persistence = 0.0;
  for (const auto& s : test_samples) {
    var += (s.nee_next - mean) * (s.nee_next - mean) / static_cast<double>(test_samples.size());
    persistence += std::abs(s.nee_next - s.nee_t) / static_cast<double>(test_samples.size());
  }
  e.test_target_std = std::sqrt(var);
  e.persistence_mae = persistence;

  for (blocks::Variant v : cfg.variants) {
    blocks::PernnModel model = make_nee_model(v, stream_seed(cfg.seed, "init/" + blocks::to_string(v)));
    NeeVariantResult r;
    r.variant = v;
    r.parameters = model.parameter_count();
    r.training = train_nee_model(model, train_samples, train_cfg);
    if (r.training.diverged) throw NumericError(blocks::to_string(v) + " training diverged");
    r.report = evaluate_nee(model, test_samples);
    e.results.push_back(std::move(r));
  }
  return e;
}

nlohmann::json to_json(const NeeExperiment& e) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : e.results) {
    models.push_back({{"variant", blocks::to_string(r.variant)},
                      {"parameters", r.parameters},
                      {"epochs", r.training.history.size()},
                      {"report", to_json(r.report)}});
  }
  return {{"train_samples", e.train_samples},
          {"test_samples", e.test_samples},
          {"test_target_std", e.test_target_std},
          {"persistence_mae", e.persistence_mae},
          {"models", models}};
}

}  // namespace pernn::nee
