#include "pernn/steering/experiment.hpp"

#include "pernn/errors.hpp"
#include "pernn/metrics/metrics.hpp"
#include "pernn/random.hpp"

namespace pernn::steering {

const VariantResult& SteeringExperiment::of(blocks::Variant v) const {
  for (const auto& r : results)
    if (r.variant == v) return r;
  throw ValidationError("experiment has no result for " + blocks::to_string(v));
}

namespace {

std::vector<Demonstration> concat(std::vector<Demonstration> a, const std::vector<Demonstration>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

SteeringExperiment run_steering_experiment(const SteeringExperimentConfig& cfg,
                                           const SteeringTrainConfig& train_cfg) {
  const Benchmark bench = make_benchmark(stream_seed(cfg.seed, "benchmark"), cfg.train_tracks, cfg.dirt_tracks,
                                       cfg.road_test_tracks);
  SteeringExperiment ex;

  DemoSet d1 = generate_demonstrations(bench.train, Scenario::empty, cfg.demo, stream_seed(cfg.seed, "d1"));
  DemoSet d2 = generate_demonstrations(bench.train, Scenario::traffic, cfg.demo, stream_seed(cfg.seed, "d2"));
  ex.truncated = d1.truncated;
  ex.truncated.insert(ex.truncated.end(), d2.truncated.begin(), d2.truncated.end());
  const auto train_rows = concat(d1.rows, d2.rows);

  DemoConfig test_demo = cfg.demo;
  test_demo.episodes_per_track = cfg.test_episodes_per_track;
  DemoSet t1 = generate_demonstrations(bench.test, Scenario::empty, test_demo, stream_seed(cfg.seed, "t1"));
  DemoSet t2 = generate_demonstrations(bench.test, Scenario::traffic, test_demo, stream_seed(cfg.seed, "t2"));
  const auto test_rows = concat(t1.rows, t2.rows);
  ex.train_rows = train_rows.size();
  ex.test_rows = test_rows.size();

  std::vector<double> truth;
  truth.reserve(test_rows.size());
  for (const auto& r : test_rows) truth.push_back(action_from_norm(r.delta_norm).delta_rad);

  ExpertPolicy expert(ExpertConfig{.noise_sigma = 0.0}, cfg.demo.sim.wheelbase);
  ex.expert = evaluate_driving(expert, bench.test, cfg.max_steps, cfg.demo.sim);

  for (blocks::Variant v : cfg.variants) {
    VariantResult r;
    r.variant = v;
    blocks::PernnModel model = make_steering_model(v, stream_seed(cfg.seed, "init/" + blocks::to_string(v)));
    r.parameters = model.parameter_count();
    r.training = train_steering_model(model, train_rows, train_cfg);
    r.test_mae = metrics::mae(predict_steering(model, test_rows), truth);
    NetworkPolicy policy(model);
    r.driving = evaluate_driving(policy, bench.test, cfg.max_steps, cfg.demo.sim);
    ex.results.push_back(std::move(r));
  }
  return ex;
}

nlohmann::json to_json(const DrivingReport& r) {
  nlohmann::json tracks = nlohmann::json::array();
  for (const auto& t : r.tracks) {
    tracks.push_back({{"track_id", t.track_id},
                      {"category", to_string(t.category)},
                      {"distance_m", t.distance_m},
                      {"avg_abs_jerk", t.avg_abs_jerk},
                      {"steps", t.steps},
                      {"boundary_contact", t.boundary_contact}});
  }
  return {{"avg_distance", r.avg_distance}, {"avg_abs_jerk", r.avg_abs_jerk}, {"tracks", tracks}};
}

nlohmann::json to_json(const SteeringExperiment& e) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : e.results) {
    models.push_back({{"variant", blocks::to_string(r.variant)},
                      {"parameters", r.parameters},
                      {"test_mae", r.test_mae},
                      {"epochs", r.training.history.size()},
                      {"diverged", r.training.diverged},
                      {"driving", to_json(r.driving)}});
  }
  return {{"train_rows", e.train_rows},
          {"test_rows", e.test_rows},
          {"truncated_episodes", e.truncated},
          {"expert", to_json(e.expert)},
          {"models", models}};
}

}  // namespace pernn::steering
