#include "pernn/app/commands.hpp"

#include <spdlog/spdlog.h>

#include <cctype>
#include <cmath>
#include <filesystem>
#include <random>

#include "pernn/app/provenance.hpp"
#include "pernn/errors.hpp"
#include "pernn/metrics/metrics.hpp"
#include "pernn/nee/physics.hpp"
#include "pernn/random.hpp"
#include "pernn/steering/pursuit.hpp"

namespace pernn::app {

namespace fs = std::filesystem;
using blocks::Variant;

namespace files {
namespace {
std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}
}  // namespace
std::string model(Variant v) { return "model_" + lower(blocks::to_string(v)) + ".bin"; }
std::string history(Variant v) { return "history_" + lower(blocks::to_string(v)) + ".csv"; }
std::string train_manifest(Variant v) { return "train_" + lower(blocks::to_string(v)) + ".json"; }
std::string report(const std::string& name) { return "report_" + lower(name) + ".json"; }
std::string gapfill_report(Variant v) { return "gapfill_" + lower(blocks::to_string(v)) + ".json"; }
std::string filled(Variant v, nee::GapScale s) {
  return "filled_" + lower(blocks::to_string(v)) + "_" + nee::to_string(s) + ".csv";
}
}  // namespace files

namespace {

std::string prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) {
    throw ValidationError("cannot create output directory '" + cfg.out_dir + "'");
  }
  return cfg.out_dir;
}

std::string in_out(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

std::string require_input(const RunConfig& cfg, const std::string& name) {
  const std::string path = in_out(cfg, name);
  if (!fs::exists(path)) throw ValidationError("missing dataset '" + path + "'; run gen-data first");
  return path;
}

nlohmann::json provenance(const RunConfig& cfg, const char* command) {
  return {{"command", command}, {"config_sha256", cfg.hash}, {"domain", to_string(cfg.domain)}, {"seed", cfg.seed}};
}

// ---- steering -------------------------------------------------------------

steering::Benchmark benchmark_of(const RunConfig& cfg) {
  const auto& s = cfg.steering;
  return steering::make_benchmark(stream_seed(cfg.seed, "benchmark"), s.train_tracks, s.dirt_tracks,
                                  s.road_test_tracks);
}

std::vector<steering::Demonstration> concat(std::vector<steering::Demonstration> a,
                                            const std::vector<steering::Demonstration>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<std::string> gen_steering(const RunConfig& cfg) {
  using steering::Scenario;
  const auto bench = benchmark_of(cfg);
  const auto& demo = cfg.steering.demo;
  const auto d1 = steering::generate_demonstrations(bench.train, Scenario::empty, demo, stream_seed(cfg.seed, "d1"));
  const auto d2 = steering::generate_demonstrations(bench.train, Scenario::traffic, demo, stream_seed(cfg.seed, "d2"));
  steering::DemoConfig test_demo = demo;
  test_demo.episodes_per_track = cfg.steering.test_episodes_per_track;
  const auto t1 = steering::generate_demonstrations(bench.test, Scenario::empty, test_demo, stream_seed(cfg.seed, "t1"));
  const auto t2 =
      steering::generate_demonstrations(bench.test, Scenario::traffic, test_demo, stream_seed(cfg.seed, "t2"));

  const auto train_rows = concat(d1.rows, d2.rows);
  const auto test_rows = concat(t1.rows, t2.rows);
  const std::string train_path = in_out(cfg, files::kTrainDemos);
  const std::string test_path = in_out(cfg, files::kTestDemos);
  steering::write_demonstrations_csv(train_path, train_rows);
  steering::write_demonstrations_csv(test_path, test_rows);
  stamp_csv(train_path, cfg.hash);
  stamp_csv(test_path, cfg.hash);

  nlohmann::json train_ids = nlohmann::json::array(), test_ids = nlohmann::json::array();
  for (const auto& t : bench.train) train_ids.push_back(t.id());
  for (const auto& t : bench.test) test_ids.push_back(t.id());
  std::vector<std::string> truncated = d1.truncated;
  truncated.insert(truncated.end(), d2.truncated.begin(), d2.truncated.end());

  nlohmann::json m = provenance(cfg, "gen-data");
  m["generator"] = generator_json(cfg);
  m["tracks"] = {{"train", train_ids}, {"test", test_ids}};
  m["counts"] = {{"train_rows", train_rows.size()},
                 {"train_empty_rows", d1.rows.size()},
                 {"train_traffic_rows", d2.rows.size()},
                 {"test_rows", test_rows.size()}};
  m["truncated_episodes"] = truncated;
  m["files"] = {{files::kTrainDemos, git_blob_hash(read_file(train_path))},
                {files::kTestDemos, git_blob_hash(read_file(test_path))}};
  const std::string manifest = in_out(cfg, files::kManifest);
  write_json(manifest, m);
  spdlog::info("gen-data: {} training rows, {} test rows", train_rows.size(), test_rows.size());
  return {train_path, test_path, manifest};
}

std::vector<double> steering_truth(std::span<const steering::Demonstration> rows) {
  std::vector<double> y;
  y.reserve(rows.size());
  for (const auto& r : rows) y.push_back(steering::action_from_norm(r.delta_norm).delta_rad);
  return y;
}

// ---- nee ------------------------------------------------------------------

struct Split {
  std::vector<nee::FluxRecord> train;
  std::vector<nee::FluxRecord> test;
};

Split split_series(const RunConfig& cfg, const std::vector<nee::FluxRecord>& records) {
  if (records.empty()) throw ValidationError("flux series is empty");
  const nee::Timestamp boundary = records.front().time + static_cast<nee::Timestamp>(cfg.nee.train_days) * 86400;
  Split s;
  for (const auto& r : records) (r.time < boundary ? s.train : s.test).push_back(r);
  if (s.train.empty() || s.test.empty()) throw ValidationError("train/test split leaves one side empty");
  return s;
}

std::vector<nee::FluxRecord> load_flux(const RunConfig& cfg) {
  return nee::read_flux_csv(require_input(cfg, files::kFlux)).records;
}

std::vector<nee::NeeSample> samples_of(const RunConfig& cfg, const std::vector<nee::FluxRecord>& part) {
  return nee::build_samples(part, nee::estimate_params_windowed(part, cfg.nee.windows));
}

std::vector<std::string> gen_nee(const RunConfig& cfg) {
  std::vector<nee::FluxRecord> records;
  std::size_t dropped = 0;
  if (!cfg.nee.csv.empty()) {
    auto read = nee::read_flux_csv(cfg.nee.csv);
    records = std::move(read.records);
    dropped = read.dropped;
  } else {
    nee::SynthConfig synth = cfg.nee.synth;
    synth.days = cfg.nee.train_days + cfg.nee.test_days;
    synth.seed = stream_seed(cfg.seed, "data");
    records = nee::synth_flux_generate(synth).records;
  }
  const Split split = split_series(cfg, records);
  const std::string path = in_out(cfg, files::kFlux);
  nee::write_flux_csv(path, records);
  stamp_csv(path, cfg.hash);

  std::size_t night = 0;
  for (const auto& r : records) night += nee::is_night(r) ? 1 : 0;
  nlohmann::json m = provenance(cfg, "gen-data");
  m["generator"] = generator_json(cfg);
  m["counts"] = {{"records", records.size()},
                 {"night_records", night},
                 {"dropped_rows", dropped},
                 {"train_records", split.train.size()},
                 {"test_records", split.test.size()}};
  m["span"] = {{"first", nee::format_timestamp(records.front().time)},
               {"test_start", nee::format_timestamp(split.test.front().time)},
               {"last", nee::format_timestamp(records.back().time)}};
  m["files"] = {{files::kFlux, git_blob_hash(read_file(path))}};
  const std::string manifest = in_out(cfg, files::kManifest);
  write_json(manifest, m);
  spdlog::info("gen-data: {} flux records ({} night)", records.size(), night);
  return {path, manifest};
}

blocks::PernnModel load_for(const RunConfig& cfg, const std::string& path) {
  blocks::PernnModel model = blocks::load_model(path, physics_factory());
  const std::string domain = model.metadata.value("domain", std::string());
  if (domain != to_string(cfg.domain)) {
    throw ValidationError("model '" + path + "' was trained for domain '" + domain + "', config is '" +
                          to_string(cfg.domain) + "'");
  }
  return model;
}

double final_loss(const std::vector<train::LossRecord>& h) { return h.empty() ? 0.0 : h.back().loss; }

}  // namespace

std::vector<std::string> cmd_gen_data(const RunConfig& cfg) {
  prepare_out(cfg);
  return cfg.domain == Domain::steering ? gen_steering(cfg) : gen_nee(cfg);
}

std::vector<std::string> cmd_train(const RunConfig& cfg) {
  prepare_out(cfg);
  blocks::PernnModel model = make_model(cfg);
  std::vector<train::LossRecord> history;
  bool diverged = false;
  std::string data_file;
  std::size_t rows = 0;
  if (cfg.domain == Domain::steering) {
    data_file = require_input(cfg, files::kTrainDemos);
    const auto demos = steering::read_demonstrations_csv(data_file);
    rows = demos.size();
    const auto r = steering::train_steering_model(model, demos, steering_train_config(cfg));
    history = r.history;
    diverged = r.diverged;
  } else {
    data_file = require_input(cfg, files::kFlux);
    const Split split = split_series(cfg, nee::read_flux_csv(data_file).records);
    const auto samples = samples_of(cfg, split.train);
    rows = samples.size();
    const auto r = nee::train_nee_model(model, samples, nee_train_config(cfg));
    history = r.history;
    diverged = r.diverged;
  }
  const std::string data_hash = git_blob_hash(read_file(data_file));
  model.metadata["config_sha256"] = cfg.hash;
  model.metadata["data_sha1"] = data_hash;
  model.metadata["seed"] = cfg.seed;

  const std::string hist_path = in_out(cfg, files::history(cfg.variant));
  train::write_history_csv(hist_path, history);
  stamp_csv(hist_path, cfg.hash);

  nlohmann::json phases = nlohmann::json::object();
  for (const auto& rec : history) {
    auto& p = phases[rec.phase];
    if (!p.is_object()) p = {{"epochs", 0}};
    p["epochs"] = p["epochs"].get<int>() + 1;
    p["final_loss"] = std::isfinite(rec.loss) ? nlohmann::json(rec.loss) : nlohmann::json(nullptr);
  }
  nlohmann::json m = provenance(cfg, "train");
  m["variant"] = blocks::to_string(cfg.variant);
  m["architecture"] = blocks::to_json(model.architecture());
  m["parameters"] = model.parameter_count();
  m["data"] = {{"file", fs::path(data_file).filename().string()}, {"git_blob", data_hash}, {"rows", rows}};
  m["phases"] = phases;
  m["diverged"] = diverged;
  const std::string manifest = in_out(cfg, files::train_manifest(cfg.variant));
  write_json(manifest, m);
  if (diverged) throw NumericError(blocks::to_string(cfg.variant) + " training diverged; see " + hist_path);

  const std::string model_path = in_out(cfg, files::model(cfg.variant));
  blocks::save_model(model, model_path);
  spdlog::info("train: {} {} epochs, final loss {}", blocks::to_string(cfg.variant), history.size(),
               final_loss(history));
  for (const auto& rec : history) spdlog::debug("{} epoch {} {:.1f} ms", rec.phase, rec.epoch, rec.wall_ms);
  return {model_path, hist_path, manifest};
}

std::vector<std::string> cmd_evaluate(const RunConfig& cfg, const std::string& model_path) {
  prepare_out(cfg);
  nlohmann::json r = provenance(cfg, "evaluate");
  std::string name;
  if (cfg.domain == Domain::steering) {
    const auto test_rows = steering::read_demonstrations_csv(require_input(cfg, files::kTestDemos));
    const auto bench = benchmark_of(cfg);
    const auto& sim = cfg.steering.demo.sim;
    steering::DrivingReport drive;
    nlohmann::json mae;
    if (model_path == kExpertModel) {
      name = kExpertModel;
      steering::ExpertConfig ec = cfg.steering.demo.expert;
      ec.noise_sigma = 0.0;
      steering::ExpertPolicy expert(ec, sim.wheelbase);
      drive = steering::evaluate_driving(expert, bench.test, cfg.steering.max_steps, sim);
      mae = nullptr;
    } else {
      const auto model = load_for(cfg, model_path);
      name = blocks::to_string(model.architecture().variant);
      mae = metrics::mae(steering::predict_steering(model, test_rows), steering_truth(test_rows));
      steering::NetworkPolicy policy(model);
      drive = steering::evaluate_driving(policy, bench.test, cfg.steering.max_steps, sim);
    }
    const auto dj = steering::to_json(drive);
    r["variant"] = name;
    r["test_rows"] = test_rows.size();
    r["test_mae_rad"] = mae;
    r["avg_distance_m"] = drive.avg_distance;
    r["avg_abs_jerk"] = drive.avg_abs_jerk;
    r["max_distance_m"] = cfg.steering.max_steps * sim.speed * sim.dt;
    r["tracks"] = dj.at("tracks");
  } else {
    if (model_path == kExpertModel) throw ValidationError("the expert policy exists for the steering domain only");
    const auto model = load_for(cfg, model_path);
    name = blocks::to_string(model.architecture().variant);
    const Split split = split_series(cfg, load_flux(cfg));
    const auto report = nee::evaluate_nee(model, samples_of(cfg, split.test));
    r["variant"] = name;
    r["metrics"] = nee::to_json(report);
  }
  const std::string path = in_out(cfg, files::report(name));
  write_json(path, r);
  spdlog::info("evaluate: wrote {}", path);
  return {path};
}

std::vector<std::string> cmd_gapfill(const RunConfig& cfg, const std::string& model_path) {
  if (cfg.domain != Domain::nee) throw ValidationError("gapfill is not supported for the steering domain");
  prepare_out(cfg);
  const auto model = load_for(cfg, model_path);
  const Variant v = model.architecture().variant;
  const Split split = split_series(cfg, load_flux(cfg));
  const auto filler = nee::model_filler(model, split.test);
  const auto persistence = nee::persistence_filler();
  const auto count = static_cast<std::size_t>(cfg.gaps_per_scale);
  const std::uint64_t gap_seed = stream_seed(cfg.seed, "gaps");

  std::vector<std::string> written;
  nlohmann::json scales = nlohmann::json::object();
  for (nee::GapScale s : nee::kGapScales) {
    const auto rep = nee::gapfill_evaluate(split.test, filler, s, count, gap_seed);
    const auto base = nee::gapfill_evaluate(split.test, persistence, s, count, gap_seed);
    scales[nee::to_string(s)] = {{"model", nee::to_json(rep)}, {"persistence", nee::to_json(base)}};
    const std::string csv = in_out(cfg, files::filled(v, s));
    nee::write_filled_csv(csv, rep.filled);
    stamp_csv(csv, cfg.hash);
    written.push_back(csv);
  }
  nlohmann::json r = provenance(cfg, "gapfill");
  r["variant"] = blocks::to_string(v);
  r["gaps_per_scale"] = cfg.gaps_per_scale;
  r["scales"] = scales;
  const std::string path = in_out(cfg, files::gapfill_report(v));
  write_json(path, r);
  written.insert(written.begin(), path);
  return written;
}

std::vector<ad::GradcheckCase> physics_gradcheck_cases(std::uint64_t seed) {
  Rng rng = make_rng(seed, "gradcheck/physics");
  auto column = [&](ad::Index n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    ad::Matrix m(n, 1);
    for (ad::Index i = 0; i < n; ++i) m(i, 0) = u(rng);
    return m;
  };
  constexpr ad::Index n = 12;
  std::vector<ad::GradcheckCase> cases;
  {
    ad::GradcheckCase c;
    c.name = "physics/pure_pursuit";
    const std::array<ad::NodeId, 2> in{c.tape.parameter("lookahead", column(n, 1.0, 150.0)),
                                       c.tape.parameter("theta", column(n, -1.4, 1.4))};
    const ad::NodeId out = steering::PursuitPhysics().emit(c.tape, in);
    c.loss = c.tape.sum(c.tape.multiply(out, c.tape.constant(column(n, -1.0, 1.0))));
    cases.push_back(std::move(c));
  }
  {
    ad::GradcheckCase c;
    c.name = "physics/nee_ode";
    const nee::NeePhysics phys;
    const std::array<ad::NodeId, 3> in{c.tape.parameter("e0", column(n, 60.0, 390.0)),
                                       c.tape.parameter("rb", column(n, 0.5, 5.0)),
                                       c.tape.parameter("dT_dt", column(n, -5.0, 5.0))};
    const ad::NodeId target = phys.emit_target(c.tape, phys.emit(c.tape, in));
    c.loss = c.tape.sum(c.tape.multiply(target, c.tape.constant(column(n, -1.0, 1.0))));
    c.inputs[nee::kTairInput] = column(n, -10.0, 35.0);
    c.inputs[nee::kNeeInput] = column(n, 0.0, 8.0);
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<GradcheckRow> run_gradcheck(std::uint64_t seed) {
  std::vector<ad::GradcheckCase> cases = ad::node_kind_cases(seed);
  for (auto& c : physics_gradcheck_cases(seed)) cases.push_back(std::move(c));
  std::vector<GradcheckRow> rows;
  for (const auto& c : cases) {
    const auto g = ad::check_gradient(c.tape, c.inputs, c.loss, 1e-5, c.mode);
    const bool pass = std::isfinite(g.max_rel_error) && g.max_rel_error <= kGradcheckTolerance;
    rows.push_back({c.name, g.max_rel_error, g.coordinates, pass});
  }
  return rows;
}

nlohmann::json to_json(const std::vector<GradcheckRow>& rows) {
  nlohmann::json a = nlohmann::json::array();
  bool all = true;
  for (const auto& r : rows) {
    all = all && r.pass;
    a.push_back({{"name", r.name},
                 {"max_rel_error", std::isfinite(r.max_rel_error) ? nlohmann::json(r.max_rel_error) : nullptr},
                 {"coordinates", r.coordinates},
                 {"pass", r.pass}});
  }
  return {{"tolerance", kGradcheckTolerance}, {"epsilon", 1e-5}, {"all_pass", all}, {"cases", a}};
}

}  // namespace pernn::app
