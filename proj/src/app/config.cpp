#include "pernn/app/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "pernn/app/provenance.hpp"
#include "pernn/errors.hpp"
#include "pernn/nee/physics.hpp"
#include "pernn/random.hpp"
#include "pernn/steering/pursuit.hpp"
#include "pernn/text.hpp"

namespace pernn::app {

namespace {

namespace pt = boost::property_tree;

std::string where(const std::string& key) { return "config key '" + key + "'"; }

double as_double(const std::string& key, const std::string& v) {
  const auto d = text::parse_double(text::trim(v));
  if (!d || !std::isfinite(*d)) throw ValidationError(where(key) + ": not a number: '" + v + "'");
  return *d;
}

template <typename Int>
Int as_int(const std::string& key, const std::string& v) {
  const auto s = text::trim(v);
  Int out{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(where(key) + ": not an integer: '" + v + "'");
  }
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  const auto s = text::trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError(where(key) + ": not a boolean: '" + v + "'");
}

std::vector<ad::Index> as_widths(const std::string& key, const std::string& v) {
  std::vector<ad::Index> w;
  for (auto part : text::split(text::trim(v))) {
    const auto n = as_int<long>(key, std::string(part));
    if (n < 1) throw ValidationError(where(key) + ": widths must be >= 1");
    w.push_back(n);
  }
  if (w.empty()) throw ValidationError(where(key) + ": empty width list");
  return w;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto i = [](auto get) {
      return Setter([get](RunConfig& c, const std::string& k, const std::string& v) {
        get(c) = as_int<std::remove_reference_t<decltype(get(c))>>(k, v);
      });
    };
    auto d = [](auto get) {
      return Setter([get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = as_double(k, v); });
    };

    t["run.domain"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.domain = domain_from_string(std::string(text::trim(v)));
    };
    t["run.variant"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.variant = blocks::variant_from_string(std::string(text::trim(v)));
    };
    t["run.seed"] = i([](RunConfig& c) -> std::uint64_t& { return c.seed; });
    t["run.out"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = text::trim(v); };

    t["steering.train_tracks"] = i([](RunConfig& c) -> int& { return c.steering.train_tracks; });
    t["steering.dirt_tracks"] = i([](RunConfig& c) -> int& { return c.steering.dirt_tracks; });
    t["steering.road_test_tracks"] = i([](RunConfig& c) -> int& { return c.steering.road_test_tracks; });
    t["steering.test_episodes_per_track"] =
        i([](RunConfig& c) -> int& { return c.steering.test_episodes_per_track; });
    t["steering.max_steps"] = i([](RunConfig& c) -> int& { return c.steering.max_steps; });
    t["steering.episodes_per_track"] = i([](RunConfig& c) -> int& { return c.steering.demo.episodes_per_track; });
    t["steering.steps_per_episode"] = i([](RunConfig& c) -> int& { return c.steering.demo.steps_per_episode; });
    t["steering.min_traffic"] = i([](RunConfig& c) -> int& { return c.steering.demo.min_traffic; });
    t["steering.max_traffic"] = i([](RunConfig& c) -> int& { return c.steering.demo.max_traffic; });
    t["steering.start_lateral_frac"] = d([](RunConfig& c) -> double& { return c.steering.demo.start_lateral_frac; });
    t["steering.start_heading"] = d([](RunConfig& c) -> double& { return c.steering.demo.start_heading; });
    t["steering.expert_noise"] = d([](RunConfig& c) -> double& { return c.steering.demo.expert.noise_sigma; });
    t["steering.speed"] = d([](RunConfig& c) -> double& { return c.steering.demo.sim.speed; });

    t["nee.csv"] = [](RunConfig& c, const std::string&, const std::string& v) { c.nee.csv = text::trim(v); };
    t["nee.train_days"] = i([](RunConfig& c) -> int& { return c.nee.train_days; });
    t["nee.test_days"] = i([](RunConfig& c) -> int& { return c.nee.test_days; });
    t["nee.start"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.nee.synth.start = nee::parse_timestamp(std::string(text::trim(v)));
    };
    t["nee.e0"] = d([](RunConfig& c) -> double& { return c.nee.synth.params.e0; });
    t["nee.rb"] = d([](RunConfig& c) -> double& { return c.nee.synth.params.rb; });
    t["nee.noise_sigma"] = d([](RunConfig& c) -> double& { return c.nee.synth.noise_sigma; });
    t["nee.soil_coupling"] = d([](RunConfig& c) -> double& { return c.nee.synth.soil_coupling; });
    t["nee.rb_seasonal_amplitude"] = d([](RunConfig& c) -> double& { return c.nee.synth.rb_seasonal_amplitude; });
    t["nee.e0_seasonal_amplitude"] = d([](RunConfig& c) -> double& { return c.nee.synth.e0_seasonal_amplitude; });
    t["nee.anomaly_sigma"] = d([](RunConfig& c) -> double& { return c.nee.synth.anomaly_sigma; });
    t["nee.anomaly_tau_hours"] = d([](RunConfig& c) -> double& { return c.nee.synth.anomaly_tau_hours; });
    t["nee.mean_temp"] = d([](RunConfig& c) -> double& { return c.nee.synth.mean_temp; });
    t["nee.seasonal_temp_amplitude"] =
        d([](RunConfig& c) -> double& { return c.nee.synth.seasonal_temp_amplitude; });
    t["nee.diurnal_amplitude"] = d([](RunConfig& c) -> double& { return c.nee.synth.diurnal.amplitude; });
    t["nee.window_days"] = i([](RunConfig& c) -> int& { return c.nee.windows.window_days; });
    t["nee.step_days"] = i([](RunConfig& c) -> int& { return c.nee.windows.step_days; });

    t["train.batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.batch_size = as_int<int>(k, v);
    };
    t["train.learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.learning_rate = as_double(k, v);
    };
    t["train.phase1_epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.phase1_epochs = as_int<int>(k, v);
    };
    t["train.phase2_epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.phase2_epochs = as_int<int>(k, v);
    };
    t["train.single_epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.single_epochs = as_int<int>(k, v);
    };
    t["train.threshold_fraction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.threshold_fraction = as_double(k, v);
    };
    t["train.phase2_includes_empty"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.phase2_includes_empty = as_bool(k, v);
    };
    t["train.learning_widths"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.learning_widths = as_widths(k, v);
    };
    t["train.residual_widths"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.residual_widths = as_widths(k, v);
    };

    t["gapfill.gaps_per_scale"] = i([](RunConfig& c) -> int& { return c.gaps_per_scale; });
    return t;
  }();
  return table;
}

void validate(const RunConfig& c) {
  const auto& s = c.steering;
  if (s.train_tracks < 1 || s.dirt_tracks < 0 || s.road_test_tracks < 0 || s.dirt_tracks + s.road_test_tracks < 1) {
    throw ValidationError("steering needs at least one training and one test track");
  }
  if (s.max_steps < 1 || s.test_episodes_per_track < 1) throw ValidationError("steering horizons must be >= 1");
  if (s.demo.episodes_per_track < 1 || s.demo.steps_per_episode < 1) {
    throw ValidationError("demonstration counts must be >= 1");
  }
  if (s.demo.min_traffic < 0 || s.demo.max_traffic < s.demo.min_traffic) throw ValidationError("bad traffic range");
  if (c.nee.train_days < 1 || c.nee.test_days < 1) throw ValidationError("nee train/test spans must be >= 1 day");
  if (c.nee.windows.window_days < 1 || c.nee.windows.step_days < 1) throw ValidationError("bad fit windows");
  if (c.gaps_per_scale < 1) throw ValidationError("gaps_per_scale must be >= 1");
  if (c.out_dir.empty()) throw ValidationError("output directory is empty");
  nee::SynthConfig synth = c.nee.synth;
  synth.days = c.nee.train_days + c.nee.test_days;
  nee::validate(synth);
}

}  // namespace

std::string to_string(Domain d) { return d == Domain::steering ? "steering" : "nee"; }

Domain domain_from_string(const std::string& s) {
  if (s == "steering") return Domain::steering;
  if (s == "nee") return Domain::nee;
  throw ValidationError("unknown domain '" + s + "'");
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ValidationError("config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = setters().find(full);
      if (it == setters().end()) throw ValidationError("unknown config key '" + full + "'");
      it->second(c, full, value.data());
    }
  }
  validate(c);
  c.hash = sha256_hex(text);
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

namespace {

void apply(train::TrainConfig& t, const TrainOverrides& o, const std::optional<int>& epochs) {
  if (o.batch_size) t.batch_size = *o.batch_size;
  if (o.learning_rate) t.learning_rate = *o.learning_rate;
  if (epochs) t.max_epochs = *epochs;
  train::validate(t);
}

}  // namespace

steering::SteeringTrainConfig steering_train_config(const RunConfig& c) {
  auto t = steering::default_steering_train_config(c.seed);
  apply(t.phase1, c.train, c.train.phase1_epochs);
  apply(t.phase2, c.train, c.train.phase2_epochs);
  apply(t.single, c.train, c.train.single_epochs);
  if (c.train.threshold_fraction) t.threshold_fraction_of_variance = *c.train.threshold_fraction;
  if (c.train.phase2_includes_empty) t.phase2_includes_empty = *c.train.phase2_includes_empty;
  return t;
}

nee::NeeTrainConfig nee_train_config(const RunConfig& c) {
  auto t = nee::default_nee_train_config(c.seed);
  apply(t.phase1, c.train, c.train.phase1_epochs);
  apply(t.phase2, c.train, c.train.phase2_epochs);
  apply(t.single, c.train, c.train.single_epochs);
  if (c.train.threshold_fraction) t.threshold_fraction_of_variance = *c.train.threshold_fraction;
  if (c.train.phase2_includes_empty) throw ValidationError("phase2_includes_empty applies to steering only");
  return t;
}

blocks::PernnModel make_model(const RunConfig& c) {
  blocks::Architecture arch = c.domain == Domain::steering ? steering::steering_architecture(c.variant)
                                                           : nee::nee_architecture(c.variant);
  if (c.train.learning_widths) arch.learning_widths = *c.train.learning_widths;
  if (c.train.residual_widths) {
    if (c.variant != blocks::Variant::pernn) throw ValidationError("residual_widths applies to PERNN only");
    arch.residual_widths = *c.train.residual_widths;
  }
  std::shared_ptr<const blocks::PhysicsBlock> physics;
  if (blocks::has_physics(c.variant)) {
    if (c.domain == Domain::steering) {
      physics = std::make_shared<steering::PursuitPhysics>(c.steering.demo.sim.wheelbase);
    } else {
      physics = std::make_shared<nee::NeePhysics>(nee::kStep);
    }
  }
  return blocks::PernnModel(arch, physics, stream_seed(c.seed, "init/" + blocks::to_string(c.variant)));
}

blocks::PhysicsFactory physics_factory() {
  return [](const nlohmann::json& cfg) -> std::shared_ptr<const blocks::PhysicsBlock> {
    const std::string kind = cfg.value("kind", std::string());
    if (kind == "pure_pursuit") return steering::pursuit_physics_from_config(cfg);
    if (kind == "nee_ode") return nee::nee_physics_from_config(cfg);
    throw ValidationError("unknown physics block '" + kind + "'");
  };
}

nlohmann::json generator_json(const RunConfig& c) {
  if (c.domain == Domain::steering) {
    const auto& s = c.steering;
    return {{"train_tracks", s.train_tracks},
            {"dirt_tracks", s.dirt_tracks},
            {"road_test_tracks", s.road_test_tracks},
            {"episodes_per_track", s.demo.episodes_per_track},
            {"test_episodes_per_track", s.test_episodes_per_track},
            {"steps_per_episode", s.demo.steps_per_episode},
            {"traffic", {s.demo.min_traffic, s.demo.max_traffic}},
            {"start_lateral_frac", s.demo.start_lateral_frac},
            {"start_heading", s.demo.start_heading},
            {"expert_noise", s.demo.expert.noise_sigma},
            {"speed", s.demo.sim.speed},
            {"dt", s.demo.sim.dt},
            {"wheelbase", s.demo.sim.wheelbase}};
  }
  if (!c.nee.csv.empty()) return {{"csv", c.nee.csv}, {"train_days", c.nee.train_days}, {"test_days", c.nee.test_days}};
  const auto& g = c.nee.synth;
  return {{"train_days", c.nee.train_days},
          {"test_days", c.nee.test_days},
          {"start", nee::format_timestamp(g.start)},
          {"e0", g.params.e0},
          {"rb", g.params.rb},
          {"rb_seasonal_amplitude", g.rb_seasonal_amplitude},
          {"e0_seasonal_amplitude", g.e0_seasonal_amplitude},
          {"diurnal", {{"amplitude", g.diurnal.amplitude}, {"t_day", g.diurnal.t_day}, {"t_zero", g.diurnal.t_zero}}},
          {"mean_temp", g.mean_temp},
          {"seasonal_temp_amplitude", g.seasonal_temp_amplitude},
          {"anomaly_sigma", g.anomaly_sigma},
          {"anomaly_tau_hours", g.anomaly_tau_hours},
          {"soil_coupling", g.soil_coupling},
          {"noise_sigma", g.noise_sigma}};
}

}  // namespace pernn::app
