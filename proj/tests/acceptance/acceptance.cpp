// Acceptance runner: one pass/fail line per criterion.
// Usage: acceptance [criterion ...]   (all criteria when none are given)

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pernn/app/commands.hpp"
#include "pernn/app/config.hpp"
#include "pernn/app/provenance.hpp"
#include "pernn/autodiff/tape.hpp"
#include "pernn/blocks/model.hpp"
#include "pernn/metrics/metrics.hpp"
#include "pernn/nee/estimate.hpp"
#include "pernn/nee/experiment.hpp"
#include "pernn/nee/flux.hpp"
#include "pernn/nee/synth.hpp"
#include "pernn/random.hpp"
#include "pernn/steering/experiment.hpp"
#include "pernn/steering/pursuit.hpp"

using namespace pernn;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr double kClosedFormTol = 1e-12;
constexpr int kClosedFormSamples = 1000;
constexpr double kClosedFormSeconds = 1.0;
constexpr int kHeuristicSamples = 10000;
constexpr double kOracleMaeFraction = 0.05;
constexpr double kNoiseFreeParamTol = 0.01;
constexpr double kNoisyMedianParamTol = 0.15;
constexpr int kNoisySeeds = 10;
constexpr double kOracleSeconds = 300.0;
constexpr double kNoisyOrderingSeconds = 1200.0;
constexpr double kDrivingSeconds = 1800.0;
constexpr double kIdenticalMmd = 1e-9;
constexpr double kIdenticalKl = 1e-6;
constexpr double kMetricOracleTol = 1e-12;
constexpr double kMetricSeconds = 5.0;
constexpr int kOrderingSeeds = 3;
constexpr int kOrderingMajority = 2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel(double got, double want) { return want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto rows = app::run_gradcheck(0);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string failed;
  for (const auto& r : rows) {
    worst = std::max(worst, std::isfinite(r.max_rel_error) ? r.max_rel_error : 1e300);
    if (!(r.max_rel_error <= kGradTol)) failed += " " + r.name;
  }
  const bool has_physics = std::any_of(rows.begin(), rows.end(), [](auto& r) { return r.name == "physics/pure_pursuit"; }) &&
                           std::any_of(rows.begin(), rows.end(), [](auto& r) { return r.name == "physics/nee_ode"; });
  Outcome o;
  o.pass = failed.empty() && has_physics && secs < kGradSeconds;
  o.detail = std::to_string(rows.size()) + " cases, worst rel error " + fmt("%.2e", worst) + ", " + fmt("%.2f s", secs);
  if (!failed.empty()) o.detail += ", failing:" + failed;
  return o;
}

Outcome physics_exactness() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(11, "exactness");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_pp = 0.0, worst_ode = 0.0;
  for (int i = 0; i < kClosedFormSamples; ++i) {
    const double wheelbase = 0.5 + 4.5 * u(rng);
    const double theta = -std::numbers::pi / 2 + std::numbers::pi * u(rng);
    const double l = 0.1 + 199.9 * u(rng);
    const double want = std::atan2(2.0 * wheelbase * std::sin(theta), l);
    const double got = steering::pure_pursuit_delta(wheelbase, theta, l);
    worst_pp = std::max(worst_pp, rel(got, want));

    nee::RespirationParams p{50.0 + 350.0 * u(rng), 0.1 + 9.9 * u(rng)};
    const double tair = -30.0 + 70.0 * u(rng);
    const double slope = (u(rng) - 0.5) * 1e-3;
    // d/dT of rb exp(E0 (1/(Tref - T0) - 1/(T - T0))) is E0/(T - T0)^2 times the rate.
    const double x = tair - (-46.02);
    const double rate = p.rb * std::exp(p.e0 * (1.0 / (15.0 + 46.02) - 1.0 / x));
    const double want_ode = rate * p.e0 / (x * x) * slope;
    const double got_ode = nee::nee_ode_rhs(p, tair, slope);
    worst_ode = std::max(worst_ode, rel(got_ode, want_ode));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_pp <= kClosedFormTol && worst_ode <= kClosedFormTol && secs < kClosedFormSeconds;
  o.detail = "pursuit " + fmt("%.1e", worst_pp) + ", ode " + fmt("%.1e", worst_ode) + ", " + fmt("%.3f s", secs);
  return o;
}

// Physics whose output ignores its intermediates.
class FlatPhysics final : public blocks::PhysicsBlock {
 public:
  std::string kind() const override { return "flat"; }
  std::vector<std::string> intermediate_names() const override { return {"a", "b"}; }
  ad::NodeId emit(ad::Tape& t, std::span<const ad::NodeId> in) const override {
    const ad::NodeId zero = t.parameter("phys/zero", ad::Matrix::Zero(1, 1), false);
    return t.add(t.multiply(in[0], zero), t.multiply(in[1], zero));
  }
  nlohmann::json config() const override { return {{"kind", kind()}}; }
};

double learning_grad_norm(blocks::Variant v) {
  blocks::Architecture a;
  a.variant = v;
  a.input_width = 5;
  a.learning_widths = {6, 4};
  a.heads = {{"a"}, {"b"}};
  if (v == blocks::Variant::pernn) a.residual_widths = {3};
  const blocks::PernnModel model(a, std::make_shared<FlatPhysics>(), 4);
  Rng rng = make_rng(3, "rows");
  std::normal_distribution<double> g(0.0, 1.0);
  ad::Matrix x(16, 5);
  for (ad::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  ad::Tape t = model.tape();
  const ad::NodeId out = t.output(blocks::out::output);
  const ad::NodeId loss = t.sum(t.square(t.subtract(out, t.constant(ad::Matrix::Ones(x.rows(), 1)))));
  const auto ev = ad::forward(t, {{std::string(blocks::kFeatureInput), x}}, ad::Mode::training);
  const auto grads = ad::backward(t, ev, loss);
  double sq = 0.0;
  for (const auto& p : t.trainable_parameters()) {
    if (t.node(p).name.rfind("learn/", 0) != 0) continue;
    if (const auto* gr = grads.find(p)) sq += gr->squaredNorm();
  }
  return std::sqrt(sq);
}

Outcome residual_pathway() {
  const double pernn = learning_grad_norm(blocks::Variant::pernn);
  const double penn = learning_grad_norm(blocks::Variant::penn);
  return {pernn > 0.0 && penn == 0.0, "learning-block gradient norm PERNN " + fmt("%.3e", pernn) + ", PENN " +
                                          fmt("%.3e", penn)};
}

bool heuristic_matches(const steering::SensorArray& r) {
  int best = 0;
  for (int k = 1; k < steering::kSensorCount; ++k)
    if (r[static_cast<std::size_t>(k)] > r[static_cast<std::size_t>(best)]) best = k;
  const auto ref = steering::heuristic_reference(r);
  return ref.lookahead == r[static_cast<std::size_t>(best)] &&
         ref.theta == (10.0 * best - 90.0) * std::numbers::pi / 180.0;
}

Outcome heuristic_oracle() {
  Rng rng = make_rng(5, "heuristic");
  std::uniform_real_distribution<double> range(0.0, steering::kMaxRange);
  std::uniform_int_distribution<int> coarse(0, 4);
  int mismatches = 0, cases = 0;
  for (int i = 0; i < kHeuristicSamples; ++i) {
    steering::SensorArray r;
    // Every third vector draws from five levels so ties are common.
    for (auto& x : r) x = i % 3 == 0 ? 50.0 * coarse(rng) : range(rng);
    mismatches += !heuristic_matches(r);
    ++cases;
  }
  for (double level : {0.0, 10.0, 200.0}) {
    steering::SensorArray r;
    r.fill(level);
    mismatches += !heuristic_matches(r);
    ++cases;
  }
  for (int a = 0; a < steering::kSensorCount; ++a)
    for (int b = a + 1; b < steering::kSensorCount; ++b) {
      steering::SensorArray r;
      r.fill(5.0);
      r[static_cast<std::size_t>(a)] = r[static_cast<std::size_t>(b)] = 120.0;
      mismatches += !heuristic_matches(r);
      ++cases;
    }
  return {mismatches == 0, std::to_string(cases) + " vectors, " + std::to_string(mismatches) + " mismatches"};
}

Outcome nee_oracle_recovery() {
  const auto t0 = Clock::now();
  auto cfg = nee::oracle_experiment_config(1);
  cfg.variants = {blocks::Variant::pernn};
  const auto ex = nee::run_nee_experiment(cfg, nee::default_nee_train_config(1));
  const double mae = ex.of(blocks::Variant::pernn).report.mae;
  const double frac = mae / ex.test_target_std;

  nee::SynthConfig clean;
  clean.days = 60;
  double worst_clean = 0.0;
  for (const auto& w : nee::estimate_params_windowed(nee::synth_flux_generate(clean).records).windows)
    worst_clean = std::max({worst_clean, rel(w.params.e0, 200.0), rel(w.params.rb, 2.0)});

  std::vector<double> e0_err, rb_err;
  for (int s = 0; s < kNoisySeeds; ++s) {
    nee::SynthConfig noisy = clean;
    noisy.noise_sigma = 0.5;
    noisy.seed = stream_seed(static_cast<std::uint64_t>(s), "data");
    for (const auto& w : nee::estimate_params_windowed(nee::synth_flux_generate(noisy).records).windows) {
      e0_err.push_back(rel(w.params.e0, 200.0));
      rb_err.push_back(rel(w.params.rb, 2.0));
    }
  }
  const double med_e0 = median(e0_err), med_rb = median(rb_err);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = frac <= kOracleMaeFraction && worst_clean <= kNoiseFreeParamTol && med_e0 <= kNoisyMedianParamTol &&
           med_rb <= kNoisyMedianParamTol && secs < kOracleSeconds;
  o.detail = "PERNN MAE " + fmt("%.4f", mae) + " = " + fmt("%.2f%%", 100 * frac) + " of std; noise-free worst " +
             fmt("%.3f%%", 100 * worst_clean) + "; noisy median E0 " + fmt("%.1f%%", 100 * med_e0) + ", rb " +
             fmt("%.1f%%", 100 * med_rb) + "; " + fmt("%.0f s", secs);
  return o;
}

struct Tally {
  std::string name;
  int wins = 0;
};

std::string tally_text(const std::vector<Tally>& t) {
  std::string s;
  for (const auto& x : t) s += (s.empty() ? "" : ", ") + x.name + " " + std::to_string(x.wins) + "/" + std::to_string(kOrderingSeeds);
  return s;
}

bool all_majority(const std::vector<Tally>& t) {
  return std::all_of(t.begin(), t.end(), [](const Tally& x) { return x.wins >= kOrderingMajority; });
}

Outcome nee_ordering() {
  using blocks::Variant;
  const auto t0 = Clock::now();
  std::vector<Tally> t{{"PERNN<PENN"}, {"PENN<PINN"}, {"PERNN<FCNN"}};
  std::string per_seed;
  for (int s = 1; s <= kOrderingSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const auto ex = nee::run_nee_experiment(nee::noisy_experiment_config(seed), nee::default_nee_train_config(seed));
    const double pernn = ex.of(Variant::pernn).report.mae, penn = ex.of(Variant::penn).report.mae;
    const double fcnn = ex.of(Variant::fcnn).report.mae, pinn = ex.of(Variant::pinn).report.mae;
    t[0].wins += pernn < penn;
    t[1].wins += penn < pinn;
    t[2].wins += pernn < fcnn;
    std::ostringstream os;
    os.precision(4);
    os << " [seed " << s << ": PERNN " << pernn << " PENN " << penn << " PINN " << pinn << " FCNN " << fcnn << "]";
    per_seed += os.str();
  }
  const double secs = seconds_since(t0);
  return {all_majority(t) && secs < kNoisyOrderingSeconds, tally_text(t) + ";" + per_seed + "; " + fmt("%.0f s", secs)};
}

Outcome driving_ordering() {
  using blocks::Variant;
  const auto t0 = Clock::now();
  std::vector<Tally> t{{"MAE PERNN<=FCNN"}, {"jerk PERNN<FCNN"}, {"distance PENN<PERNN"}};
  std::string per_seed;
  for (int s = 1; s <= kOrderingSeeds; ++s) {
    steering::SteeringExperimentConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.variants = {Variant::pernn, Variant::penn, Variant::fcnn};
    const auto ex = steering::run_steering_experiment(cfg, steering::default_steering_train_config(cfg.seed));
    const auto& pernn = ex.of(Variant::pernn);
    const auto& penn = ex.of(Variant::penn);
    const auto& fcnn = ex.of(Variant::fcnn);
    t[0].wins += pernn.test_mae <= fcnn.test_mae;
    t[1].wins += pernn.driving.avg_abs_jerk < fcnn.driving.avg_abs_jerk;
    t[2].wins += penn.driving.avg_distance < pernn.driving.avg_distance;
    std::ostringstream os;
    os.precision(4);
    os << " [seed " << s << ": MAE " << pernn.test_mae << "/" << fcnn.test_mae << " jerk " << pernn.driving.avg_abs_jerk
       << "/" << fcnn.driving.avg_abs_jerk << " dist PENN " << penn.driving.avg_distance << " PERNN "
       << pernn.driving.avg_distance << "]";
    per_seed += os.str();
  }
  const double secs = seconds_since(t0);
  return {all_majority(t) && secs < kDrivingSeconds, tally_text(t) + ";" + per_seed + "; " + fmt("%.0f s", secs)};
}

Outcome metric_sanity() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(8, "metrics");
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(300), b(7), c(5);
  for (auto& x : a) x = g(rng);
  for (auto& x : b) x = g(rng);
  for (auto& x : c) x = 0.7 + 1.5 * g(rng);
  const double mmd_same = metrics::mmd(a, a), w_same = metrics::wasserstein_1d(a, a), kl_same = metrics::kl_divergence(a, a);

  // Equal sizes: Wasserstein is the mean gap between sorted samples.
  std::vector<double> p(b.begin(), b.begin() + 5), q = c;
  std::sort(p.begin(), p.end());
  std::sort(q.begin(), q.end());
  double w_want = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) w_want += std::abs(p[i] - q[i]) / static_cast<double>(p.size());
  const double w_err = std::abs(metrics::wasserstein_1d(std::span(b).first(5), c) - w_want);

  // MAE and R^2 by direct loops.
  double mae_want = 0.0, mean = 0.0, ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < 5; ++i) mean += c[i] / 5.0;
  for (std::size_t i = 0; i < 5; ++i) {
    mae_want += std::abs(b[i] - c[i]) / 5.0;
    ss_res += (b[i] - c[i]) * (b[i] - c[i]);
    ss_tot += (c[i] - mean) * (c[i] - mean);
  }
  const double mae_err = std::abs(metrics::mae(std::span(b).first(5), c) - mae_want);
  const double r2_err = std::abs(metrics::r2_score(std::span(b).first(5), c) - (1.0 - ss_res / ss_tot));

  // Two-bin KL on a hand-sized case: p = (3/4, 1/4), q = (1/4, 3/4).
  const std::vector<double> ka{0.0, 0.0, 0.0, 1.0}, kb{0.0, 1.0, 1.0, 1.0};
  const double kl_want = 0.75 * std::log(3.0) + 0.25 * std::log(1.0 / 3.0);
  const double kl_err = std::abs(metrics::kl_divergence(ka, kb, 2) - kl_want);
  const double secs = seconds_since(t0);

  Outcome o;
  o.pass = mmd_same <= kIdenticalMmd && w_same == 0.0 && kl_same <= kIdenticalKl && w_err <= kMetricOracleTol &&
           mae_err <= kMetricOracleTol && r2_err <= kMetricOracleTol && kl_err <= 1e-8 && secs < kMetricSeconds;
  o.detail = "identical: MMD " + fmt("%.1e", mmd_same) + " W " + fmt("%.1e", w_same) + " KL " + fmt("%.1e", kl_same) +
             "; oracle errors W " + fmt("%.1e", w_err) + " MAE " + fmt("%.1e", mae_err) + " R2 " + fmt("%.1e", r2_err) +
             " KL " + fmt("%.1e", kl_err);
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files[e.path().filename().string()] = app::read_file(e.path().string());
  return files;
}

void run_pipeline(const std::string& ini, const fs::path& out, bool gapfill) {
  app::RunConfig cfg = app::parse_config(ini);
  cfg.out_dir = out.string();
  app::cmd_gen_data(cfg);
  for (const char* v : {"pernn", "fcnn"}) {
    cfg.variant = blocks::variant_from_string(v);
    app::cmd_train(cfg);
    app::cmd_evaluate(cfg, (out / app::files::model(cfg.variant)).string());
    if (gapfill) app::cmd_gapfill(cfg, (out / app::files::model(cfg.variant)).string());
  }
  if (!gapfill) app::cmd_evaluate(cfg, app::kExpertModel);
  app::write_json((out / "gradcheck.json").string(), app::to_json(app::run_gradcheck(cfg.seed)));
}

Outcome determinism() {
  const std::string steering_ini =
      "[run]\ndomain = steering\nseed = 21\n[steering]\ntrain_tracks = 2\ndirt_tracks = 1\nroad_test_tracks = 1\n"
      "episodes_per_track = 1\nmax_steps = 1500\n[train]\nphase1_epochs = 5\nphase2_epochs = 5\nsingle_epochs = 5\n";
  const std::string nee_ini =
      "[run]\ndomain = nee\nseed = 22\n[nee]\ntrain_days = 20\ntest_days = 5\nnoise_sigma = 0.3\n"
      "[train]\nphase1_epochs = 10\nphase2_epochs = 10\nsingle_epochs = 10\n";
  const fs::path root = fs::temp_directory_path() / "pernn_acceptance_determinism";
  fs::remove_all(root);
  std::size_t compared = 0;
  std::string differing;
  for (const auto& [name, ini, gap] : {std::tuple{"steering", steering_ini, false}, std::tuple{"nee", nee_ini, true}}) {
    const fs::path a = root / name / "a", b = root / name / "b";
    fs::create_directories(a);
    fs::create_directories(b);
    run_pipeline(ini, a, gap);
    run_pipeline(ini, b, gap);
    const auto sa = snapshot(a), sb = snapshot(b);
    if (sa.size() != sb.size()) differing += std::string(" ") + name + ":file-count";
    for (const auto& [f, bytes] : sa) {
      ++compared;
      const auto it = sb.find(f);
      if (it == sb.end() || it->second != bytes) differing += std::string(" ") + name + "/" + f;
    }
  }
  fs::remove_all(root);
  Outcome o;
  o.pass = differing.empty() && compared > 0;
  o.detail = std::to_string(compared) + " files compared across reruns";
  if (!differing.empty()) o.detail += ", differing:" + differing;
  return o;
}

Outcome finite_difference_target() {
  std::vector<nee::FluxRecord> s(2);
  s[0].time = nee::make_timestamp(2012, 1, 1);
  s[1].time = s[0].time + static_cast<nee::Timestamp>(nee::kStep);
  for (auto& r : s) {
    r.tair = 10.0;
    r.rh = 50.0;
  }
  s[0].nee = 2.0;
  s[1].nee = 3.8;
  const auto fd = nee::finite_diff_targets(s);
  const double got = fd.empty() ? std::numeric_limits<double>::quiet_NaN() : fd[0].dnee_dt;
  // 3.8 is not representable, so the quotient may sit a couple of ulp from 0.001.
  const double ulp = std::nextafter(0.001, 1.0) - 0.001;
  const double off = std::abs(got - 0.001) / ulp;
  return {fd.size() == 1 && off <= 2.0, "dNEE/dt = " + fmt("%.17g", got) + " (" + fmt("%.0f", off) + " ulp from 0.001)"};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> c{
      {1, {"gradient correctness", gradient_correctness}},
      {2, {"physics-block exactness", physics_exactness}},
      {3, {"residual-gradient pathway", residual_pathway}},
      {4, {"heuristic labeler oracle", heuristic_oracle}},
      {5, {"NEE oracle recovery", nee_oracle_recovery}},
      {6, {"noisy NEE ordering", nee_ordering}},
      {7, {"driving ordering", driving_ordering}},
      {8, {"metric suite sanity", metric_sanity}},
      {9, {"determinism", determinism}},
      {10, {"finite-difference target", finite_difference_target}},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [id, _] : criteria()) selected.push_back(id);

  int failures = 0;
  for (int id : selected) {
    const auto it = criteria().find(id);
    if (it == criteria().end()) {
      std::printf("criterion %d: unknown\n", id);
      return 2;
    }
    Outcome o;
    try {
      o = it->second.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", it->second.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
