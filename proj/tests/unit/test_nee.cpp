#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "pernn/autodiff/gradcheck.hpp"
#include "pernn/errors.hpp"
#include "pernn/nee/estimate.hpp"
#include "pernn/nee/experiment.hpp"
#include "pernn/nee/flux.hpp"
#include "pernn/nee/models.hpp"
#include "pernn/nee/physics.hpp"
#include "pernn/nee/synth.hpp"

using namespace pernn;
using namespace pernn::nee;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pernn_test_nee";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<FluxRecord> ramp_series(std::size_t n, double tair0, double tair_step) {
  std::vector<FluxRecord> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].time = make_timestamp(2012, 1, 1) + static_cast<Timestamp>(i) * 1800;
    s[i].tair = tair0 + tair_step * static_cast<double>(i);
    s[i].nee = 1.0;
    s[i].rh = 80.0;
  }
  return s;
}

}  // namespace

TEST(Reco, ReferenceTemperatureGivesBaseRate) {
  EXPECT_DOUBLE_EQ(reco({200.0, 2.5}, kTref), 2.5);
  EXPECT_DOUBLE_EQ(reco({0.0, 1.7}, 31.0), 1.7);
}

TEST(Reco, ScalarCalculatorValue) {
  // 200 * (1/61.02 - 1/71.02) = 0.4615059..., 2 * exp(.) = 3.1729...
  const double arg = 200.0 * (1.0 / 61.02 - 1.0 / 71.02);
  EXPECT_NEAR(arg, 0.461506, 1e-6);
  EXPECT_NEAR(reco({200.0, 2.0}, 25.0), 2.0 * std::exp(arg), 1e-12);
  EXPECT_NEAR(reco({200.0, 2.0}, 25.0), 3.172922, 1e-6);
}

TEST(Reco, DomainErrorAtOrBelowT0) {
  try {
    reco({200.0, 2.0}, kT0);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.variable(), "tair");
  }
  EXPECT_THROW(dreco_dT({200.0, 2.0}, -60.0), DomainError);
  EXPECT_THROW(nee_ode_rhs({200.0, 2.0}, -50.0, 1.0), DomainError);
}

TEST(Reco, MonotoneIncreasing) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> e0(kE0Min, kE0Max), rb(0.1, 10.0), t(-40.0, 45.0);
  for (int i = 0; i < 1000; ++i) {
    const RespirationParams p{e0(rng), rb(rng)};
    const double a = t(rng), b = t(rng);
    if (a == b) continue;
    EXPECT_EQ(reco(p, std::min(a, b)) < reco(p, std::max(a, b)), true);
  }
}

TEST(DrecoDT, MatchesCentralDifference) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> e0(kE0Min, kE0Max), rb(0.1, 10.0), t(-30.0, 40.0);
  for (int i = 0; i < 1000; ++i) {
    const RespirationParams p{e0(rng), rb(rng)};
    const double x = t(rng);
    const double h = 1e-4;
    const double fd = (reco(p, x + h) - reco(p, x - h)) / (2 * h);
    EXPECT_LE(std::abs(dreco_dT(p, x) - fd) / std::abs(fd), 1e-6);
    EXPECT_GT(dreco_dT(p, x), 0.0);
  }
  EXPECT_EQ(dreco_dT({0.0, 2.0}, 10.0), 0.0);
}

TEST(Diurnal, SinusoidValues) {
  DiurnalTempModel m{8.0, kDaySeconds, 5 * 3600.0};
  EXPECT_NEAR(diurnal_dT_dt(m, m.t_zero), 0.0, 1e-18);
  EXPECT_NEAR(diurnal_dT_dt(m, m.t_zero + m.t_day / 4), std::numbers::pi * 8.0 / kDaySeconds, 1e-18);
}

TEST(Diurnal, ZeroMeanOverPeriod) {
  DiurnalTempModel m{6.5, kDaySeconds, 2 * 3600.0};
  // Composite Simpson over one period.
  const int n = 20000;
  const double h = m.t_day / n;
  double s = diurnal_dT_dt(m, m.t_zero) + diurnal_dT_dt(m, m.t_zero + m.t_day);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * diurnal_dT_dt(m, m.t_zero + k * h);
  EXPECT_NEAR(s * h / 3.0, 0.0, 1e-9);
}

TEST(OdeRhs, CompositionAndSign) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> e0(kE0Min, kE0Max), rb(0.1, 10.0), t(-30.0, 40.0), d(-1e-3, 1e-3);
  for (int i = 0; i < 200; ++i) {
    const RespirationParams p{e0(rng), rb(rng)};
    const double x = t(rng), dt = d(rng);
    EXPECT_NEAR(nee_ode_rhs(p, x, dt), dreco_dT(p, x) * dt, 1e-15);
    EXPECT_EQ(nee_ode_rhs(p, x, dt) > 0.0, dt > 0.0);
  }
  EXPECT_EQ(nee_ode_rhs({200.0, 2.0}, 10.0, 0.0), 0.0);
}

TEST(Forecast, EulerStep) {
  EXPECT_EQ(forecast_next(3.2, 0.0), 3.2);
  EXPECT_NEAR(forecast_next(5.0, 0.001), 6.8, 1e-12);
  EXPECT_NEAR(forecast_next(1.0, 0.002) - 1.0, 2.0 * (forecast_next(1.0, 0.001) - 1.0), 1e-12);
}

TEST(FiniteDiff, TwoPointPair) {
  auto s = ramp_series(2, 10.0, 0.0);
  s[0].nee = 2.0;
  s[1].nee = 3.8;
  const auto fd = finite_diff_targets(s);
  ASSERT_EQ(fd.size(), 1u);
  EXPECT_NEAR(fd[0].dnee_dt, 0.001, 2 * std::numeric_limits<double>::epsilon() * 0.001);
  EXPECT_EQ(fd[0].dT_dt, 0.0);
}

TEST(FiniteDiff, LinearRampAndConstantNee) {
  const auto s = ramp_series(10, 3.0, 1.0);
  const auto fd = finite_diff_targets(s);
  ASSERT_EQ(fd.size(), 9u);
  for (const auto& f : fd) {
    EXPECT_NEAR(f.dT_dt, 1.0 / 1800.0, 1e-15);
    EXPECT_EQ(f.dnee_dt, 0.0);
  }
}

TEST(FiniteDiff, PairAcrossGapIsExcluded) {
  auto s = ramp_series(6, 3.0, 1.0);
  s.erase(s.begin() + 3);
  const auto fd = finite_diff_targets(s);
  ASSERT_EQ(fd.size(), 3u);
  for (const auto& f : fd) EXPECT_NE(f.index, 2u);
}

TEST(NightFilter, IdempotentAndExact) {
  SynthConfig c;
  c.days = 5;
  const auto s = synth_flux_generate(c).records;
  const auto once = night_filter(s);
  const auto twice = night_filter(once);
  ASSERT_EQ(once.size(), twice.size());
  std::size_t expected = 0;
  for (const auto& r : s) expected += r.rg < 20.0 ? 1 : 0;
  EXPECT_EQ(once.size(), expected);
  for (const auto& r : once) EXPECT_LT(r.rg, 20.0);
}

TEST(Timestamps, RoundTripAndCalendar) {
  const Timestamp t = parse_timestamp("2016-02-29T13:30:00Z");
  EXPECT_EQ(format_timestamp(t), "2016-02-29T13:30:00Z");
  EXPECT_EQ(day_of_year(t), 60);
  EXPECT_EQ(month_of(t), 2);
  EXPECT_DOUBLE_EQ(hour_of_day(t), 13.5);
  EXPECT_EQ(parse_timestamp("2012-01-01 00:00:00"), 1325376000);
  EXPECT_THROW(parse_timestamp("2012-13-01T00:00:00Z"), ValidationError);
  EXPECT_THROW(parse_timestamp("2012-01-01T00:00:00+02:00"), ValidationError);
}

TEST(ValidateSeries, RejectsBadRecords) {
  auto s = ramp_series(4, 1.0, 0.0);
  EXPECT_NO_THROW(validate_series(s));
  auto off = s;
  off[2].time += 60;
  EXPECT_THROW(validate_series(off), ValidationError);
  auto back = s;
  std::swap(back[1], back[2]);
  EXPECT_THROW(validate_series(back), ValidationError);
  auto rh = s;
  rh[0].rh = 101.0;
  EXPECT_THROW(validate_series(rh), ValidationError);
  auto rg = s;
  rg[0].rg = -1.0;
  EXPECT_THROW(validate_series(rg), ValidationError);
}

TEST(FluxCsv, RoundTripWithMissingValues) {
  SynthConfig c;
  c.days = 2;
  c.noise_sigma = 0.3;
  c.seed = 4;
  auto s = synth_flux_generate(c).records;
  s[5].nee = std::numeric_limits<double>::quiet_NaN();
  const auto path = temp_file("roundtrip.csv").string();
  write_flux_csv(path, s);
  const auto back = read_flux_csv(path);
  ASSERT_EQ(back.records.size(), s.size());
  EXPECT_EQ(back.dropped, 0u);
  EXPECT_FALSE(back.records[5].has_nee());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back.records[i].time, s[i].time);
    EXPECT_EQ(back.records[i].tair, s[i].tair);
    EXPECT_EQ(back.records[i].vpd, s[i].vpd);
    if (s[i].has_nee()) EXPECT_EQ(back.records[i].nee, s[i].nee);
  }
}

TEST(FluxCsv, ReorderedColumnsAndDroppedRows) {
  const auto path = temp_file("reordered.csv").string();
  std::ofstream f(path);
  f << "Tair,timestamp,NEE,H,Tau,RH,VPD,Rg,Ustar,Tsoil1,Tsoil2\n";
  f << "5.5,2012-01-01T00:00:00Z,1.2,-10,0.1,80,1.5,0,0.3,4,3\n";
  f << "5.4,2012-01-01T00:30:00Z,NaN,-10,0.1,80,1.5,0,0.3,4,3\n";
  f << "5.3,2012-01-01T01:00:00Z,1.1,,0.1,80,1.5,0,0.3,4,3\n";
  f << "5.2,2012-01-01T01:30:00Z,,-10,0.1,80,1.5,0,0.3,4,3\n";
  f.close();
  const auto r = read_flux_csv(path);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.records[0].tair, 5.5);
  EXPECT_EQ(r.records[0].nee, 1.2);
  EXPECT_FALSE(r.records[1].has_nee());
  EXPECT_FALSE(r.records[2].has_nee());
}

TEST(FluxCsv, MissingColumnAndBadNumber) {
  const auto path = temp_file("bad.csv").string();
  {
    std::ofstream f(path);
    f << "timestamp,NEE,H,Tau,RH,VPD,Rg,Ustar,Tsoil1\n";
  }
  EXPECT_THROW(read_flux_csv(path), ValidationError);
  {
    std::ofstream f(path);
    f << "timestamp,NEE,H,Tau,RH,VPD,Rg,Ustar,Tsoil1,Tsoil2,Tair\n";
    f << "2012-01-01T00:00:00Z,1.2x,-10,0.1,80,1.5,0,0.3,4,3,5\n";
  }
  EXPECT_THROW(read_flux_csv(path), ValidationError);
  EXPECT_THROW(read_flux_csv(temp_file("does_not_exist.csv").string()), ValidationError);
}

TEST(Synth, DeterministicForSeed) {
  SynthConfig c;
  c.days = 3;
  c.noise_sigma = 0.5;
  c.anomaly_sigma = 1.0;
  c.seed = 9;
  const auto a = synth_flux_generate(c);
  const auto b = synth_flux_generate(c);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].nee, b.records[i].nee);
    EXPECT_EQ(a.records[i].tair, b.records[i].tair);
    EXPECT_EQ(a.records[i].ustar, b.records[i].ustar);
  }
  c.seed = 10;
  EXPECT_NE(synth_flux_generate(c).records[3].nee, a.records[3].nee);
}

TEST(Synth, FiniteDifferencesTrackOdeRhs) {
  SynthConfig c;
  c.days = 30;
  const auto s = synth_flux_generate(c);
  double num = 0.0, den = 0.0;
  for (const auto& f : finite_diff_targets(s.records)) {
    const auto i = f.index;
    if (!is_night(s.records[i]) || !is_night(s.records[i + 1])) continue;
    const double rhs = nee_ode_rhs(s.params[i], s.records[i].tair, s.dT_dt[i]);
    num += (f.dnee_dt - rhs) * (f.dnee_dt - rhs);
    den += rhs * rhs;
  }
  EXPECT_LE(std::sqrt(num / den), 0.02);
}

TEST(Synth, NightFractionMatchesSolarGeometry) {
  SynthConfig c;
  c.days = 365;
  const auto s = synth_flux_generate(c);
  std::size_t night = 0;
  for (const auto& r : s.records) night += is_night(r) ? 1 : 0;
  double expected = 0.0;
  for (int d = 0; d < c.days; ++d) expected += expected_night_fraction(c, day_of_year(c.start + d * 86400));
  expected /= c.days;
  EXPECT_NEAR(static_cast<double>(night) / static_cast<double>(s.records.size()), expected, 0.02);
}

TEST(Synth, RejectsBadConfig) {
  SynthConfig c;
  c.days = 0;
  EXPECT_THROW(synth_flux_generate(c), ValidationError);
  c.days = 1;
  c.params.e0 = 20.0;
  EXPECT_THROW(synth_flux_generate(c), ValidationError);
}

TEST(LloydTaylor, RecoversNoiseFreeParameters) {
  std::vector<double> t, y;
  for (int i = 0; i < 100; ++i) {
    t.push_back(-5.0 + 0.25 * i);
    y.push_back(reco({260.0, 1.4}, t.back()));
  }
  const auto fit = fit_lloyd_taylor(t, y);
  ASSERT_TRUE(fit.has_value());
  EXPECT_NEAR(fit->params.e0, 260.0, 1e-6);
  EXPECT_NEAR(fit->params.rb, 1.4, 1e-8);
}

TEST(LloydTaylor, IdenticalTemperaturesAreDegenerate) {
  std::vector<double> t(50, 12.0), y(50, 1.9);
  EXPECT_FALSE(fit_lloyd_taylor(t, y).has_value());
}

TEST(LloydTaylor, ClampsToValidRange) {
  std::vector<double> t, y;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 60; ++i) {
    t.push_back(5.0 + 0.1 * i);
    y.push_back(1.0 + n(rng));
  }
  const auto fit = fit_lloyd_taylor(t, y);
  ASSERT_TRUE(fit.has_value());
  EXPECT_NO_THROW(validate(fit->params));
}

TEST(Windowed, NoiseFreeRecoveryWithinOnePercent) {
  SynthConfig c;
  c.days = 60;
  const auto w = estimate_params_windowed(synth_flux_generate(c).records);
  ASSERT_EQ(w.windows.size(), 12u);
  for (const auto& win : w.windows) {
    EXPECT_FALSE(win.flagged);
    EXPECT_LE(std::abs(win.params.e0 - 200.0) / 200.0, 0.01);
    EXPECT_LE(std::abs(win.params.rb - 2.0) / 2.0, 0.01);
  }
}

TEST(Windowed, UnderpopulatedWindowCarriesForward) {
  SynthConfig c;
  c.days = 30;
  auto s = synth_flux_generate(c).records;
  // Blank out NEE from day 10 to day 25.
  for (std::size_t i = 10 * 48; i < 25 * 48; ++i) s[i].nee = std::numeric_limits<double>::quiet_NaN();
  const auto w = estimate_params_windowed(s);
  bool any_flagged = false;
  for (std::size_t k = 0; k < w.windows.size(); ++k) {
    EXPECT_NO_THROW(validate(w.windows[k].params));
    if (w.windows[k].flagged) {
      any_flagged = true;
      ASSERT_GT(k, 0u);
      EXPECT_EQ(w.windows[k].params.e0, w.windows[k - 1].params.e0);
    }
  }
  EXPECT_TRUE(any_flagged);
}

TEST(Windowed, PiecewiseConstantAssignment) {
  SynthConfig c;
  c.days = 20;
  const auto s = synth_flux_generate(c).records;
  const auto w = estimate_params_windowed(s);
  const auto per = w.assign(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto k = static_cast<std::size_t>((s[i].time - s.front().time) / (5 * 86400));
    EXPECT_EQ(per[i].e0, w.windows[k].params.e0);
  }
}

TEST(Windowed, AllWindowsDegenerateThrows) {
  auto s = ramp_series(30 * 48, 10.0, 0.0);
  EXPECT_THROW(estimate_params_windowed(s), ValidationError);
}

TEST(NeePhysicsBlock, ComposesStandaloneOperations) {
  const auto model = make_nee_model(blocks::Variant::penn, 3);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> e0(kE0Min, kE0Max), rb(0.1, 6.0), t(-20.0, 35.0), d(-5.0, 5.0), n(-3, 8);
  // Drive the physics block through a stand-alone tape with the same ops.
  ad::Tape tape;
  const ad::NodeId ie0 = tape.input("e0", 1), irb = tape.input("rb", 1), idt = tape.input("dt", 1);
  NeePhysics phys;
  const ad::NodeId parts[] = {ie0, irb, idt};
  const ad::NodeId rhs = phys.emit(tape, parts);
  const ad::NodeId target = phys.emit_target(tape, rhs);
  const int rows = 1000;
  ad::Bindings in;
  in["e0"].resize(rows, 1);
  in["rb"].resize(rows, 1);
  in["dt"].resize(rows, 1);
  in[kTairInput].resize(rows, 1);
  in[kNeeInput].resize(rows, 1);
  for (int i = 0; i < rows; ++i) {
    in["e0"](i, 0) = e0(rng);
    in["rb"](i, 0) = rb(rng);
    in["dt"](i, 0) = d(rng);
    in[kTairInput](i, 0) = t(rng);
    in[kNeeInput](i, 0) = n(rng);
  }
  const auto ev = ad::forward(tape, in);
  for (int i = 0; i < rows; ++i) {
    const RespirationParams p{in["e0"](i, 0), in["rb"](i, 0)};
    const double expect_rhs = nee_ode_rhs(p, in[kTairInput](i, 0), in["dt"](i, 0) * (1.0 / 3600.0));
    EXPECT_NEAR(ev.value(rhs)(i, 0), expect_rhs, 1e-15);
    EXPECT_NEAR(ev.value(target)(i, 0), forecast_next(in[kNeeInput](i, 0), expect_rhs), 1e-15);
  }
  EXPECT_GT(model.parameter_count(), 0);
}

TEST(NeePhysicsBlock, RejectsColdInput) {
  const auto model = make_nee_model(blocks::Variant::pernn, 1);
  ad::Bindings in;
  in[std::string(blocks::kFeatureInput)] = ad::Matrix::Zero(1, kNeeFeatureCount);
  in[kTairInput] = ad::Matrix::Constant(1, 1, -50.0);
  in[kNeeInput] = ad::Matrix::Constant(1, 1, 1.0);
  try {
    model.predict(in);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.variable(), "tair");
  }
}

TEST(NeePhysicsBlock, GradientCheck) {
  const auto model = make_nee_model(blocks::Variant::pernn, 5);
  SynthConfig c;
  c.days = 3;
  const auto s = synth_flux_generate(c).records;
  const auto samples = build_samples(s, estimate_params_windowed(s, {3, 1, 10, 200, {100, 200, 300}}));
  ASSERT_GT(samples.size(), 8u);
  auto copy = model;
  train::FeatureScaler scaler = train::FeatureScaler::fit(ad::Matrix::Random(10, kNeeFeatureCount));
  const auto d = nee_dataset(std::span(samples).first(8), scaler);
  ad::Tape& t = copy.tape();
  const ad::NodeId loss = t.sum(t.square(copy.node(blocks::out::target)));
  const auto report = ad::check_gradient(t, d.bindings(), loss);
  EXPECT_GT(report.coordinates, 0u);
  EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(NeeFeatures, EncodingLayout) {
  FluxRecord r;
  r.time = parse_timestamp("2012-07-15T06:00:00Z");
  r.tair = 17.0;
  const auto f = nee_features(r, 2.5);
  EXPECT_EQ(f[0], 17.0);
  EXPECT_EQ(f[9], 2.5);
  EXPECT_NEAR(f[10], 1.0, 1e-12);
  EXPECT_NEAR(f[11], 0.0, 1e-12);
  double months = 0, seasons = 0;
  for (int k = 14; k < 26; ++k) months += f[static_cast<std::size_t>(k)];
  for (int k = 26; k < 30; ++k) seasons += f[static_cast<std::size_t>(k)];
  EXPECT_EQ(months, 1.0);
  EXPECT_EQ(seasons, 1.0);
  EXPECT_EQ(f[20], 1.0);  // July
  EXPECT_EQ(f[28], 1.0);  // summer
}

TEST(NeeSamples, NightOnlyAndFinite) {
  SynthConfig c;
  c.days = 10;
  c.noise_sigma = 0.2;
  const auto s = synth_flux_generate(c).records;
  const auto samples = build_samples(s, estimate_params_windowed(s));
  ASSERT_FALSE(samples.empty());
  for (const auto& x : samples) {
    EXPECT_LT(s[x.index].rg, 20.0);
    EXPECT_LT(s[x.index + 1].rg, 20.0);
    EXPECT_TRUE(std::isfinite(x.nee_next) && std::isfinite(x.dnee_dt) && std::isfinite(x.dT_dt));
    EXPECT_NO_THROW(validate(x.params));
  }
}

TEST(NeeArchitecture, VariantsResolve) {
  for (auto v : {blocks::Variant::pernn, blocks::Variant::penn, blocks::Variant::fcnn, blocks::Variant::pinn}) {
    const auto m = make_nee_model(v, 2);
    EXPECT_EQ(m.physics() != nullptr, blocks::has_physics(v));
    EXPECT_EQ(m.has(blocks::out::residual), v == blocks::Variant::pernn);
  }
}

TEST(Gapfill, OracleFillerIsExact) {
  SynthConfig c;
  c.days = 40;
  const auto s = synth_flux_generate(c);
  std::vector<double> truth;
  for (const auto& r : s.records) truth.push_back(r.nee);
  for (GapScale scale : {GapScale::daily, GapScale::weekly}) {
    const auto r = gapfill_evaluate(s.records, oracle_filler(truth), scale, 3, 21);
    ASSERT_EQ(r.gaps.size(), 3u);
    EXPECT_LE(r.mae, 1e-9);
    EXPECT_NEAR(r.r2, 1.0, 1e-9);
  }
}

TEST(Gapfill, PersistenceMatchesIndependentLoop) {
  SynthConfig c;
  c.days = 40;
  c.noise_sigma = 0.1;
  const auto s = synth_flux_generate(c).records;
  const auto r = gapfill_evaluate(s, persistence_filler(), GapScale::weekly, 2, 5);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& g : r.gaps) {
    const double last = s[g.begin - 1].nee;
    for (std::size_t i = g.begin; i < g.end; ++i) {
      if (s[i].rg < 20.0) {
        sum += std::abs(s[i].nee - last);
        ++n;
      }
    }
  }
  ASSERT_EQ(n, r.points);
  EXPECT_NEAR(r.mae, sum / static_cast<double>(n), 1e-12);
}

TEST(Gapfill, FixedSeedFixedPlacement) {
  SynthConfig c;
  c.days = 60;
  const auto s = synth_flux_generate(c).records;
  const auto a = place_gaps(s, GapScale::daily, 5, 77);
  const auto b = place_gaps(s, GapScale::daily, 5, 77);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].begin, b[i].begin);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_GT(a[i].begin, a[i - 1].end);
  for (const auto& g : a) {
    EXPECT_LT(s[g.begin].rg, 20.0);
    EXPECT_LT(s[g.begin - 1].rg, 20.0);
  }
}

TEST(Gapfill, GapPastDataEndIsShortened) {
  SynthConfig c;
  c.days = 20;
  const auto s = synth_flux_generate(c).records;
  const auto gaps = place_gaps(s, GapScale::quarterly, 1, 3);
  ASSERT_EQ(gaps.size(), 1u);
  EXPECT_TRUE(gaps[0].shortened);
  EXPECT_EQ(gaps[0].end, s.size());
}

TEST(NeeTraining, OracleDatasetPhaseTwoShrinksResidual) {
  auto cfg = oracle_experiment_config(3);
  cfg.variants = {blocks::Variant::pernn};
  const auto tc = default_nee_train_config(3);
  SynthConfig synth = cfg.synth;
  synth.days = 30;
  const auto s = synth_flux_generate(synth).records;
  const auto samples = build_samples(s, estimate_params_windowed(s));
  auto model = make_nee_model(blocks::Variant::pernn, 4);
  const auto res = train_nee_model(model, samples, tc);
  ASSERT_FALSE(res.diverged);
  const auto p = predict_nee(model, samples);
  // Mean |residual| in NEE units per step against the target spread.
  double m = 0.0, v = 0.0;
  for (const auto& x : samples) m += x.nee_next / static_cast<double>(samples.size());
  for (const auto& x : samples) v += (x.nee_next - m) * (x.nee_next - m) / static_cast<double>(samples.size());
  double resid = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double phys = nee_ode_rhs({p.e0[i], p.rb[i]}, samples[i].tair, p.dT_dt[i]);
    resid += std::abs((p.dnee_dt[i] - phys) * kStep) / static_cast<double>(samples.size());
  }
  EXPECT_LT(resid, 0.1 * std::sqrt(v));
  double first2 = -1, last2 = 0;
  for (const auto& h : res.history) {
    if (h.phase != "phase2") continue;
    if (first2 < 0) first2 = h.loss;
    last2 = h.loss;
  }
  EXPECT_LE(last2, 0.5 * first2);
}
