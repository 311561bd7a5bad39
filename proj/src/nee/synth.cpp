#include "pernn/nee/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"

namespace pernn::nee {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kYearDays = 365.0;

double saturation_hpa(double t) { return 6.112 * std::exp(17.67 * t / (t + 243.5)); }

// Ornstein-Uhlenbeck process sampled on the record grid.
class OuProcess {
 public:
  OuProcess(double sigma, double tau_hours, std::uint64_t seed, std::string_view stream)
      : sigma_(sigma), phi_(std::exp(-kStep / (tau_hours * 3600.0))), rng_(make_rng(seed, stream)) {
    value_ = sigma_ > 0.0 ? sigma_ * normal_(rng_) : 0.0;
  }
  double value() const { return value_; }
  void advance() {
    if (sigma_ > 0.0) value_ = phi_ * value_ + sigma_ * std::sqrt(1.0 - phi_ * phi_) * normal_(rng_);
  }

 private:
  double sigma_;
  double phi_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double value_ = 0.0;
};

// Days since January 1 of the start year, continuous.
double season_day(const SynthConfig& cfg, Timestamp t) {
  const Timestamp year_start = cfg.start - static_cast<Timestamp>(day_of_year(cfg.start) - 1) * 86400 -
                               (cfg.start % 86400 + 86400) % 86400;
  return static_cast<double>(t - year_start) / 86400.0;
}

double seasonal_temp(const SynthConfig& cfg, double d) {
  return cfg.mean_temp - cfg.seasonal_temp_amplitude * std::cos(kTwoPi * (d - 15.0) / kYearDays);
}

double seasonal_slope(const SynthConfig& cfg, double d) {
  return cfg.seasonal_temp_amplitude * kTwoPi / (kYearDays * 86400.0) * std::sin(kTwoPi * (d - 15.0) / kYearDays);
}

double seconds_of_day(Timestamp t) { return static_cast<double>((t % 86400 + 86400) % 86400); }

RespirationParams params_at(const SynthConfig& cfg, double d) {
  const double s = std::sin(kTwoPi * (d - 105.0) / kYearDays);
  RespirationParams p;
  p.rb = cfg.params.rb * (1.0 + cfg.rb_seasonal_amplitude * s);
  p.e0 = std::clamp(cfg.params.e0 * (1.0 + cfg.e0_seasonal_amplitude * s), kE0Min, kE0Max);
  return p;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.days < 1) throw ValidationError("days must be at least 1");
  validate(cfg.params);
  if (cfg.diurnal.amplitude < 0.0 || !(cfg.diurnal.t_day > 0.0)) throw ValidationError("bad diurnal model");
  if (cfg.noise_sigma < 0.0 || cfg.anomaly_sigma < 0.0) throw ValidationError("noise must be non-negative");
  if (cfg.soil_coupling < 0.0 || cfg.soil_coupling > 1.0) throw ValidationError("soil coupling outside [0, 1]");
  if (std::abs(cfg.rb_seasonal_amplitude) >= 1.0) throw ValidationError("base-rate modulation must stay below 1");
  if (cfg.daylength_amplitude_hours < 0.0 || cfg.daylength_amplitude_hours >= 12.0) {
    throw ValidationError("day length amplitude outside [0, 12)");
  }
  if (!(cfg.peak_rg > kNightRg)) throw ValidationError("peak radiation must exceed the night threshold");
  if (cfg.start % static_cast<Timestamp>(kStep) != 0) throw ValidationError("start off the 30-minute grid");
}

double daylength_hours(const SynthConfig& cfg, int doy) {
  return 12.0 + cfg.daylength_amplitude_hours * std::sin(kTwoPi * (doy - 80) / kYearDays);
}

double peak_radiation(const SynthConfig& cfg, int doy) {
  const double a = cfg.daylength_amplitude_hours;
  const double rel = a > 0.0 ? (daylength_hours(cfg, doy) - (12.0 - a)) / (2.0 * a) : 0.5;
  return cfg.peak_rg * (0.35 + 0.65 * rel);
}

double solar_rg(const SynthConfig& cfg, Timestamp t) {
  const int doy = day_of_year(t);
  const double len = daylength_hours(cfg, doy);
  const double rise = 12.0 - len / 2.0;
  const double h = hour_of_day(t);
  if (h <= rise || h >= rise + len) return 0.0;
  return peak_radiation(cfg, doy) * std::sin(std::numbers::pi * (h - rise) / len);
}

double expected_night_fraction(const SynthConfig& cfg, int doy) {
  const double len = daylength_hours(cfg, doy);
  const double bright = len * (1.0 - 2.0 * std::asin(kNightRg / peak_radiation(cfg, doy)) / std::numbers::pi);
  return 1.0 - bright / 24.0;
}

SynthSeries synth_flux_generate(const SynthConfig& cfg) {
  validate(cfg);
  const std::size_t n = static_cast<std::size_t>(cfg.days) * 48;
  SynthSeries out;
  out.records.reserve(n);
  out.nee_truth.reserve(n);
  out.params.reserve(n);
  out.dT_dt.reserve(n);

  Rng noise_rng = make_rng(cfg.seed, "synth/noise");
  Rng flux_rng = make_rng(cfg.seed, "synth/sensible");
  std::normal_distribution<double> normal(0.0, 1.0);
  OuProcess anomaly(cfg.anomaly_sigma, cfg.anomaly_tau_hours, cfg.seed, "synth/anomaly");
  OuProcess humidity(1.5, 48.0, cfg.seed, "synth/humidity");
  OuProcess wind(0.12, 6.0, cfg.seed, "synth/wind");

  const auto& m = cfg.diurnal;
  const double d0 = season_day(cfg, cfg.start);
  double base = seasonal_temp(cfg, d0) - m.amplitude / 2.0 * std::cos(kTwoPi * (seconds_of_day(cfg.start) - m.t_zero) / m.t_day);
  double tsoil1 = seasonal_temp(cfg, d0);
  double tsoil2 = tsoil1;

  for (std::size_t i = 0; i < n; ++i) {
    const Timestamp t = cfg.start + static_cast<Timestamp>(i) * static_cast<Timestamp>(kStep);
    const double d = season_day(cfg, t);
    const double tair = base + anomaly.value();

    FluxRecord r;
    r.time = t;
    r.tair = tair;
    r.tsoil1 = tsoil1;
    r.tsoil2 = tsoil2;
    r.rg = solar_rg(cfg, t);
    const double dew = seasonal_temp(cfg, d) - 3.0 + humidity.value();
    r.rh = std::clamp(100.0 * saturation_hpa(dew) / saturation_hpa(tair), 5.0, 100.0);
    r.vpd = saturation_hpa(tair) * (1.0 - r.rh / 100.0);
    r.ustar = std::max(0.05, 0.3 + 0.2 * r.rg / cfg.peak_rg + wind.value());
    r.tau = 1.2 * r.ustar * r.ustar;
    r.h = 0.35 * r.rg - 20.0 + 10.0 * normal(flux_rng);

    const RespirationParams p = params_at(cfg, d);
    const double t_resp = (1.0 - cfg.soil_coupling) * tair + cfg.soil_coupling * tsoil1;
    double truth = reco(p, t_resp);
    if (!is_night(r)) {
      const double season = 0.2 + 0.8 * (peak_radiation(cfg, day_of_year(t)) / cfg.peak_rg);
      truth -= cfg.gpp_max * season * r.rg / (r.rg + 400.0);
    }
    r.nee = truth + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * normal(noise_rng) : 0.0);

    const double slope = diurnal_dT_dt(m, seconds_of_day(t)) + seasonal_slope(cfg, d);
    out.records.push_back(r);
    out.nee_truth.push_back(truth);
    out.params.push_back(p);
    out.dT_dt.push_back(slope);

    base += slope * kStep;
    anomaly.advance();
    humidity.advance();
    wind.advance();
    tsoil1 += (tair - tsoil1) * kStep / (6.0 * 3600.0);
    tsoil2 += (tsoil1 - tsoil2) * kStep / (24.0 * 3600.0);
  }
  return out;
}

}  // namespace pernn::nee
