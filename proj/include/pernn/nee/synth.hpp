#pragma once

#include <cstdint>
#include <vector>

#include "pernn/nee/flux.hpp"

namespace pernn::nee {

struct SynthConfig {
  int days = 60;
  Timestamp start = 1325376000;  // 2012-01-01T00:00:00Z
  RespirationParams params;
  // Relative annual modulation of the base rate and of E0 (0 = constant).
  double rb_seasonal_amplitude = 0.0;
  double e0_seasonal_amplitude = 0.0;
  DiurnalTempModel diurnal;
  double mean_temp = 10.0;            // degC
  double seasonal_temp_amplitude = 8.0;  // degC, coldest mid-January
  // Ornstein-Uhlenbeck weather anomaly added to Tair.
  double anomaly_sigma = 0.0;  // stationary std, degC
  double anomaly_tau_hours = 24.0;
  // Respiration temperature = (1 - c) Tair + c Tsoil1.
  double soil_coupling = 0.0;
  double peak_rg = 800.0;  // W m-2 at the longest day
  double daylength_amplitude_hours = 4.3;
  double gpp_max = 15.0;
  double noise_sigma = 0.0;  // on recorded NEE
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct SynthSeries {
  std::vector<FluxRecord> records;      // NEE with measurement noise
  std::vector<double> nee_truth;        // noise free
  std::vector<RespirationParams> params;  // generating parameters per record
  std::vector<double> dT_dt;            // slope used to step Tair, degC/s
};

SynthSeries synth_flux_generate(const SynthConfig& cfg);

double daylength_hours(const SynthConfig& cfg, int doy);
double peak_radiation(const SynthConfig& cfg, int doy);
// Global radiation from the clipped solar curve.
double solar_rg(const SynthConfig& cfg, Timestamp t);
// Fraction of the day with Rg below the night threshold, from the solar curve
// in closed form.
double expected_night_fraction(const SynthConfig& cfg, int doy);

}  // namespace pernn::nee
