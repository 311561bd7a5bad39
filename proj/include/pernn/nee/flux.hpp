#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pernn::nee {

inline constexpr double kTref = 15.0;     // degC
inline constexpr double kT0 = -46.02;     // degC
inline constexpr double kStep = 1800.0;   // s between records
inline constexpr double kDaySeconds = 86400.0;
inline constexpr double kNightRg = 20.0;  // W m-2
inline constexpr double kE0Min = 50.0;
inline constexpr double kE0Max = 400.0;

// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

Timestamp parse_timestamp(const std::string& text);
std::string format_timestamp(Timestamp t);
int day_of_year(Timestamp t);  // 1-based
int month_of(Timestamp t);     // 1..12
double hour_of_day(Timestamp t);
Timestamp make_timestamp(int year, int month, int day, int hour = 0, int minute = 0);

struct FluxRecord {
  Timestamp time = 0;
  double nee = std::numeric_limits<double>::quiet_NaN();  // NaN when missing
  double h = 0.0;
  double tau = 0.0;
  double rh = 0.0;
  double vpd = 0.0;
  double rg = 0.0;
  double ustar = 0.0;
  double tsoil1 = 0.0;
  double tsoil2 = 0.0;
  double tair = 0.0;

  bool has_nee() const { return nee == nee; }
};

struct RespirationParams {
  double e0 = 200.0;
  double rb = 2.0;
};

// Throws ValidationError outside E0 in [50, 400], rb > 0.
void validate(const RespirationParams& p);

struct DiurnalTempModel {
  double amplitude = 8.0;  // degC
  double t_day = kDaySeconds;
  double t_zero = 3.0 * 3600.0;  // s after midnight where the sinusoid crosses zero upwards
};

// rb * exp(E0 (1/(Tref - T0) - 1/(Tair - T0))). DomainError("tair") for
// Tair <= T0.
double reco(const RespirationParams& p, double tair);
double dreco_dT(const RespirationParams& p, double tair);
// pi * amplitude / t_day * sin(2 pi (t - t_zero) / t_day), degC/s.
double diurnal_dT_dt(const DiurnalTempModel& m, double t);
double nee_ode_rhs(const RespirationParams& p, double tair, double dT_dt);
double forecast_next(double nee_t, double dnee_dt, double dt = kStep);

// Per-day least-squares fit of Tair to mean - amplitude/2 cos(2 pi (t - t_zero) / t_day).
// Days with fewer than min_records records are flagged and get the previous
// day's model.
struct DailyDiurnalFit {
  Timestamp day_start = 0;
  DiurnalTempModel model;
  bool flagged = false;
};
std::vector<DailyDiurnalFit> fit_diurnal_daily(std::span<const FluxRecord> series, std::size_t min_records = 24);

struct FiniteDiffTarget {
  std::size_t index = 0;  // record t; the pair is (t, t + 1)
  double dnee_dt = 0.0;   // NaN if either NEE is missing
  double dT_dt = 0.0;
};

// Right-sided differences over consecutive on-grid pairs; pairs spanning a
// gap in the grid are skipped.
std::vector<FiniteDiffTarget> finite_diff_targets(std::span<const FluxRecord> series);

bool is_night(const FluxRecord& r);
std::vector<FluxRecord> night_filter(std::span<const FluxRecord> series);

// Throws ValidationError on off-grid or non-increasing timestamps or values
// outside RH [0, 100], Rg >= 0.
void validate_series(std::span<const FluxRecord> series);

// Columns: timestamp,NEE,H,Tau,RH,VPD,Rg,Ustar,Tsoil1,Tsoil2,Tair.
void write_flux_csv(const std::string& path, std::span<const FluxRecord> series);
// Accepts the columns in any order. Missing values: empty field or NaN. Rows
// with a missing feature channel are dropped; NEE may be missing.
struct FluxReadResult {
  std::vector<FluxRecord> records;
  std::size_t dropped = 0;
};
FluxReadResult read_flux_csv(const std::string& path);

}  // namespace pernn::nee
