#include "pernn/nee/flux.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "pernn/errors.hpp"
#include "pernn/text.hpp"

namespace pernn::nee {

namespace {

using namespace std::chrono;

constexpr std::int64_t kStepSeconds = static_cast<std::int64_t>(kStep);

year_month_day civil(Timestamp t) {
  return year_month_day{floor<days>(sys_seconds{seconds{t}})};
}

Timestamp day_floor(Timestamp t) {
  return floor<days>(sys_seconds{seconds{t}}).time_since_epoch().count() * 86400;
}

void require_domain(double tair) {
  if (!(tair > kT0)) throw DomainError("tair", "air temperature must exceed T0");
}

}  // namespace

Timestamp make_timestamp(int year, int month, int day, int hour, int minute) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date");
  return sys_days{ymd}.time_since_epoch().count() * 86400 + hour * 3600 + minute * 60;
}

Timestamp parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int used = 0;
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &used);
  if (n < 7 || (sep != 'T' && sep != ' ')) throw ValidationError("bad timestamp '" + text + "'");
  std::string_view rest(text.c_str() + used);
  if (rest != "" && rest != "Z" && rest != "+00:00") {
    throw ValidationError("timestamp must be UTC: '" + text + "'");
  }
  if (h > 23 || mi > 59 || s > 59) throw ValidationError("bad timestamp '" + text + "'");
  try {
    return make_timestamp(y, mo, d, h, mi) + s;
  } catch (const ValidationError&) {
    throw ValidationError("bad timestamp '" + text + "'");
  }
}

std::string format_timestamp(Timestamp t) {
  const auto ymd = civil(t);
  const Timestamp sod = t - day_floor(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(sod / 3600), static_cast<int>(sod / 60 % 60), static_cast<int>(sod % 60));
  return buf;
}

int day_of_year(Timestamp t) {
  const auto ymd = civil(t);
  const sys_days jan1{ymd.year() / January / 1};
  return static_cast<int>((sys_days{ymd} - jan1).count()) + 1;
}

int month_of(Timestamp t) { return static_cast<int>(static_cast<unsigned>(civil(t).month())); }

double hour_of_day(Timestamp t) { return static_cast<double>(t - day_floor(t)) / 3600.0; }

void validate(const RespirationParams& p) {
  if (!(p.e0 >= kE0Min && p.e0 <= kE0Max)) throw ValidationError("E0 outside [50, 400]");
  if (!(p.rb > 0.0) || !std::isfinite(p.rb)) throw ValidationError("base respiration must be positive");
}

double reco(const RespirationParams& p, double tair) {
  require_domain(tair);
  return p.rb * std::exp(p.e0 * (1.0 / (kTref - kT0) - 1.0 / (tair - kT0)));
}

double dreco_dT(const RespirationParams& p, double tair) {
  const double r = reco(p, tair);
  const double gap = tair - kT0;
  return p.e0 / (gap * gap) * r;
}

double diurnal_dT_dt(const DiurnalTempModel& m, double t) {
  return std::numbers::pi * m.amplitude / m.t_day * std::sin(2.0 * std::numbers::pi * (t - m.t_zero) / m.t_day);
}

double nee_ode_rhs(const RespirationParams& p, double tair, double dT_dt) { return dreco_dT(p, tair) * dT_dt; }

double forecast_next(double nee_t, double dnee_dt, double dt) { return nee_t + dnee_dt * dt; }

std::vector<DailyDiurnalFit> fit_diurnal_daily(std::span<const FluxRecord> series, std::size_t min_records) {
  std::vector<DailyDiurnalFit> out;
  const double w = 2.0 * std::numbers::pi / kDaySeconds;
  DiurnalTempModel last;
  std::size_t i = 0;
  while (i < series.size()) {
    const Timestamp day = day_floor(series[i].time);
    std::size_t j = i;
    // Normal equations for Tair ~ a + b sin(wt) + c cos(wt).
    std::array<double, 9> ata{};
    std::array<double, 3> aty{};
    for (; j < series.size() && day_floor(series[j].time) == day; ++j) {
      const double t = static_cast<double>(series[j].time - day);
      const std::array<double, 3> row{1.0, std::sin(w * t), std::cos(w * t)};
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) ata[r * 3 + c] += row[r] * row[c];
        aty[r] += row[r] * series[j].tair;
      }
    }
    DailyDiurnalFit fit{day, last, true};
    if (j - i >= min_records) {
      // Cramer's rule on the 3x3 system.
      auto det3 = [](const std::array<double, 9>& m) {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
      };
      const double det = det3(ata);
      if (std::abs(det) > 1e-9) {
        std::array<double, 3> coef{};
        for (int k = 0; k < 3; ++k) {
          auto m = ata;
          for (int r = 0; r < 3; ++r) m[r * 3 + k] = aty[r];
          coef[k] = det3(m) / det;
        }
        const double b = coef[1], c = coef[2];
        DiurnalTempModel m;
        m.amplitude = 2.0 * std::hypot(b, c);
        double phase = std::atan2(-b, -c);
        if (phase < 0.0) phase += 2.0 * std::numbers::pi;
        m.t_zero = phase / w;
        fit = {day, m, false};
        last = m;
      }
    }
    out.push_back(fit);
    i = j;
  }
  return out;
}

std::vector<FiniteDiffTarget> finite_diff_targets(std::span<const FluxRecord> series) {
  std::vector<FiniteDiffTarget> out;
  if (series.size() < 2) return out;
  out.reserve(series.size() - 1);
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    if (series[i + 1].time - series[i].time != kStepSeconds) continue;
    FiniteDiffTarget f;
    f.index = i;
    f.dnee_dt = (series[i + 1].nee - series[i].nee) / kStep;
    f.dT_dt = (series[i + 1].tair - series[i].tair) / kStep;
    out.push_back(f);
  }
  return out;
}

bool is_night(const FluxRecord& r) { return r.rg < kNightRg; }

std::vector<FluxRecord> night_filter(std::span<const FluxRecord> series) {
  std::vector<FluxRecord> out;
  std::copy_if(series.begin(), series.end(), std::back_inserter(out), is_night);
  return out;
}

void validate_series(std::span<const FluxRecord> series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& r = series[i];
    const std::string where = " at " + format_timestamp(r.time);
    if (r.time % kStepSeconds != 0) throw ValidationError("timestamp off the 30-minute grid" + where);
    if (i > 0 && r.time <= series[i - 1].time) throw ValidationError("timestamps must strictly increase" + where);
    if (!(r.rh >= 0.0 && r.rh <= 100.0)) throw ValidationError("RH outside [0, 100]" + where);
    if (!(r.rg >= 0.0)) throw ValidationError("Rg must be non-negative" + where);
    for (double v : {r.h, r.tau, r.vpd, r.ustar, r.tsoil1, r.tsoil2, r.tair}) {
      if (!std::isfinite(v)) throw ValidationError("non-finite feature" + where);
    }
  }
}

namespace {

constexpr std::array<const char*, 10> kChannels{"NEE", "H", "Tau", "RH", "VPD", "Rg", "Ustar", "Tsoil1", "Tsoil2", "Tair"};

std::array<double*, 10> fields(FluxRecord& r) {
  return {&r.nee, &r.h, &r.tau, &r.rh, &r.vpd, &r.rg, &r.ustar, &r.tsoil1, &r.tsoil2, &r.tair};
}

std::string cell(double v) { return std::isnan(v) ? std::string() : text::format_double(v); }

}  // namespace

void write_flux_csv(const std::string& path, std::span<const FluxRecord> series) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f << "timestamp";
  for (const char* c : kChannels) f << ',' << c;
  f << '\n';
  for (FluxRecord r : series) {
    f << format_timestamp(r.time);
    for (double* v : fields(r)) f << ',' << cell(*v);
    f << '\n';
  }
  if (!f) throw ValidationError("write failed for " + path);
}

FluxReadResult read_flux_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!text::next_data_line(f, line, lineno)) throw ValidationError(path + ": empty file");
  const auto header = text::split(text::trim(line));
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[std::string(text::trim(header[i]))] = i;
  auto find = [&](std::string_view name) {
    const auto it = column.find(name);
    if (it == column.end()) throw ValidationError(path + ": missing column " + std::string(name));
    return it->second;
  };
  const std::size_t ts_col = find("timestamp");
  std::array<std::size_t, 10> cols{};
  for (std::size_t k = 0; k < kChannels.size(); ++k) cols[k] = find(kChannels[k]);

  FluxReadResult out;
  while (text::next_data_line(f, line, lineno)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto cells = text::split(trimmed);
    if (cells.size() != header.size()) {
      throw ValidationError(path + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields");
    }
    FluxRecord r;
    r.time = parse_timestamp(std::string(text::trim(cells[ts_col])));
    bool complete = true;
    auto dst = fields(r);
    for (std::size_t k = 0; k < kChannels.size(); ++k) {
      const auto c = text::trim(cells[cols[k]]);
      if (c.empty() || c == "NaN" || c == "nan" || c == "NA") {
        *dst[k] = std::numeric_limits<double>::quiet_NaN();
        if (k != 0) complete = false;
        continue;
      }
      const auto v = text::parse_double(c);
      if (!v) throw ValidationError(path + " line " + std::to_string(lineno) + ": bad number in " + kChannels[k]);
      *dst[k] = *v;
    }
    if (complete) {
      out.records.push_back(r);
    } else {
      ++out.dropped;
    }
  }
  validate_series(out.records);
  return out;
}

}  // namespace pernn::nee
