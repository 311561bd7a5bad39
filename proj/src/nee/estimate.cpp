#include "pernn/nee/estimate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "pernn/errors.hpp"

namespace pernn::nee {

namespace {

constexpr double kRbFloor = 1e-9;

RespirationParams clamp_params(RespirationParams p) {
  p.e0 = std::clamp(p.e0, kE0Min, kE0Max);
  p.rb = std::max(p.rb, kRbFloor);
  return p;
}

double sse_of(const RespirationParams& p, std::span<const double> g, std::span<const double> y) {
  const double a = 1.0 / (kTref - kT0);
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = p.rb * std::exp(p.e0 * (a - g[i])) - y[i];
    s += r * r;
  }
  return s;
}

LloydTaylorFit levenberg_marquardt(RespirationParams p, std::span<const double> g, std::span<const double> y,
                                   int max_iterations) {
  const double a = 1.0 / (kTref - kT0);
  double sse = sse_of(p, g, y);
  double lambda = 1e-3;
  int it = 0;
  for (; it < max_iterations; ++it) {
    // J^T J and J^T r for parameters (E0, rb).
    double h00 = 0, h01 = 0, h11 = 0, b0 = 0, b1 = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double e = std::exp(p.e0 * (a - g[i]));
      const double r = p.rb * e - y[i];
      const double j0 = p.rb * e * (a - g[i]);
      const double j1 = e;
      h00 += j0 * j0;
      h01 += j0 * j1;
      h11 += j1 * j1;
      b0 += j0 * r;
      b1 += j1 * r;
    }
    bool accepted = false;
    while (lambda < 1e16) {
      const double m00 = h00 * (1.0 + lambda), m11 = h11 * (1.0 + lambda);
      const double det = m00 * m11 - h01 * h01;
      if (!(std::abs(det) > 0.0)) {
        lambda *= 4.0;
        continue;
      }
      const double d0 = -(m11 * b0 - h01 * b1) / det;
      const double d1 = -(m00 * b1 - h01 * b0) / det;
      const RespirationParams trial = clamp_params({p.e0 + d0, p.rb + d1});
      const double trial_sse = sse_of(trial, g, y);
      if (trial_sse <= sse) {
        const bool small = std::abs(trial.e0 - p.e0) <= 1e-12 * (1.0 + p.e0) &&
                           std::abs(trial.rb - p.rb) <= 1e-12 * (1.0 + p.rb);
        p = trial;
        const double prev = sse;
        sse = trial_sse;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (small || prev - sse <= 1e-15 * (1.0 + prev)) return {p, sse, it + 1};
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
  }
  return {p, sse, it};
}

}  // namespace

std::optional<LloydTaylorFit> fit_lloyd_taylor(std::span<const double> tair, std::span<const double> nee,
                                               std::span<const double> e0_starts, int max_iterations) {
  if (tair.size() != nee.size()) throw ValidationError("fit_lloyd_taylor: length mismatch");
  if (tair.size() < 2) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(tair.begin(), tair.end());
  if (*hi - *lo < 1e-6) return std::nullopt;
  std::vector<double> g(tair.size());
  for (std::size_t i = 0; i < tair.size(); ++i) {
    if (!(tair[i] > kT0)) throw DomainError("tair", "air temperature must exceed T0");
    g[i] = 1.0 / (tair[i] - kT0);
  }
  static constexpr std::array<double, 3> kDefaultStarts{100.0, 200.0, 300.0};
  if (e0_starts.empty()) e0_starts = kDefaultStarts;

  const double a = 1.0 / (kTref - kT0);
  std::optional<LloydTaylorFit> best;
  for (double e0 : e0_starts) {
    // Base rate that is optimal for this E0.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double e = std::exp(e0 * (a - g[i]));
      num += e * nee[i];
      den += e * e;
    }
    const RespirationParams start = clamp_params({e0, num / den});
    const LloydTaylorFit fit = levenberg_marquardt(start, g, nee, max_iterations);
    if (!best || fit.sse < best->sse) best = fit;
  }
  return best;
}

RespirationParams WindowedParams::at(Timestamp t) const {
  if (windows.empty()) throw ValidationError("no parameter windows");
  auto it = std::upper_bound(windows.begin(), windows.end(), t,
                             [](Timestamp v, const WindowEstimate& w) { return v < w.end; });
  if (it == windows.end()) return windows.back().params;
  return it->params;
}

std::vector<RespirationParams> WindowedParams::assign(std::span<const FluxRecord> series) const {
  std::vector<RespirationParams> out;
  out.reserve(series.size());
  for (const auto& r : series) out.push_back(at(r.time));
  return out;
}

WindowedParams estimate_params_windowed(std::span<const FluxRecord> records, const WindowFitConfig& cfg) {
  if (cfg.step_days <= 0 || cfg.window_days < cfg.step_days) throw ValidationError("bad window configuration");
  WindowedParams out;
  std::vector<Timestamp> times;
  std::vector<double> tair, nee;
  for (const auto& r : records) {
    if (!is_night(r) || !r.has_nee()) continue;
    times.push_back(r.time);
    tair.push_back(r.tair);
    nee.push_back(r.nee);
  }
  if (records.empty()) return out;

  const Timestamp step = static_cast<Timestamp>(cfg.step_days) * 86400;
  const Timestamp margin = static_cast<Timestamp>(cfg.window_days - cfg.step_days) * 86400 / 2;
  const Timestamp origin = records.front().time - ((records.front().time % 86400) + 86400) % 86400;
  const Timestamp last = records.back().time;

  std::optional<RespirationParams> previous;
  std::size_t leading = 0;
  for (Timestamp begin = origin; begin <= last; begin += step) {
    WindowEstimate w;
    w.begin = begin;
    w.end = begin + step;
    const auto lo = std::lower_bound(times.begin(), times.end(), begin - margin) - times.begin();
    const auto hi = std::lower_bound(times.begin(), times.end(), w.end + margin) - times.begin();
    w.records = static_cast<std::size_t>(hi - lo);
    std::optional<LloydTaylorFit> fit;
    if (w.records >= cfg.min_records) {
      fit = fit_lloyd_taylor(std::span(tair).subspan(lo, hi - lo), std::span(nee).subspan(lo, hi - lo),
                             cfg.e0_starts, cfg.max_iterations);
    }
    if (fit) {
      w.params = fit->params;
      previous = fit->params;
    } else {
      w.flagged = true;
      if (previous) {
        w.params = *previous;
      } else {
        ++leading;
      }
    }
    out.windows.push_back(w);
  }
  if (!previous) throw ValidationError("no window has enough distinct night records for a respiration fit");
  const auto first_valid = out.windows[leading].params;
  for (std::size_t i = 0; i < leading; ++i) out.windows[i].params = first_valid;
  return out;
}

}  // namespace pernn::nee
