#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pernn/nee/flux.hpp"

namespace pernn::nee {

struct LloydTaylorFit {
  RespirationParams params;
  double sse = 0.0;
  int iterations = 0;
};

// Damped Gauss-Newton (Levenberg-Marquardt) fit of reco to (tair, nee) pairs,
// best of several E0 starts. Parameters are clamped after every step. Returns
// nullopt when E0 is unidentifiable (no spread in Tair).
std::optional<LloydTaylorFit> fit_lloyd_taylor(std::span<const double> tair, std::span<const double> nee,
                                               std::span<const double> e0_starts = {},
                                               int max_iterations = 200);

struct WindowFitConfig {
  int window_days = 15;
  int step_days = 5;
  std::size_t min_records = 30;
  int max_iterations = 200;
  std::vector<double> e0_starts{100.0, 200.0, 300.0};
};

struct WindowEstimate {
  Timestamp begin = 0;  // records in [begin, end) take these parameters
  Timestamp end = 0;
  RespirationParams params;
  std::size_t records = 0;  // night records in the surrounding window
  bool flagged = false;     // underpopulated or degenerate; params carried over
};

struct WindowedParams {
  std::vector<WindowEstimate> windows;

  // Piecewise-constant lookup; times outside the covered range take the
  // nearest window.
  RespirationParams at(Timestamp t) const;
  std::vector<RespirationParams> assign(std::span<const FluxRecord> series) const;
};

// One fit per step over the surrounding window of night records with NEE.
// Flagged windows carry the previous estimate forward; leading flagged windows
// take the first valid one. ValidationError when no window can be fitted.
WindowedParams estimate_params_windowed(std::span<const FluxRecord> records, const WindowFitConfig& cfg = {});

}  // namespace pernn::nee
