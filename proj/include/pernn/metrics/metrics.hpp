#pragma once

#include <span>

namespace pernn::metrics {

double mae(std::span<const double> pred, std::span<const double> truth);
double mse(std::span<const double> pred, std::span<const double> truth);

// 1 - SS_res / SS_tot. Throws when truth has zero variance.
double r2_score(std::span<const double> pred, std::span<const double> truth);

// Unbiased Gaussian-kernel MMD^2 (diagonal terms excluded), clipped at zero
// and square-rooted. Bandwidth is the median pairwise distance of the pooled
// sample; pooled samples above kMedianSampleLimit points use an evenly
// strided subsample of the sorted pool for the median.
inline constexpr std::size_t kMedianSampleLimit = 1000;
double mmd(std::span<const double> a, std::span<const double> b);
double median_heuristic_bandwidth(std::span<const double> a, std::span<const double> b);

// Order-1 Wasserstein distance between the empirical distributions:
// integral over u in (0,1) of |F_a^-1(u) - F_b^-1(u)|.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

// Sum p log(p/q) over `bins` equal-width bins spanning the pooled range, with
// p_k = (c_k/n + eps) / (1 + bins * eps).
inline constexpr int kDefaultKlBins = 50;
inline constexpr double kKlSmoothing = 1e-10;
double kl_divergence(std::span<const double> a, std::span<const double> b,
                     int bins = kDefaultKlBins);

double mean_abs(std::span<const double> values);

}  // namespace pernn::metrics
