#include "pernn/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pernn/errors.hpp"

namespace pernn::metrics {

namespace {

void require_sample(std::span<const double> s, const char* what) {
  if (s.empty()) throw ValidationError(std::string(what) + ": empty sample set");
  for (double v : s) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite sample");
  }
}

void require_pair(std::span<const double> pred, std::span<const double> truth, const char* what) {
  require_sample(pred, what);
  require_sample(truth, what);
  if (pred.size() != truth.size()) throw ValidationError(std::string(what) + ": length mismatch");
}

double kernel_sum(std::span<const double> x, std::span<const double> y, double inv2h2,
                  bool skip_diagonal) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (skip_diagonal && i == j) continue;
      const double d = x[i] - y[j];
      s += std::exp(-d * d * inv2h2);
    }
  }
  return s;
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double r2_score(std::span<const double> pred, std::span<const double> truth) {
  require_pair(pred, truth, "r2_score");
  if (truth.size() < 2) throw ValidationError("r2_score: need at least two samples");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw ValidationError("r2_score: truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

double median_heuristic_bandwidth(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pool(a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  if (pool.size() > kMedianSampleLimit) {
    std::sort(pool.begin(), pool.end());
    std::vector<double> sub;
    sub.reserve(kMedianSampleLimit);
    for (std::size_t k = 0; k < kMedianSampleLimit; ++k) {
      sub.push_back(pool[k * pool.size() / kMedianSampleLimit]);
    }
    pool = std::move(sub);
  }
  std::vector<double> dists;
  dists.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) dists.push_back(std::abs(pool[i] - pool[j]));
  }
  if (dists.empty()) return 1.0;
  // Lower median for an even count keeps the value an observed distance.
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>((dists.size() - 1) / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double mmd(std::span<const double> a, std::span<const double> b) {
  require_sample(a, "mmd");
  require_sample(b, "mmd");
  const double h = median_heuristic_bandwidth(a, b);
  const double inv2h2 = 1.0 / (2.0 * h * h);
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  const double kaa = a.size() > 1 ? kernel_sum(a, a, inv2h2, true) / (n * (n - 1.0)) : 0.0;
  const double kbb = b.size() > 1 ? kernel_sum(b, b, inv2h2, true) / (m * (m - 1.0)) : 0.0;
  const double kab = kernel_sum(a, b, inv2h2, false) / (n * m);
  return std::sqrt(std::max(0.0, kaa + kbb - 2.0 * kab));
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  require_sample(a, "wasserstein_1d");
  require_sample(b, "wasserstein_1d");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  if (x.size() == y.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / n;
  }
  // Walk the merged quantile breakpoints i/n and j/m. Breakpoints are
  // compared as i*m vs j*n in exact integer arithmetic.
  double total = 0.0;
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < x.size() && j < y.size()) {
    const auto next_i = static_cast<unsigned long long>(i + 1) * y.size();
    const auto next_j = static_cast<unsigned long long>(j + 1) * x.size();
    const double u_next = next_i <= next_j ? static_cast<double>(i + 1) / n
                                           : static_cast<double>(j + 1) / m;
    total += (u_next - u) * std::abs(x[i] - y[j]);
    u = u_next;
    if (next_i <= next_j) ++i;
    if (next_j <= next_i) ++j;
  }
  return total;
}

double kl_divergence(std::span<const double> a, std::span<const double> b, int bins) {
  require_sample(a, "kl_divergence");
  require_sample(b, "kl_divergence");
  if (bins < 2) throw ValidationError("kl_divergence: bins must be at least 2");
  double lo = a[0], hi = a[0];
  for (auto s : {a, b}) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::vector<double> ca(static_cast<std::size_t>(bins), 0.0), cb(ca);
  const double width = (hi - lo) / bins;
  auto bin_of = [&](double v) {
    if (width <= 0.0) return std::size_t{0};
    auto k = static_cast<long>(std::floor((v - lo) / width));
    return static_cast<std::size_t>(std::clamp(k, 0L, static_cast<long>(bins) - 1));
  };
  for (double v : a) ca[bin_of(v)] += 1.0;
  for (double v : b) cb[bin_of(v)] += 1.0;
  const double norm = 1.0 + bins * kKlSmoothing;
  double kl = 0.0;
  for (std::size_t k = 0; k < ca.size(); ++k) {
    const double p = (ca[k] / static_cast<double>(a.size()) + kKlSmoothing) / norm;
    const double q = (cb[k] / static_cast<double>(b.size()) + kKlSmoothing) / norm;
    kl += p * std::log(p / q);
  }
  return std::max(0.0, kl);
}

double mean_abs(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean_abs: empty input");
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s / static_cast<double>(values.size());
}

}  // namespace pernn::metrics
