#include "pernn/steering/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"

namespace pernn::steering {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }
Vec2 left_normal(const Vec2& d) { return {-d.y(), d.x()}; }

}  // namespace

std::string to_string(TrackCategory c) {
  switch (c) {
    case TrackCategory::road: return "road";
    case TrackCategory::dirt: return "dirt";
    case TrackCategory::oval: return "oval";
  }
  return "?";
}

TrackCategory track_category_from_string(const std::string& s) {
  if (s == "road") return TrackCategory::road;
  if (s == "dirt") return TrackCategory::dirt;
  if (s == "oval") return TrackCategory::oval;
  throw ValidationError("unknown track category '" + s + "'");
}

// ---------------------------------------------------------------------------
// SegmentGrid

SegmentGrid::SegmentGrid(std::vector<std::pair<Vec2, Vec2>> segments, double cell)
    : segments_(std::move(segments)), cell_(cell) {
  if (segments_.empty()) return;
  Vec2 lo = segments_[0].first, hi = lo;
  for (const auto& [a, b] : segments_) {
    lo = lo.cwiseMin(a).cwiseMin(b);
    hi = hi.cwiseMax(a).cwiseMax(b);
  }
  origin_ = lo - Vec2(cell_, cell_);
  nx_ = static_cast<long>(std::floor((hi.x() - origin_.x()) / cell_)) + 2;
  ny_ = static_cast<long>(std::floor((hi.y() - origin_.y()) / cell_)) + 2;
  cells_.assign(static_cast<std::size_t>(nx_ * ny_), {});
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const auto& [a, b] = segments_[k];
    const Vec2 mn = a.cwiseMin(b), mx = a.cwiseMax(b);
    const long x0 = static_cast<long>(std::floor((mn.x() - origin_.x()) / cell_));
    const long x1 = static_cast<long>(std::floor((mx.x() - origin_.x()) / cell_));
    const long y0 = static_cast<long>(std::floor((mn.y() - origin_.y()) / cell_));
    const long y1 = static_cast<long>(std::floor((mx.y() - origin_.y()) / cell_));
    for (long ix = x0; ix <= x1; ++ix)
      for (long iy = y0; iy <= y1; ++iy)
        cells_[static_cast<std::size_t>(iy * nx_ + ix)].push_back(static_cast<std::uint32_t>(k));
  }
}

double SegmentGrid::raycast(const Vec2& o, const Vec2& d, double max_range) const {
  if (cells_.empty()) return max_range;
  long ix = static_cast<long>(std::floor((o.x() - origin_.x()) / cell_));
  long iy = static_cast<long>(std::floor((o.y() - origin_.y()) / cell_));
  if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) return max_range;

  const long sx = d.x() > 0 ? 1 : -1;
  const long sy = d.y() > 0 ? 1 : -1;
  const double inf = std::numeric_limits<double>::infinity();
  double tmax_x = d.x() != 0.0 ? ((ix + (sx > 0 ? 1 : 0)) * cell_ + origin_.x() - o.x()) / d.x() : inf;
  double tmax_y = d.y() != 0.0 ? ((iy + (sy > 0 ? 1 : 0)) * cell_ + origin_.y() - o.y()) / d.y() : inf;
  const double tdx = d.x() != 0.0 ? cell_ / std::abs(d.x()) : inf;
  const double tdy = d.y() != 0.0 ? cell_ / std::abs(d.y()) : inf;

  double best = max_range;
  while (true) {
    for (std::uint32_t k : cells_[static_cast<std::size_t>(iy * nx_ + ix)]) {
      const auto& [a, b] = segments_[k];
      const Vec2 e = b - a;
      const double den = cross(d, e);
      if (std::abs(den) < 1e-14) continue;
      const Vec2 w = a - o;
      const double t = cross(w, e) / den;
      const double u = cross(w, d) / den;
      if (t >= 0.0 && u >= 0.0 && u <= 1.0 && t < best) best = t;
    }
    const double t_exit = std::min(tmax_x, tmax_y);
    if (best <= t_exit || t_exit > max_range) break;
    if (tmax_x < tmax_y) {
      ix += sx;
      tmax_x += tdx;
    } else {
      iy += sy;
      tmax_y += tdy;
    }
    if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) break;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Track

Track Track::from_centerline(std::string id, TrackCategory category, std::vector<Vec2> points,
                             double half_width, bool closed, std::vector<double> curvature,
                             std::vector<double> elevation) {
  if (points.size() < 3) throw ValidationError("track needs at least three centerline samples");
  if (!(half_width > 0.0)) throw ValidationError("track half-width must be positive");
  Track t;
  t.id_ = std::move(id);
  t.category_ = category;
  t.half_width_ = half_width;
  t.closed_ = closed;
  t.points_ = std::move(points);
  const std::size_t n = t.points_.size();
  t.s_.resize(n);
  t.s_[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double ds = (t.points_[i] - t.points_[i - 1]).norm();
    if (ds > 1.0 + 1e-9 || ds <= 0.0) throw ValidationError("centerline spacing must lie in (0, 1] m");
    t.s_[i] = t.s_[i - 1] + ds;
  }
  t.length_ = t.s_[n - 1];
  if (closed) {
    const double ds = (t.points_[0] - t.points_[n - 1]).norm();
    if (ds > 1.0 + 1e-9 || ds <= 0.0) throw ValidationError("closing centerline gap must lie in (0, 1] m");
    t.length_ += ds;
  }

  auto neighbour = [&](std::size_t i, int step) -> const Vec2& {
    if (closed) return t.points_[(i + n + static_cast<std::size_t>(step + static_cast<int>(n))) % n];
    const long j = std::clamp(static_cast<long>(i) + step, 0L, static_cast<long>(n) - 1);
    return t.points_[static_cast<std::size_t>(j)];
  };

  if (curvature.empty()) {
    curvature.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!closed && (i == 0 || i + 1 == n)) continue;
      const Vec2 a = t.points_[i] - neighbour(i, -1);
      const Vec2 b = neighbour(i, 1) - t.points_[i];
      const double turn = std::atan2(cross(a, b), a.dot(b));
      curvature[i] = turn / (0.5 * (a.norm() + b.norm()));
    }
  }
  if (curvature.size() != n) throw ValidationError("curvature length mismatch");
  if (elevation.empty()) elevation.assign(n, 0.0);
  if (elevation.size() != n) throw ValidationError("elevation length mismatch");
  t.curvature_ = std::move(curvature);
  t.elevation_ = std::move(elevation);

  std::vector<Vec2> left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 tangent = (neighbour(i, 1) - neighbour(i, -1)).normalized();
    const Vec2 nrm = left_normal(tangent);
    left[i] = t.points_[i] + half_width * nrm;
    right[i] = t.points_[i] - half_width * nrm;
  }
  std::vector<std::pair<Vec2, Vec2>> segs;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    segs.emplace_back(left[i], left[i + 1]);
    segs.emplace_back(right[i], right[i + 1]);
  }
  if (closed) {
    segs.emplace_back(left[n - 1], left[0]);
    segs.emplace_back(right[n - 1], right[0]);
  }
  t.edges_ = SegmentGrid(std::move(segs), kGridCell);

  Vec2 lo = t.points_[0], hi = lo;
  for (const auto& p : t.points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  t.bucket_origin_ = lo;
  t.bx_ = static_cast<long>(std::floor((hi.x() - lo.x()) / kGridCell)) + 1;
  t.by_ = static_cast<long>(std::floor((hi.y() - lo.y()) / kGridCell)) + 1;
  t.buckets_.assign(static_cast<std::size_t>(t.bx_ * t.by_), {});
  for (std::size_t i = 0; i < n; ++i) {
    const long ix = static_cast<long>(std::floor((t.points_[i].x() - lo.x()) / kGridCell));
    const long iy = static_cast<long>(std::floor((t.points_[i].y() - lo.y()) / kGridCell));
    t.buckets_[static_cast<std::size_t>(iy * t.bx_ + ix)].push_back(static_cast<std::uint32_t>(i));
  }
  return t;
}

double Track::wrap(double s) const {
  if (!closed_) return std::clamp(s, 0.0, s_.back());
  double w = std::fmod(s, length_);
  if (w < 0.0) w += length_;
  return w;
}

std::size_t Track::locate(double s, double& frac) const {
  const double w = wrap(s);
  auto it = std::upper_bound(s_.begin(), s_.end(), w);
  std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
  const std::size_t n = s_.size();
  if (!closed_ && i + 1 >= n) i = n - 2;
  const double next_s = i + 1 < n ? s_[i + 1] : length_;
  frac = std::clamp((w - s_[i]) / (next_s - s_[i]), 0.0, 1.0);
  return i;
}

Vec2 Track::point_at(double s) const {
  double f = 0.0;
  const std::size_t i = locate(s, f);
  const Vec2& a = points_[i];
  const Vec2& b = points_[(i + 1) % points_.size()];
  return a + f * (b - a);
}

double Track::heading_at(double s) const {
  double f = 0.0;
  const std::size_t i = locate(s, f);
  const Vec2 d = points_[(i + 1) % points_.size()] - points_[i];
  return std::atan2(d.y(), d.x());
}

double Track::elevation_at(double s) const {
  double f = 0.0;
  const std::size_t i = locate(s, f);
  const double a = elevation_[i];
  const double b = elevation_[(i + 1) % elevation_.size()];
  return a + f * (b - a);
}

double Track::max_abs_curvature(double s_from, double distance) const {
  double f = 0.0;
  std::size_t i = locate(s_from, f);
  const auto count = static_cast<std::size_t>(std::ceil(distance / kSampleSpacing)) + 1;
  double best = 0.0;
  for (std::size_t k = 0; k <= count; ++k) {
    best = std::max(best, std::abs(curvature_[i]));
    if (i + 1 < points_.size()) {
      ++i;
    } else if (closed_) {
      i = 0;
    } else {
      break;
    }
  }
  return best;
}

double Track::tapered_curvature(double s_from, double distance) const {
  const std::size_t n = points_.size();
  auto gap = [&](std::size_t i) { return i + 1 < n ? s_[i + 1] - s_[i] : length_ - s_[i]; };
  double f = 0.0;
  std::size_t i = locate(s_from, f);
  double d = -f * gap(i);
  double best = 0.0;
  while (d < distance) {
    best = std::max(best, std::abs(curvature_[i]) * std::min(1.0, 1.0 - d / distance));
    if (i + 1 == n && !closed_) break;
    d += gap(i);
    i = (i + 1) % n;
  }
  return best;
}

double Track::forward_distance(double from, double to) const {
  if (!closed_) return to - from;
  return wrap(to - from);
}

Projection Track::project(const Vec2& p) const {
  const long cx = std::clamp(static_cast<long>(std::floor((p.x() - bucket_origin_.x()) / kGridCell)), 0L, bx_ - 1);
  const long cy = std::clamp(static_cast<long>(std::floor((p.y() - bucket_origin_.y()) / kGridCell)), 0L, by_ - 1);
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  const long max_ring = std::max(bx_, by_);
  for (long ring = 0; ring <= max_ring; ++ring) {
    for (long ix = cx - ring; ix <= cx + ring; ++ix) {
      for (long iy = cy - ring; iy <= cy + ring; ++iy) {
        if (std::max(std::abs(ix - cx), std::abs(iy - cy)) != ring) continue;
        if (ix < 0 || iy < 0 || ix >= bx_ || iy >= by_) continue;
        for (std::uint32_t k : buckets_[static_cast<std::size_t>(iy * bx_ + ix)]) {
          const double d2 = (points_[k] - p).squaredNorm();
          if (d2 < best_d2 || (d2 == best_d2 && k < best)) {
            best_d2 = d2;
            best = k;
          }
        }
      }
    }
    // Any unvisited sample lies at least `ring * cell` away.
    if (std::isfinite(best_d2) && ring * kGridCell >= std::sqrt(best_d2)) break;
  }

  const std::size_t n = points_.size();
  Projection out;
  double best_dist = std::numeric_limits<double>::infinity();
  auto try_segment = [&](std::size_t a_idx, std::size_t b_idx, double s_a) {
    const Vec2& a = points_[a_idx];
    const Vec2& b = points_[b_idx];
    const Vec2 e = b - a;
    const double len = e.norm();
    const double u = std::clamp((p - a).dot(e) / (len * len), 0.0, 1.0);
    const Vec2 foot = a + u * e;
    const double dist = (p - foot).norm();
    if (dist < best_dist) {
      best_dist = dist;
      const Vec2 tangent = e / len;
      out.s = wrap(s_a + u * len);
      out.lateral = cross(tangent, p - foot);
      out.heading = std::atan2(tangent.y(), tangent.x());
      out.index = a_idx;
    }
  };
  if (best + 1 < n) try_segment(best, best + 1, s_[best]);
  else if (closed_) try_segment(best, 0, s_[best]);
  if (best > 0) try_segment(best - 1, best, s_[best - 1]);
  else if (closed_) try_segment(n - 1, 0, s_[n - 1]);
  return out;
}

bool centerline_is_simple(const std::vector<Vec2>& points, const std::vector<double>& s, double length,
                          double clearance, double arc_gap) {
  if (points.empty()) return true;
  Vec2 lo = points[0], hi = lo;
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const long nx = static_cast<long>(std::floor((hi.x() - lo.x()) / clearance)) + 1;
  const long ny = static_cast<long>(std::floor((hi.y() - lo.y()) / clearance)) + 1;
  std::vector<std::vector<std::uint32_t>> cells(static_cast<std::size_t>(nx * ny));
  auto cell_of = [&](const Vec2& p) {
    return std::pair<long, long>{static_cast<long>(std::floor((p.x() - lo.x()) / clearance)),
                                 static_cast<long>(std::floor((p.y() - lo.y()) / clearance))};
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto [x, y] = cell_of(points[i]);
    cells[static_cast<std::size_t>(y * nx + x)].push_back(static_cast<std::uint32_t>(i));
  }
  const double c2 = clearance * clearance;
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto [x, y] = cell_of(points[i]);
    for (long ix = x - 1; ix <= x + 1; ++ix) {
      for (long iy = y - 1; iy <= y + 1; ++iy) {
        if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) continue;
        for (std::uint32_t j : cells[static_cast<std::size_t>(iy * nx + ix)]) {
          if (j <= i) continue;
          double gap = std::abs(s[j] - s[i]);
          gap = std::min(gap, length - gap);
          if (gap > arc_gap && (points[j] - points[i]).squaredNorm() < c2) return false;
        }
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

struct CategoryShape {
  int min_vertices;
  int max_vertices;
  double min_radius;
  double max_radius;
};

struct Sampled {
  std::vector<Vec2> points;
  std::vector<double> s;
  std::vector<double> curvature;
  double length = 0.0;
};

// Filleted closed polygon, starting at the end of the last corner arc.
bool fillet_polygon(const std::vector<Vec2>& v, std::vector<double> radius, double min_radius, Sampled& out) {
  const std::size_t n = v.size();
  std::vector<Vec2> din(n), dout(n);
  std::vector<double> phi(n), tlen(n), edge(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& prev = v[(i + n - 1) % n];
    const Vec2& next = v[(i + 1) % n];
    din[i] = (v[i] - prev).normalized();
    dout[i] = (next - v[i]).normalized();
    phi[i] = std::atan2(cross(din[i], dout[i]), din[i].dot(dout[i]));
    if (std::abs(phi[i]) > 0.8 * kPi) return false;
    edge[i] = (next - v[i]).norm();  // edge from v[i] to v[i+1]
  }
  for (int pass = 0; pass < 4; ++pass) {
    for (std::size_t i = 0; i < n; ++i) tlen[i] = radius[i] * std::tan(0.5 * std::abs(phi[i]));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + 1) % n;
      const double need = tlen[i] + tlen[j];
      if (need > edge[i]) {
        const double f = edge[i] / need;
        radius[i] *= f;
        radius[j] *= f;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (radius[i] < min_radius) return false;
    tlen[i] = radius[i] * std::tan(0.5 * std::abs(phi[i]));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (tlen[i] + tlen[(i + 1) % n] > edge[i] + 1e-9) return false;
  }

  out = Sampled{};
  auto emit = [&](const Vec2& p, double k) {
    if (!out.points.empty()) out.length += (p - out.points.back()).norm();
    out.s.push_back(out.length);
    out.points.push_back(p);
    out.curvature.push_back(k);
  };
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = step;
    const std::size_t prev = (i + n - 1) % n;
    const Vec2 b_prev = v[prev] + dout[prev] * tlen[prev];
    const Vec2 a = v[i] - din[i] * tlen[i];
    const double straight = (a - b_prev).norm();
    if (straight > 1e-9) {
      const auto m = static_cast<int>(std::ceil(straight / kSampleSpacing));
      for (int k = 0; k < m; ++k) emit(b_prev + (a - b_prev) * (static_cast<double>(k) / m), 0.0);
    }
    const double sign = phi[i] >= 0 ? 1.0 : -1.0;
    const Vec2 center = a + left_normal(din[i]) * (sign * radius[i]);
    const Vec2 r0 = a - center;
    const double a0 = std::atan2(r0.y(), r0.x());
    const double arc = radius[i] * std::abs(phi[i]);
    const auto m = std::max(1, static_cast<int>(std::ceil(arc / kSampleSpacing)));
    for (int k = 0; k < m; ++k) {
      const double ang = a0 + phi[i] * (static_cast<double>(k) / m);
      emit(center + radius[i] * Vec2(std::cos(ang), std::sin(ang)), sign / radius[i]);
    }
  }
  out.length += (out.points.front() - out.points.back()).norm();
  return true;
}

}  // namespace

Track generate_track(TrackCategory category, std::uint64_t seed, std::string id) {
  Rng rng = make_rng(seed, "track/" + to_string(category));
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  constexpr double kMinRadius = 15.0;

  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double hw = uni(4.0, 8.0);
    std::vector<Vec2> poly;
    std::vector<double> radius;
    if (category == TrackCategory::oval) {
      const double r = uni(60.0, 200.0);
      const double a = uni(150.0, 500.0);
      const double b = uni(0.0, 150.0);
      const double hx = 0.5 * a + r, hy = 0.5 * b + r;
      poly = {{hx, -hy}, {hx, hy}, {-hx, hy}, {-hx, -hy}};
      radius.assign(4, r);
    } else {
      const bool dirt = category == TrackCategory::dirt;
      const int nv = dirt ? std::uniform_int_distribution<int>(8, 11)(rng)
                          : std::uniform_int_distribution<int>(6, 9)(rng);
      const double r0 = dirt ? uni(140.0, 220.0) : uni(180.0, 320.0);
      const double jitter = dirt ? 0.35 : 0.25;
      for (int i = 0; i < nv; ++i) {
        const double ang = 2.0 * kPi * (i + uni(-jitter, jitter)) / nv;
        double rho = r0 * uni(0.75, 1.15);
        if (dirt) rho = r0 * (i % 2 == 1 ? uni(0.45, 0.7) : uni(0.9, 1.2));
        poly.emplace_back(rho * std::cos(ang), rho * std::sin(ang));
        radius.push_back(dirt ? uni(15.0, 40.0) : uni(30.0, 120.0));
      }
    }
    Sampled sm;
    if (!fillet_polygon(poly, radius, kMinRadius, sm)) continue;
    const double clearance = 2.0 * hw + 4.0;
    if (!centerline_is_simple(sm.points, sm.s, sm.length, clearance, 3.0 * clearance)) continue;

    std::vector<double> z(sm.points.size(), 0.0);
    if (category == TrackCategory::dirt) {
      const double amp = uni(2.0, 6.0);
      const double waves = std::max(1.0, std::round(sm.length / uni(150.0, 400.0)));
      const double phase = uni(0.0, 2.0 * kPi);
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = amp * std::sin(2.0 * kPi * waves * sm.s[i] / sm.length + phase);
      }
    }
    return Track::from_centerline(std::move(id), category, std::move(sm.points), hw, true,
                                  std::move(sm.curvature), std::move(z));
  }
  throw ValidationError("could not generate a simple " + to_string(category) + " track");
}

Track straight_track(double length, double half_width) {
  std::vector<Vec2> pts;
  const auto m = static_cast<int>(std::ceil(length / kSampleSpacing));
  for (int k = 0; k <= m; ++k) pts.emplace_back(length * k / m, 0.0);
  return Track::from_centerline("straight", TrackCategory::road, std::move(pts), half_width, false);
}

}  // namespace pernn::steering
