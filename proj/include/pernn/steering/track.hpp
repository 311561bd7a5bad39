#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pernn::steering {

using Vec2 = Eigen::Vector2d;

enum class TrackCategory { road, dirt, oval };

std::string to_string(TrackCategory c);
TrackCategory track_category_from_string(const std::string& s);

inline constexpr double kSampleSpacing = 0.5;
inline constexpr double kGridCell = 5.0;

struct Projection {
  double s = 0.0;        // arc length of the foot point
  double lateral = 0.0;  // signed offset, left positive
  double heading = 0.0;  // centerline tangent angle at the foot point
  std::size_t index = 0;
};

// Uniform grid over line segments for ray queries.
class SegmentGrid {
 public:
  SegmentGrid() = default;
  SegmentGrid(std::vector<std::pair<Vec2, Vec2>> segments, double cell);

  // Distance to the first segment hit along origin + t * dir (dir unit), or
  // max_range when nothing is hit within range.
  double raycast(const Vec2& origin, const Vec2& dir, double max_range) const;
  std::size_t size() const { return segments_.size(); }

 private:
  std::vector<std::pair<Vec2, Vec2>> segments_;
  std::vector<std::vector<std::uint32_t>> cells_;
  Vec2 origin_ = Vec2::Zero();
  double cell_ = kGridCell;
  long nx_ = 0;
  long ny_ = 0;
};

class Track {
 public:
  // Samples must be spaced at most 1 m apart. Curvature and elevation per
  // sample are optional; curvature is estimated from the polyline when absent.
  static Track from_centerline(std::string id, TrackCategory category, std::vector<Vec2> points,
                               double half_width, bool closed, std::vector<double> curvature = {},
                               std::vector<double> elevation = {});

  const std::string& id() const { return id_; }
  TrackCategory category() const { return category_; }
  double half_width() const { return half_width_; }
  bool closed() const { return closed_; }
  double length() const { return length_; }
  std::size_t samples() const { return points_.size(); }
  const Vec2& point(std::size_t i) const { return points_[i]; }
  double arc_length(std::size_t i) const { return s_[i]; }
  double curvature(std::size_t i) const { return curvature_[i]; }

  // Position, heading, elevation and curvature at arc length s (wrapped on
  // closed tracks, clamped on open ones).
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  double elevation_at(double s) const;
  double max_abs_curvature(double s_from, double distance) const;
  // max over the next `distance` metres of |curvature| * (1 - d / distance),
  // continuous in s_from.
  double tapered_curvature(double s_from, double distance) const;

  Projection project(const Vec2& p) const;

  double raycast_edges(const Vec2& origin, const Vec2& dir, double max_range) const {
    return edges_.raycast(origin, dir, max_range);
  }

  // Forward arc-length difference from a to b (wrapped on closed tracks).
  double forward_distance(double from, double to) const;

 private:
  double wrap(double s) const;
  std::size_t locate(double s, double& frac) const;

  std::string id_;
  TrackCategory category_ = TrackCategory::road;
  std::vector<Vec2> points_;
  std::vector<double> s_;
  std::vector<double> curvature_;
  std::vector<double> elevation_;
  double half_width_ = 5.0;
  bool closed_ = true;
  double length_ = 0.0;
  SegmentGrid edges_;
  // Centerline sample buckets for nearest-point queries.
  std::vector<std::vector<std::uint32_t>> buckets_;
  Vec2 bucket_origin_ = Vec2::Zero();
  long bx_ = 0;
  long by_ = 0;
};

// No two centerline samples further apart than `arc_gap` along the track come
// closer than `clearance` in the plane.
bool centerline_is_simple(const std::vector<Vec2>& points, const std::vector<double>& s, double length,
                          double clearance, double arc_gap);

// Seeded closed track: polygon with filleted corners.
Track generate_track(TrackCategory category, std::uint64_t seed, std::string id);

// Straight open track along +x from the origin.
Track straight_track(double length, double half_width);

}  // namespace pernn::steering
