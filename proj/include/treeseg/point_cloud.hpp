#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace treeseg {

/// Sentinel for a reflectance sample that was not recorded.
inline constexpr double kMissingReflectance = -9999.0;
inline constexpr int kReflectanceChannels = 3;

/// Semantic classes used by the annotation scheme.
enum class SemanticClass : std::int32_t {
  other = 0,
  tree = 1,
  building = 2,
  vehicle = 3,
  pole = 4,
  out = 5,
};

using Labels = std::vector<std::int32_t>;

struct Point3
{
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Columnar point cloud.  Every column has size() entries.
struct PointCloud
{
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> z;
  std::array<std::vector<double>, kReflectanceChannels> reflectance;
  Labels instance_id;
  Labels semantic_id;

  PointCloud() = default;
  /// Allocates n points at the origin with missing reflectance and label 0.
  explicit PointCloud(std::size_t n);

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }

  Point3 point(std::size_t i) const { return { x[i], y[i], z[i] }; }

  void push_back(const Point3& p, std::int32_t instance = 0, std::int32_t semantic = 0);

  /// Throws std::invalid_argument if any column length or label range is off.
  void validate() const;

  /// Points at the given ordinals, in the given order.
  PointCloud subset(std::span<const std::size_t> indices) const;

  /// Instance id -> point count, excluding 0.
  std::map<std::int32_t, std::size_t> instances() const;

  bool operator==(const PointCloud&) const = default;
};

/// Horizontal footprint of a cylindrical plot.
struct PlotGeometry
{
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 1.0;

  PlotGeometry() = default;
  PlotGeometry(double cx, double cy, double r);

  double area_m2() const;
  double area_ha() const { return area_m2() / 10000.0; }

  /// Plot whose area equals the area of the convex hull of the cloud's xy.
  static PlotGeometry equivalent_to(const PointCloud& cloud);
};

} // namespace treeseg
