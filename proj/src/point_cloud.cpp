#include "treeseg/point_cloud.hpp"

#include "treeseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace treeseg {

PointCloud::PointCloud(std::size_t n)
  : x(n, 0.0)
  , y(n, 0.0)
  , z(n, 0.0)
  , instance_id(n, 0)
  , semantic_id(n, 0)
{
  for (auto& channel : reflectance)
    channel.assign(n, kMissingReflectance);
}

void PointCloud::push_back(const Point3& p, std::int32_t instance, std::int32_t semantic)
{
  x.push_back(p.x);
  y.push_back(p.y);
  z.push_back(p.z);
  for (auto& channel : reflectance)
    channel.push_back(kMissingReflectance);
  instance_id.push_back(instance);
  semantic_id.push_back(semantic);
}

void PointCloud::validate() const
{
  const std::size_t n = x.size();
  if (y.size() != n || z.size() != n || instance_id.size() != n || semantic_id.size() != n)
    throw std::invalid_argument("PointCloud: column lengths differ");
  for (const auto& channel : reflectance)
    if (channel.size() != n)
      throw std::invalid_argument("PointCloud: reflectance column length differs");
  for (std::size_t i = 0; i < n; ++i) {
    if (instance_id[i] < 0)
      throw std::invalid_argument("PointCloud: negative instance id at point " + std::to_string(i));
    if (semantic_id[i] < 0 || semantic_id[i] > 5)
      throw std::invalid_argument("PointCloud: semantic id out of range at point " + std::to_string(i));
  }
}

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const
{
  PointCloud out;
  const std::size_t m = indices.size();
  out.x.reserve(m);
  out.y.reserve(m);
  out.z.reserve(m);
  out.instance_id.reserve(m);
  out.semantic_id.reserve(m);
  for (auto& channel : out.reflectance)
    channel.reserve(m);
  for (std::size_t i : indices) {
    out.x.push_back(x[i]);
    out.y.push_back(y[i]);
    out.z.push_back(z[i]);
    for (int c = 0; c < kReflectanceChannels; ++c)
      out.reflectance[c].push_back(reflectance[c][i]);
    out.instance_id.push_back(instance_id[i]);
    out.semantic_id.push_back(semantic_id[i]);
  }
  return out;
}

std::map<std::int32_t, std::size_t> PointCloud::instances() const
{
  std::map<std::int32_t, std::size_t> counts;
  for (auto id : instance_id)
    if (id != 0)
      ++counts[id];
  return counts;
}

PlotGeometry::PlotGeometry(double cx, double cy, double r)
  : center_x(cx)
  , center_y(cy)
  , radius(r)
{
  if (!(r > 0.0))
    throw std::invalid_argument("PlotGeometry: radius must be positive");
}

double PlotGeometry::area_m2() const
{
  return std::numbers::pi * radius * radius;
}

PlotGeometry PlotGeometry::equivalent_to(const PointCloud& cloud)
{
  std::vector<Point2> xy(cloud.size());
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    xy[i] = { cloud.x[i], cloud.y[i] };
    cx += cloud.x[i];
    cy += cloud.y[i];
  }
  if (!xy.empty()) {
    cx /= static_cast<double>(xy.size());
    cy /= static_cast<double>(xy.size());
  }
  const Polygon hull = convex_hull(xy);
  const double a = std::max(area(hull), 1e-6);
  return PlotGeometry(cx, cy, std::sqrt(a / std::numbers::pi));
}

} // namespace treeseg
