#include "treeseg/tree_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>

namespace treeseg {

Point2 tree_location(std::span<const Point3> points)
{
  if (points.empty())
    throw std::invalid_argument("tree_location: empty instance");
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : points)
    top = std::max(top, p.z);
  std::vector<Point2> crown;
  double sx = 0.0, sy = 0.0;
  for (const auto& p : points)
    if (p.z >= top - kCrownDepth) {
      crown.push_back({ p.x, p.y });
      sx += p.x;
      sy += p.y;
    }
  const Polygon hull = convex_hull(crown);
  if (hull.size() >= 3 && area(hull) > 0.0)
    return area_centroid(hull);
  const double n = static_cast<double>(crown.size());
  return { sx / n, sy / n };
}

double tree_height(std::span<const Point3> points, std::span<const Point3> non_tree, Point2 location)
{
  if (points.empty())
    throw std::invalid_argument("tree_height: empty instance");
  std::vector<double> z;
  z.reserve(points.size());
  for (const auto& p : points)
    z.push_back(p.z);
  std::sort(z.begin(), z.end(), std::greater<>());
  const double zmax = z.size() > 1 && z[0] - z[1] > kApexOutlierGap ? z[1] : z[0];
  const double zmin_tree = z.back();
  double zmin_ground = std::numeric_limits<double>::infinity();
  for (const auto& p : non_tree)
    if (std::hypot(p.x - location.x, p.y - location.y) <= kGroundDiscRadius)
      zmin_ground = std::min(zmin_ground, p.z);
  return zmax - std::min(zmin_ground, zmin_tree);
}

std::vector<CrownCategory> assign_crown_categories(std::span<const TreeRecord> trees)
{
  std::vector<CrownCategory> out(trees.size(), CrownCategory::A);
  for (std::size_t i = 0; i < trees.size(); ++i) {
    bool any_neighbour = false, dominant = true, near_taller = false, far_taller = false;
    for (std::size_t j = 0; j < trees.size(); ++j) {
      if (i == j)
        continue;
      const double d = std::hypot(trees[i].x - trees[j].x, trees[i].y - trees[j].y);
      if (!(d < kNeighbourRadius))
        continue;
      any_neighbour = true;
      if (trees[i].height - trees[j].height < kDominanceMargin)
        dominant = false;
      if (trees[j].height - trees[i].height >= kDominanceMargin) {
        if (d < kUnderDistance)
          near_taller = true;
        else
          far_taller = true;
      }
    }
    if (near_taller)
      out[i] = CrownCategory::D;
    else if (far_taller)
      out[i] = CrownCategory::C;
    else if (!any_neighbour || dominant)
      out[i] = CrownCategory::A;
    else
      out[i] = CrownCategory::B;
  }
  return out;
}

std::vector<TreeRecord> tree_records(const PointCloud& cloud)
{
  std::map<std::int32_t, std::vector<Point3>> instances;
  std::vector<Point3> non_tree;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.instance_id[i] > 0)
      instances[cloud.instance_id[i]].push_back(cloud.point(i));
    else
      non_tree.push_back(cloud.point(i));
  }
  std::vector<TreeRecord> trees;
  for (const auto& [id, pts] : instances) {
    TreeRecord t;
    t.id = id;
    const Point2 loc = tree_location(pts);
    t.x = loc.x;
    t.y = loc.y;
    t.height = tree_height(pts, non_tree, loc);
    trees.push_back(t);
  }
  const auto cats = assign_crown_categories(trees);
  for (std::size_t k = 0; k < trees.size(); ++k)
    trees[k].category = cats[k];
  return trees;
}

} // namespace treeseg
