#pragma once

#include "treeseg/geometry.hpp"
#include "treeseg/point_cloud.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace treeseg {

enum class CrownCategory : char { A = 'A', B = 'B', C = 'C', D = 'D' };

/// Reporting order of the crown categories.
inline constexpr std::array<CrownCategory, 4> kCategoryOrder = { CrownCategory::D, CrownCategory::C,
                                                                 CrownCategory::A, CrownCategory::B };

struct TreeRecord
{
  std::int32_t id = 0;
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;
  CrownCategory category = CrownCategory::A;
};

/// Depth of the crown used for locating a tree.
inline constexpr double kCrownDepth = 3.0;
/// Apex-to-second gap above which the apex is treated as an outlier.
inline constexpr double kApexOutlierGap = 0.25;
/// Radius of the ground disc under a tree.
inline constexpr double kGroundDiscRadius = 0.5;
/// Neighbourhood radius and thresholds for crown categories.
inline constexpr double kNeighbourRadius = 3.0;
inline constexpr double kDominanceMargin = 2.0;
inline constexpr double kUnderDistance = 1.5;

/// Area centroid of the convex hull of the points within kCrownDepth of the
/// highest point; mean xy of those points when the hull is degenerate.
Point2 tree_location(std::span<const Point3> points);

/// Apex (or the second-highest point when the apex sits more than
/// kApexOutlierGap above it) minus the lower of the tree's lowest point and
/// the lowest non-tree point within kGroundDiscRadius of `location`.
double tree_height(std::span<const Point3> points, std::span<const Point3> non_tree, Point2 location);

/// Category of every tree from its neighbours within kNeighbourRadius:
/// D when some neighbour at < kUnderDistance is at least kDominanceMargin
/// taller, else C when such a neighbour exists further away, else A when
/// there are no neighbours or the tree is at least kDominanceMargin taller
/// than all of them, else B.
std::vector<CrownCategory> assign_crown_categories(std::span<const TreeRecord> trees);

/// Location, height and category of every ground-truth instance of a cloud
/// (raw heights; non-tree points are those with instance 0).
std::vector<TreeRecord> tree_records(const PointCloud& cloud);

} // namespace treeseg
