#pragma once

#include <span>
#include <vector>

namespace treeseg {

struct Point2
{
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

using Polygon = std::vector<Point2>;

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
/// Collinear points are dropped; fewer than 3 distinct points yields the
/// distinct points themselves.
Polygon convex_hull(std::span<const Point2> points);

/// Signed shoelace area; positive for counter-clockwise rings.
double signed_area(std::span<const Point2> ring);
double area(std::span<const Point2> ring);

/// Area centroid of a simple polygon.  Requires non-zero area.
Point2 area_centroid(std::span<const Point2> ring);

bool contains(std::span<const Point2> ring, Point2 p);

/// Convex hull of the points dilated by `width` with rounded joins,
/// approximated by `segments` vertices per circle.
Polygon buffered_hull(std::span<const Point2> points, double width, int segments = 24);

/// Area of intersection of two convex polygons (Sutherland-Hodgman clip).
double convex_intersection_area(std::span<const Point2> a, std::span<const Point2> b);

} // namespace treeseg
