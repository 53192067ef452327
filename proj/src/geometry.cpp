#include "treeseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace treeseg {

namespace {

double cross(Point2 o, Point2 a, Point2 b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

} // namespace

Polygon convex_hull(std::span<const Point2> points)
{
  Polygon pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3)
    return pts;

  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0)
      --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double signed_area(std::span<const Point2> ring)
{
  if (ring.size() < 3)
    return 0.0;
  double s = 0.0;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++)
    s += ring[j].x * ring[i].y - ring[i].x * ring[j].y;
  return 0.5 * s;
}

double area(std::span<const Point2> ring)
{
  return std::abs(signed_area(ring));
}

Point2 area_centroid(std::span<const Point2> ring)
{
  // Shift to the first vertex to limit cancellation for far-from-origin plots.
  const Point2 o = ring.front();
  double a = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const double xj = ring[j].x - o.x, yj = ring[j].y - o.y;
    const double xi = ring[i].x - o.x, yi = ring[i].y - o.y;
    const double c = xj * yi - xi * yj;
    a += c;
    cx += (xj + xi) * c;
    cy += (yj + yi) * c;
  }
  if (a == 0.0)
    throw std::invalid_argument("area_centroid: degenerate polygon");
  return { o.x + cx / (3.0 * a), o.y + cy / (3.0 * a) };
}

bool contains(std::span<const Point2> ring, Point2 p)
{
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Point2 a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xs = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xs)
        inside = !inside;
    }
  }
  return inside;
}

Polygon buffered_hull(std::span<const Point2> points, double width, int segments)
{
  if (width <= 0.0)
    throw std::invalid_argument("buffered_hull: width must be positive");
  const Polygon core = convex_hull(points);
  Polygon ring;
  ring.reserve(core.size() * static_cast<std::size_t>(segments));
  for (const auto& v : core) {
    for (int s = 0; s < segments; ++s) {
      const double t = 2.0 * std::numbers::pi * s / segments;
      ring.push_back({ v.x + width * std::cos(t), v.y + width * std::sin(t) });
    }
  }
  return convex_hull(ring);
}

double convex_intersection_area(std::span<const Point2> a, std::span<const Point2> b)
{
  if (a.size() < 3 || b.size() < 3)
    return 0.0;
  Polygon out(a.begin(), a.end());
  // Clip against each counter-clockwise edge of b.
  for (std::size_t i = 0; i < b.size() && !out.empty(); ++i) {
    const Point2 e0 = b[i], e1 = b[(i + 1) % b.size()];
    Polygon in;
    in.swap(out);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const Point2 cur = in[k], prev = in[(k + in.size() - 1) % in.size()];
      const double dc = cross(e0, e1, cur), dp = cross(e0, e1, prev);
      if (dc >= 0) {
        if (dp < 0) {
          const double t = dp / (dp - dc);
          out.push_back({ prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y) });
        }
        out.push_back(cur);
      } else if (dp >= 0) {
        const double t = dp / (dp - dc);
        out.push_back({ prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y) });
      }
    }
  }
  return area(out);
}

} // namespace treeseg
