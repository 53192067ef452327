#pragma once

#include "treeseg/execution.hpp"
#include "treeseg/point_cloud.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

namespace treeseg {

struct Neighbor
{
  std::size_t index = 0;
  double dist2 = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Strict order used everywhere for neighbor results: distance, then ordinal.
inline bool closer(const Neighbor& a, const Neighbor& b)
{
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

template<int Dim>
using PointN = std::array<double, Dim>;

template<int Dim>
double squared_distance(const PointN<Dim>& a, const PointN<Dim>& b)
{
  double s = 0.0;
  for (int d = 0; d < Dim; ++d) {
    const double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

/// Static k-d tree.  k-nearest and radius queries return exactly what a
/// linear scan returns, ordered by (distance, ordinal); equal distances are
/// resolved in favour of the lower ordinal.  Queries are safe to run
/// concurrently once built.
template<int Dim>
class KdTree
{
public:
  using Point = PointN<Dim>;

  explicit KdTree(std::vector<Point> points, std::size_t leaf_size = 12)
    : points_(std::move(points))
    , leaf_size_(std::max<std::size_t>(leaf_size, 1))
  {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i)
      order_[i] = i;
    if (!points_.empty())
      build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }
  const Point& point(std::size_t i) const { return points_[i]; }
  const std::vector<Point>& points() const { return points_; }

  std::vector<Neighbor> knn(const Point& q, std::size_t k) const
  {
    std::vector<Neighbor> heap; // max-heap under closer()
    k = std::min(k, points_.size());
    if (k == 0)
      return heap;
    heap.reserve(k + 1);
    knn_visit(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end(), closer);
    return heap;
  }

  Neighbor nearest(const Point& q) const
  {
    if (points_.empty())
      throw std::invalid_argument("KdTree::nearest on empty tree");
    return knn(q, 1).front();
  }

  /// All points with squared distance <= radius^2.
  std::vector<Neighbor> radius(const Point& q, double r) const
  {
    std::vector<Neighbor> out;
    if (!points_.empty() && r >= 0.0)
      radius_visit(0, q, r * r, out);
    std::sort(out.begin(), out.end(), closer);
    return out;
  }

  /// All points inside the axis-aligned box [lo, hi] (inclusive), unordered.
  void box(const Point& lo, const Point& hi, std::vector<std::size_t>& out) const
  {
    out.clear();
    if (!points_.empty())
      box_visit(0, lo, hi, out);
  }

private:
  struct Node
  {
    Point lo{};
    Point hi{};
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t left = 0;  // 0 marks a leaf
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end)
  {
    const std::size_t id = nodes_.size();
    nodes_.push_back({});
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.fill(std::numeric_limits<double>::infinity());
    node.hi.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      const auto& p = points_[order_[i]];
      for (int d = 0; d < Dim; ++d) {
        node.lo[d] = std::min(node.lo[d], p[d]);
        node.hi[d] = std::max(node.hi[d], p[d]);
      }
    }
    if (end - begin > leaf_size_) {
      int axis = 0;
      for (int d = 1; d < Dim; ++d)
        if (node.hi[d] - node.lo[d] > node.hi[axis] - node.lo[axis])
          axis = d;
      if (node.hi[axis] > node.lo[axis]) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        node.left = build(begin, mid);
        node.right = build(mid, end);
      }
    }
    nodes_[id] = node;
    return id;
  }

  static double box_dist2(const Node& n, const Point& q)
  {
    double s = 0.0;
    for (int d = 0; d < Dim; ++d) {
      const double t = q[d] < n.lo[d] ? n.lo[d] - q[d] : (q[d] > n.hi[d] ? q[d] - n.hi[d] : 0.0);
      s += t * t;
    }
    return s;
  }

  void knn_visit(std::size_t id, const Point& q, std::size_t k, std::vector<Neighbor>& heap) const
  {
    const Node& n = nodes_[id];
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const Neighbor cand{ order_[i], squared_distance<Dim>(points_[order_[i]], q) };
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
      return;
    }
    const double dl = box_dist2(nodes_[n.left], q);
    const double dr = box_dist2(nodes_[n.right], q);
    const std::size_t first = dl <= dr ? n.left : n.right;
    const std::size_t second = dl <= dr ? n.right : n.left;
    const double d_first = std::min(dl, dr), d_second = std::max(dl, dr);
    if (heap.size() < k || d_first <= heap.front().dist2)
      knn_visit(first, q, k, heap);
    if (heap.size() < k || d_second <= heap.front().dist2)
      knn_visit(second, q, k, heap);
  }

  void radius_visit(std::size_t id, const Point& q, double r2, std::vector<Neighbor>& out) const
  {
    const Node& n = nodes_[id];
    if (box_dist2(n, q) > r2)
      return;
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const double d2 = squared_distance<Dim>(points_[order_[i]], q);
        if (d2 <= r2)
          out.push_back({ order_[i], d2 });
      }
      return;
    }
    radius_visit(n.left, q, r2, out);
    radius_visit(n.right, q, r2, out);
  }

  void box_visit(std::size_t id, const Point& lo, const Point& hi, std::vector<std::size_t>& out) const
  {
    const Node& n = nodes_[id];
    for (int d = 0; d < Dim; ++d)
      if (n.hi[d] < lo[d] || n.lo[d] > hi[d])
        return;
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const auto& p = points_[order_[i]];
        bool inside = true;
        for (int d = 0; d < Dim && inside; ++d)
          inside = p[d] >= lo[d] && p[d] <= hi[d];
        if (inside)
          out.push_back(order_[i]);
      }
      return;
    }
    box_visit(n.left, lo, hi, out);
    box_visit(n.right, lo, hi, out);
  }

  std::vector<Point> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

using KdTree2 = KdTree<2>;
using KdTree3 = KdTree<3>;

std::vector<PointN<3>> xyz_points(const PointCloud& cloud);
std::vector<PointN<2>> xy_points(const PointCloud& cloud);

/// Linear-scan references used to check the tree.
template<int Dim>
std::vector<Neighbor> brute_force_knn(const std::vector<PointN<Dim>>& points, const PointN<Dim>& q, std::size_t k)
{
  std::vector<Neighbor> all(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    all[i] = { i, squared_distance<Dim>(points[i], q) };
  std::sort(all.begin(), all.end(), closer);
  all.resize(std::min(k, all.size()));
  return all;
}

template<int Dim>
std::vector<Neighbor> brute_force_radius(const std::vector<PointN<Dim>>& points, const PointN<Dim>& q, double r)
{
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = squared_distance<Dim>(points[i], q);
    if (d2 <= r * r)
      out.push_back({ i, d2 });
  }
  std::sort(out.begin(), out.end(), closer);
  return out;
}

/// k nearest neighbours of every tree point, excluding the point itself.
/// Row i holds the neighbours of point i.
std::vector<std::vector<Neighbor>> knn_self(const KdTree3& tree, std::size_t k, Exec exec = Exec::parallel);

} // namespace treeseg
