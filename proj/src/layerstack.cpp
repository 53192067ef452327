#include "treeseg/layerstack.hpp"

#include "treeseg/meanshift.hpp"
#include "treeseg/spatial_index.hpp"
#include "treeseg/watershed.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <stdexcept>

namespace treeseg {

void LayerStackParams::validate() const
{
  if (!(resolution_coarse >= 0.05 && resolution_coarse <= 1.0))
    throw std::invalid_argument("layer stacking: resolution_coarse must lie in [0.05, 1.0]");
  if (!(filter_cutoff >= 2.5 && filter_cutoff <= 3.5))
    throw std::invalid_argument("layer stacking: filter_cutoff must lie in [2.5, 3.5]");
  if (!(buffer_width >= 0.1 && buffer_width <= 1.5))
    throw std::invalid_argument("layer stacking: buffer_width must lie in [0.1, 1.5]");
  if (!(core_width >= 0.1 && core_width <= 1.0))
    throw std::invalid_argument("layer stacking: core_width must lie in [0.1, 1.0]");
  if (window < 1 || window > 15)
    throw std::invalid_argument("layer stacking: window must lie in [1, 15]");
  if (!(dbscan_eps > 0.0) || dbscan_min_points < 1)
    throw std::invalid_argument("layer stacking: invalid DBSCAN parameters");
}

std::vector<std::vector<std::size_t>> slice_layers(const PointCloud& normalized)
{
  std::vector<std::vector<std::size_t>> layers;
  double top = -std::numeric_limits<double>::infinity();
  for (double z : normalized.z)
    top = std::max(top, z);
  if (normalized.empty() || top < kGroundClearance)
    return layers;
  layers.resize(static_cast<std::size_t>(std::floor(top)) + 1);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double z = normalized.z[i];
    if (z < kGroundClearance)
      continue;
    layers[static_cast<std::size_t>(std::floor(z))].push_back(i);
  }
  return layers;
}

namespace {

double dist2(Point2 a, Point2 b)
{
  return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
}

double segment_distance(Point2 p, Point2 a, Point2 b)
{
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

bool disc_touches(std::span<const Point2> ring, Point2 c, double r)
{
  if (ring.size() >= 3 && contains(ring, c))
    return true;
  for (std::size_t i = 0; i < ring.size(); ++i)
    if (segment_distance(c, ring[i], ring[(i + 1) % ring.size()]) < r)
      return true;
  return false;
}

} // namespace

KMeansResult cluster_layer(std::span<const Point2> points, std::span<const Point2> seeds)
{
  if (seeds.empty())
    throw std::invalid_argument("cluster_layer: no seeds");
  KMeansResult res;
  std::vector<Point2> centers(seeds.begin(), seeds.end());
  std::vector<int> assign(points.size(), 0);
  const std::size_t k = centers.size();
  for (int iter = 0; iter < 50; ++iter) {
    double obj = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double bd = dist2(points[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = dist2(points[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      assign[i] = best;
      obj += bd;
    }
    res.objective.push_back(obj);

    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::vector<std::size_t> n(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sx[assign[i]] += points[i].x;
      sy[assign[i]] += points[i].y;
      ++n[assign[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (n[c] == 0)
        continue;
      const Point2 next{ sx[c] / n[c], sy[c] / n[c] };
      shift = std::max(shift, std::sqrt(dist2(next, centers[c])));
      centers[c] = next;
    }
    if (shift < 1e-4)
      break;
  }

  std::vector<int> remap(k, -1);
  std::vector<std::size_t> n(k, 0);
  for (int a : assign)
    ++n[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (n[c] == 0)
      continue;
    remap[c] = static_cast<int>(res.centers.size());
    res.centers.push_back(centers[c]);
  }
  res.assignment.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    res.assignment[i] = remap[assign[i]];
  return res;
}

Raster build_overlap_map(std::span<const LayerPolygon> polygons, double resolution)
{
  if (polygons.empty())
    throw std::invalid_argument("build_overlap_map: no polygons");
  double xlo = std::numeric_limits<double>::infinity(), ylo = xlo, xhi = -xlo, yhi = -xlo;
  for (const auto& p : polygons)
    for (const auto& v : p.ring) {
      xlo = std::min(xlo, v.x);
      ylo = std::min(ylo, v.y);
      xhi = std::max(xhi, v.x);
      yhi = std::max(yhi, v.y);
    }
  Raster map = Raster::covering(xlo, ylo, xhi, yhi, resolution);
  for (const auto& p : polygons) {
    if (p.ring.size() < 3)
      continue;
    double pxlo = std::numeric_limits<double>::infinity(), pylo = pxlo, pxhi = -pxlo, pyhi = -pxlo;
    for (const auto& v : p.ring) {
      pxlo = std::min(pxlo, v.x);
      pylo = std::min(pylo, v.y);
      pxhi = std::max(pxhi, v.x);
      pyhi = std::max(pyhi, v.y);
    }
    const Cell lo = map.cell_of(pxlo, pylo), hi = map.cell_of(pxhi, pyhi);
    for (int r = lo.row; r <= hi.row; ++r)
      for (int c = lo.col; c <= hi.col; ++c)
        if (contains(p.ring, { map.center_x(c), map.center_y(r) }))
          map.at(r, c) += 1.0;
  }
  for (std::size_t k = 0; k < map.size(); ++k)
    map.background[k] = map.values[k] > 0.0 ? 0 : 1;
  return map;
}

std::vector<Point2> window_maxima(const Raster& raster, int window)
{
  if (window < 1)
    throw std::invalid_argument("window_maxima: window must be positive");
  const int lo = -(window / 2), hi = (window - 1) / 2;
  std::vector<std::uint8_t> candidate(raster.size(), 0);
  for (int r = 0; r < raster.height; ++r)
    for (int c = 0; c < raster.width; ++c) {
      if (raster.is_background(r, c))
        continue;
      const double v = raster.at(r, c);
      bool is_max = true;
      for (int dr = lo; dr <= hi && is_max; ++dr)
        for (int dc = lo; dc <= hi && is_max; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (raster.in_bounds(rr, cc) && !raster.is_background(rr, cc) && raster.at(rr, cc) > v)
            is_max = false;
        }
      candidate[raster.index(r, c)] = is_max ? 1 : 0;
    }

  std::vector<Point2> out;
  std::vector<std::uint8_t> seen(raster.size(), 0);
  std::vector<Cell> stack;
  for (int r = 0; r < raster.height; ++r)
    for (int c = 0; c < raster.width; ++c) {
      const auto k = raster.index(r, c);
      if (!candidate[k] || seen[k])
        continue;
      const double v = raster.values[k];
      double sx = 0.0, sy = 0.0;
      std::size_t n = 0;
      seen[k] = 1;
      stack.assign(1, { r, c });
      while (!stack.empty()) {
        const Cell cur = stack.back();
        stack.pop_back();
        sx += raster.center_x(cur.col);
        sy += raster.center_y(cur.row);
        ++n;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = cur.row + dr, cc = cur.col + dc;
            if (!raster.in_bounds(rr, cc))
              continue;
            const auto j = raster.index(rr, cc);
            if (candidate[j] && !seen[j] && raster.values[j] == v) {
              seen[j] = 1;
              stack.push_back({ rr, cc });
            }
          }
      }
      out.push_back({ sx / n, sy / n });
    }
  return out;
}

std::vector<std::size_t> filter_large_polygons(std::span<const LayerPolygon> polygons, double cutoff)
{
  std::map<int, std::vector<double>> areas;
  for (const auto& p : polygons)
    areas[p.layer].push_back(area(p.ring));
  std::map<int, double> median;
  for (auto& [layer, a] : areas) {
    std::sort(a.begin(), a.end());
    const std::size_t m = a.size() / 2;
    median[layer] = a.size() % 2 ? a[m] : 0.5 * (a[m - 1] + a[m]);
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < polygons.size(); ++i)
    if (!(area(polygons[i].ring) > cutoff * median[polygons[i].layer]))
      keep.push_back(i);
  return keep;
}

std::vector<std::uint8_t> dbscan_noise(const PointCloud& cloud, double eps, int min_points)
{
  std::vector<std::uint8_t> noise(cloud.size(), 1);
  if (cloud.empty())
    return noise;
  const KdTree3 tree(xyz_points(cloud));
  std::vector<std::uint8_t> core(cloud.size(), 0);
  std::vector<std::vector<Neighbor>> hood(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    hood[i] = tree.radius(tree.point(i), eps);
    core[i] = hood[i].size() >= static_cast<std::size_t>(min_points) ? 1 : 0;
  }
  // Non-noise = core points and border points reachable from one.
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!core[i])
      continue;
    noise[i] = 0;
    for (const auto& n : hood[i])
      noise[n.index] = 0;
  }
  return noise;
}

namespace {

struct LayerData
{
  int index = 0;
  std::vector<std::size_t> members;
  std::vector<Point2> xy;
};

std::vector<LayerPolygon> cluster_layers(const std::vector<LayerData>& layers, std::span<const Point2> seeds,
                                         std::span<const double> seed_height, double buffer)
{
  std::vector<LayerPolygon> out;
  for (const auto& layer : layers) {
    if (layer.xy.empty())
      continue;
    std::vector<Point2> s;
    for (std::size_t k = 0; k < seeds.size(); ++k)
      if (seed_height.empty() || seed_height[k] >= layer.index)
        s.push_back(seeds[k]);
    if (s.empty())
      s.assign(seeds.begin(), seeds.end());
    const auto km = cluster_layer(layer.xy, s);
    std::vector<std::vector<Point2>> groups(km.centers.size());
    for (std::size_t i = 0; i < layer.xy.size(); ++i)
      groups[km.assignment[i]].push_back(layer.xy[i]);
    for (const auto& g : groups)
      out.push_back({ layer.index, buffered_hull(g, buffer), g.size() });
  }
  return out;
}

} // namespace

LayerStackResult layer_stacking_detail(const PointCloud& cloud, const GroundModel& ground,
                                       const LayerStackParams& params, std::uint64_t /*seed*/)
{
  params.validate();
  LayerStackResult res;
  res.segmentation = Segmentation(Labels(cloud.size(), 0));
  if (cloud.empty())
    return res;
  const PointCloud norm = normalize_heights(cloud, ground);

  const Raster chm = build_chm(norm, params.resolution_coarse);
  std::vector<Point2> seeds;
  std::vector<double> seed_height;
  for (const auto& p : window_maxima(chm, params.window)) {
    seeds.push_back(p);
    const Cell c = chm.cell_of(p.x, p.y);
    seed_height.push_back(chm.at(c.row, c.col));
  }
  if (seeds.empty())
    return res;

  auto slices = slice_layers(norm);
  std::vector<LayerData> layers;
  for (std::size_t li = 0; li < slices.size(); ++li) {
    LayerData layer;
    layer.index = static_cast<int>(li);
    if (params.dbscan_filter && layer.index < params.dbscan_layers && !slices[li].empty()) {
      const auto noise = dbscan_noise(norm.subset(slices[li]), params.dbscan_eps, params.dbscan_min_points);
      for (std::size_t k = 0; k < slices[li].size(); ++k)
        if (!noise[k])
          layer.members.push_back(slices[li][k]);
    } else {
      layer.members = slices[li];
    }
    for (auto i : layer.members)
      layer.xy.push_back({ norm.x[i], norm.y[i] });
    layers.push_back(std::move(layer));
  }

  const auto first = cluster_layers(layers, seeds, seed_height, params.buffer_width);
  if (first.empty())
    return res;

  // Cores from the coarse overlap map, kept pairwise disjoint (highest first).
  const double r = params.resolution_coarse;
  std::vector<std::vector<Point2>> maxima_by_res;
  struct Candidate
  {
    Point2 at;
    double value;
  };
  std::vector<Candidate> candidates;
  for (double res_k : { r, r / 2.0, r / 4.0 }) {
    const Raster map = build_overlap_map(first, res_k);
    auto m = window_maxima(map, params.window);
    if (res_k == r)
      for (const auto& p : m) {
        const Cell c = map.cell_of(p.x, p.y);
        candidates.push_back({ p, map.at(c.row, c.col) });
      }
    maxima_by_res.push_back(std::move(m));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
  for (const auto& cand : candidates) {
    bool clear = true;
    for (const auto& core : res.cores)
      clear = clear && std::sqrt(dist2(core, cand.at)) > 2.0 * params.core_width;
    if (clear)
      res.cores.push_back(cand.at);
  }
  if (res.cores.empty())
    return res;

  // Second pass: re-cluster with the maxima of each resolution as seeds.
  std::vector<LayerPolygon> polygons;
  for (const auto& m : maxima_by_res) {
    if (m.empty())
      continue;
    auto part = cluster_layers(layers, m, {}, params.buffer_width);
    for (auto k : filter_large_polygons(part, params.filter_cutoff))
      polygons.push_back(std::move(part[k]));
  }

  const auto ncore = res.cores.size();
  std::vector<std::map<std::size_t, int>> votes(norm.size());
  for (std::size_t p = 0; p < polygons.size(); ++p) {
    std::size_t owner = ncore;
    int touching = 0;
    for (std::size_t c = 0; c < ncore; ++c)
      if (disc_touches(polygons[p].ring, res.cores[c], params.core_width)) {
        owner = c;
        ++touching;
      }
    if (touching != 1)
      continue;
    const auto& layer = layers[static_cast<std::size_t>(polygons[p].layer)];
    for (std::size_t k = 0; k < layer.members.size(); ++k)
      if (contains(polygons[p].ring, layer.xy[k]))
        ++votes[layer.members[k]][owner];
  }

  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (votes[i].empty())
      continue;
    std::size_t best = ncore;
    int best_votes = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [c, v] : votes[i]) {
      const double d = dist2(res.cores[c], { norm.x[i], norm.y[i] });
      if (v > best_votes || (v == best_votes && d < best_d)) {
        best = c;
        best_votes = v;
        best_d = d;
      }
    }
    res.segmentation.labels[i] = static_cast<std::int32_t>(best + 1);
  }
  res.segmentation.compact();
  return res;
}

Segmentation layer_stacking_segment(const PointCloud& cloud, const GroundModel& ground,
                                    const LayerStackParams& params, std::uint64_t seed)
{
  return layer_stacking_detail(cloud, ground, params, seed).segmentation;
}

} // namespace treeseg
