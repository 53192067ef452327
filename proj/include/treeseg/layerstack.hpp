#pragma once

#include "treeseg/geometry.hpp"
#include "treeseg/point_cloud.hpp"
#include "treeseg/raster.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/terrain.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace treeseg {

struct LayerStackParams
{
  double resolution_coarse = 1.0;
  double filter_cutoff = 3.5;
  bool dbscan_filter = true;
  double buffer_width = 0.6;
  double core_width = 0.6;
  int window = 3;

  double dbscan_eps = 0.5;
  int dbscan_min_points = 10;
  /// Layers with index below this get the DBSCAN noise filter.
  int dbscan_layers = 3;

  void validate() const;
};

struct LayerPolygon
{
  int layer = 0;
  Polygon ring;
  std::size_t cluster_size = 0;
};

/// Point ordinals per 1 m layer: layer i holds z' in [i, i + 1).  Points
/// below 0.5 m are dropped.  The list has floor(max z') + 1 entries.
std::vector<std::vector<std::size_t>> slice_layers(const PointCloud& normalized);

struct KMeansResult
{
  /// Cluster of each point, 0..centers.size()-1 after dropping empty ones.
  std::vector<int> assignment;
  std::vector<Point2> centers;
  /// Sum of squared distances after every assignment step.
  std::vector<double> objective;
};

/// Lloyd's k-means in the plane started from `seeds` (k = seeds.size()).
/// Stops once no centre moves by 1e-4 m or after 50 iterations.  Ties in
/// assignment go to the lower centre index.
KMeansResult cluster_layer(std::span<const Point2> points, std::span<const Point2> seeds);

/// Cell value = number of polygons containing the cell centre.  The grid
/// covers the polygons' bounding box; zero cells are flagged background.
Raster build_overlap_map(std::span<const LayerPolygon> polygons, double resolution);

/// Maxima under a window x window max filter (cells from -(w/2) to (w-1)/2
/// around the centre).  8-connected equal-valued plateaus of maxima are
/// reported once, at their centroid.
std::vector<Point2> window_maxima(const Raster& raster, int window);

/// Keeps polygons whose area is at most cutoff times the median area of the
/// polygons in the same layer.  Returns the kept indices.
std::vector<std::size_t> filter_large_polygons(std::span<const LayerPolygon> polygons, double cutoff);

/// True for points that DBSCAN(eps, min_points) labels as noise.
std::vector<std::uint8_t> dbscan_noise(const PointCloud& cloud, double eps, int min_points);

struct LayerStackResult
{
  Segmentation segmentation;
  std::vector<Point2> cores;
};

LayerStackResult layer_stacking_detail(const PointCloud& cloud, const GroundModel& ground,
                                       const LayerStackParams& params, std::uint64_t seed);

Segmentation layer_stacking_segment(const PointCloud& cloud, const GroundModel& ground,
                                    const LayerStackParams& params, std::uint64_t seed);

} // namespace treeseg
