#pragma once

#include "treeseg/execution.hpp"
#include "treeseg/point_cloud.hpp"
#include "treeseg/raster.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/terrain.hpp"

#include <vector>

namespace treeseg {

/// Height below which canopy cells and points count as background.
inline constexpr double kCanopyFloor = 2.0;

struct WatershedParams
{
  double resolution = 0.5;
  double sigma = 0.7;
  int window_gf = 5;
  int window_mf = 5;

  /// Throws std::invalid_argument when outside the tuned ranges.
  void validate() const;
};

/// Max z' per cell over the cloud's xy bounds; empty cells are interpolated
/// and cells below kCanopyFloor are flagged background.
Raster build_chm(const PointCloud& normalized, double resolution);

/// Truncated Gaussian convolution (sigma in metres, window in cells) that
/// ignores background cells and renormalises the kernel over the remaining
/// support.  Background cells are copied through unchanged.
Raster gaussian_smooth(const Raster& chm, double sigma, int window, Exec exec = Exec::parallel);

struct Peak
{
  Cell cell;
  double height = 0.0;

  bool operator==(const Peak&) const = default;
};

/// Non-background cells equal to the maximum of their window.  Each
/// 8-connected plateau of equal candidates reports only its smallest (row, col).
std::vector<Peak> find_local_maxima(const Raster& chm, int window);

/// Marker-controlled watershed by priority flooding from the markers in
/// descending height order.  Returns one label per cell (0 = background or
/// unreached); marker i receives label i + 1.
std::vector<std::int32_t> marker_watershed(const Raster& chm, const std::vector<Peak>& markers);

Segmentation watershed_its(const PointCloud& cloud, const GroundModel& ground, const WatershedParams& params);

} // namespace treeseg
