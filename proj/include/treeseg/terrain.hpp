#pragma once

#include "treeseg/point_cloud.hpp"
#include "treeseg/raster.hpp"

#include <stdexcept>

namespace treeseg {

/// Raised when a ground query falls outside the modelled extent.
class ExtentError : public std::out_of_range
{
public:
  using std::out_of_range::out_of_range;
};

/// Gridded ground elevation.  Queries interpolate bilinearly between cell
/// centres, so the surface is continuous and piecewise bilinear.
class GroundModel
{
public:
  GroundModel() = default;
  explicit GroundModel(Raster grid);

  /// Throws ExtentError outside the grid.
  double elevation(double x, double y) const;
  bool covers(double x, double y) const { return grid_.contains(x, y); }

  const Raster& grid() const { return grid_; }

private:
  Raster grid_;
};

/// Default grid spacing for estimate_ground.
inline constexpr double kDefaultGroundCell = 1.0;

/// Per-cell ground = lowest point after discarding cell-local low outliers
/// (z below the cell's 1st percentile minus 0.5 m); empty cells are filled by
/// interpolation from populated neighbours.
GroundModel estimate_ground(const PointCloud& cloud, double cell_size = kDefaultGroundCell);

/// z' = z - ground(x, y); every other column is copied unchanged.
PointCloud normalize_heights(const PointCloud& cloud, const GroundModel& ground);
/// Inverse of normalize_heights.
PointCloud denormalize_heights(const PointCloud& cloud, const GroundModel& ground);

} // namespace treeseg
