#include "treeseg/terrain.hpp"

#include "treeseg/preprocess.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace treeseg {

GroundModel::GroundModel(Raster grid)
  : grid_(std::move(grid))
{
}

double GroundModel::elevation(double x, double y) const
{
  if (grid_.size() == 0 || !grid_.contains(x, y))
    throw ExtentError("ground query outside extent at (" + std::to_string(x) + ", " + std::to_string(y) + ")");
  return grid_.sample_bilinear(x, y);
}

GroundModel estimate_ground(const PointCloud& cloud, double cell_size)
{
  if (!(cell_size > 0.0))
    throw std::invalid_argument("estimate_ground: cell_size must be positive");
  if (cloud.empty())
    throw std::invalid_argument("estimate_ground: empty cloud");

  const auto [minx, maxx] = std::minmax_element(cloud.x.begin(), cloud.x.end());
  const auto [miny, maxy] = std::minmax_element(cloud.y.begin(), cloud.y.end());
  Raster grid = Raster::covering(*minx, *miny, *maxx, *maxy, cell_size);

  std::vector<std::vector<double>> per_cell(grid.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Cell c = grid.cell_of(cloud.x[i], cloud.y[i]);
    per_cell[grid.index(c.row, c.col)].push_back(cloud.z[i]);
  }

  std::vector<std::uint8_t> empty(grid.size(), 0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    auto& zs = per_cell[k];
    if (zs.empty()) {
      empty[k] = 1;
      continue;
    }
    const double floor_z = quantile(zs, 0.01) - 0.5;
    double ground = std::numeric_limits<double>::infinity();
    for (double z : zs)
      if (z >= floor_z)
        ground = std::min(ground, z);
    grid.values[k] = ground;
  }
  fill_empty_cells(grid, empty);
  return GroundModel(std::move(grid));
}

PointCloud normalize_heights(const PointCloud& cloud, const GroundModel& ground)
{
  PointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.z[i] = cloud.z[i] - ground.elevation(cloud.x[i], cloud.y[i]);
  return out;
}

PointCloud denormalize_heights(const PointCloud& cloud, const GroundModel& ground)
{
  PointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.z[i] = cloud.z[i] + ground.elevation(cloud.x[i], cloud.y[i]);
  return out;
}

} // namespace treeseg
