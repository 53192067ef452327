#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace treeseg {

struct Cell
{
  int row = 0;
  int col = 0;

  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

/// Row-major single-band grid.  Row 0 is the southern-most row; cell (r, c)
/// covers [origin_x + c*res, origin_x + (c+1)*res) x [origin_y + r*res, ...).
struct Raster
{
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 1.0;
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> background;

  Raster() = default;
  Raster(double ox, double oy, double res, int w, int h, double fill = 0.0);

  /// Grid whose cells cover [min_x, max_x] x [min_y, max_y].
  static Raster covering(double min_x, double min_y, double max_x, double max_y, double res, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * width + c; }
  bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }

  double& at(int r, int c) { return values[index(r, c)]; }
  double at(int r, int c) const { return values[index(r, c)]; }
  bool is_background(int r, int c) const { return background[index(r, c)] != 0; }

  double center_x(int c) const { return origin_x + (c + 0.5) * resolution; }
  double center_y(int r) const { return origin_y + (r + 0.5) * resolution; }

  /// Cell containing (x, y), clamped to the grid.
  Cell cell_of(double x, double y) const;
  /// True if (x, y) lies inside the grid extent (with a small tolerance).
  bool contains(double x, double y) const;

  /// Bilinear interpolation between cell centres, clamped at the border.
  double sample_bilinear(double x, double y) const;

  bool same_grid(const Raster& other) const;
};

/// Fills the cells flagged in `empty` from populated cells: each empty cell
/// takes the average of the linear interpolations along its row and along
/// its column between the nearest populated cells on either side.  Cells
/// with no bracketing pair in either direction take the value of the
/// nearest populated cell (4-connected breadth-first order).
void fill_empty_cells(Raster& raster, const std::vector<std::uint8_t>& empty);

/// ESRI ASCII grid (north row first).  Background cells are written as nodata.
std::string format_ascii_grid(const Raster& raster, double nodata = -9999.0);
void save_ascii_grid(const Raster& raster, const std::filesystem::path& path, double nodata = -9999.0);
Raster parse_ascii_grid(const std::string& text);

} // namespace treeseg
