#include "treeseg/raster.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace treeseg {

Raster::Raster(double ox, double oy, double res, int w, int h, double fill)
  : origin_x(ox)
  , origin_y(oy)
  , resolution(res)
  , width(w)
  , height(h)
{
  if (!(res > 0.0))
    throw std::invalid_argument("Raster: resolution must be positive");
  if (w <= 0 || h <= 0)
    throw std::invalid_argument("Raster: empty grid");
  values.assign(static_cast<std::size_t>(w) * h, fill);
  background.assign(values.size(), 0);
}

Raster Raster::covering(double min_x, double min_y, double max_x, double max_y, double res, double fill)
{
  if (!(res > 0.0))
    throw std::invalid_argument("Raster: resolution must be positive");
  const int w = static_cast<int>(std::floor((max_x - min_x) / res)) + 1;
  const int h = static_cast<int>(std::floor((max_y - min_y) / res)) + 1;
  return Raster(min_x, min_y, res, w, h, fill);
}

Cell Raster::cell_of(double x, double y) const
{
  int c = static_cast<int>(std::floor((x - origin_x) / resolution));
  int r = static_cast<int>(std::floor((y - origin_y) / resolution));
  c = std::clamp(c, 0, width - 1);
  r = std::clamp(r, 0, height - 1);
  return { r, c };
}

bool Raster::contains(double x, double y) const
{
  const double eps = 1e-9 * std::max(1.0, resolution);
  return x >= origin_x - eps && y >= origin_y - eps && x <= origin_x + width * resolution + eps &&
         y <= origin_y + height * resolution + eps;
}

double Raster::sample_bilinear(double x, double y) const
{
  const double fx = std::clamp((x - origin_x) / resolution - 0.5, 0.0, static_cast<double>(width - 1));
  const double fy = std::clamp((y - origin_y) / resolution - 0.5, 0.0, static_cast<double>(height - 1));
  const int c0 = static_cast<int>(std::floor(fx));
  const int r0 = static_cast<int>(std::floor(fy));
  const int c1 = std::min(c0 + 1, width - 1);
  const int r1 = std::min(r0 + 1, height - 1);
  const double tx = fx - c0, ty = fy - r0;
  const double bottom = at(r0, c0) * (1.0 - tx) + at(r0, c1) * tx;
  const double top = at(r1, c0) * (1.0 - tx) + at(r1, c1) * tx;
  return bottom * (1.0 - ty) + top * ty;
}

bool Raster::same_grid(const Raster& other) const
{
  return origin_x == other.origin_x && origin_y == other.origin_y && resolution == other.resolution &&
         width == other.width && height == other.height;
}

void fill_empty_cells(Raster& raster, const std::vector<std::uint8_t>& empty)
{
  const int w = raster.width, h = raster.height;
  std::vector<double> sum(raster.size(), 0.0);
  std::vector<int> hits(raster.size(), 0);

  // Row-wise then column-wise linear interpolation between bracketing cells.
  auto sweep = [&](int lines, int length, auto idx) {
    for (int line = 0; line < lines; ++line) {
      int prev = -1;
      for (int k = 0; k < length; ++k) {
        if (empty[idx(line, k)])
          continue;
        if (prev >= 0 && k - prev > 1) {
          const double a = raster.values[idx(line, prev)], b = raster.values[idx(line, k)];
          for (int m = prev + 1; m < k; ++m) {
            const double t = static_cast<double>(m - prev) / (k - prev);
            sum[idx(line, m)] += a + t * (b - a);
            ++hits[idx(line, m)];
          }
        }
        prev = k;
      }
    }
  };
  sweep(h, w, [&](int r, int c) { return raster.index(r, c); });
  sweep(w, h, [&](int c, int r) { return raster.index(r, c); });

  std::vector<std::uint8_t> known(raster.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < raster.size(); ++i) {
    if (!empty[i]) {
      known[i] = 1;
    } else if (hits[i] > 0) {
      raster.values[i] = sum[i] / hits[i];
      known[i] = 1;
    }
    if (known[i])
      queue.push_back(i);
  }
  if (queue.empty())
    return;

  // Remaining cells: nearest known value, breadth first.
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int r = static_cast<int>(i / w), c = static_cast<int>(i % w);
    constexpr std::array<std::array<int, 2>, 4> steps = { { { -1, 0 }, { 0, -1 }, { 0, 1 }, { 1, 0 } } };
    for (auto [dr, dc] : steps) {
      const int rr = r + dr, cc = c + dc;
      if (!raster.in_bounds(rr, cc))
        continue;
      const std::size_t j = raster.index(rr, cc);
      if (known[j])
        continue;
      known[j] = 1;
      raster.values[j] = raster.values[i];
      queue.push_back(j);
    }
  }
}

namespace {

void append_number(std::string& out, double v)
{
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), res.ptr);
}

} // namespace

std::string format_ascii_grid(const Raster& raster, double nodata)
{
  std::string out;
  out += "ncols " + std::to_string(raster.width) + "\n";
  out += "nrows " + std::to_string(raster.height) + "\n";
  out += "xllcorner ";
  append_number(out, raster.origin_x);
  out += "\nyllcorner ";
  append_number(out, raster.origin_y);
  out += "\ncellsize ";
  append_number(out, raster.resolution);
  out += "\nNODATA_value ";
  append_number(out, nodata);
  out += "\n";
  for (int r = raster.height - 1; r >= 0; --r) {
    for (int c = 0; c < raster.width; ++c) {
      if (c)
        out += ' ';
      append_number(out, raster.is_background(r, c) ? nodata : raster.at(r, c));
    }
    out += '\n';
  }
  return out;
}

void save_ascii_grid(const Raster& raster, const std::filesystem::path& path, double nodata)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << format_ascii_grid(raster, nodata);
}

Raster parse_ascii_grid(const std::string& text)
{
  std::istringstream in(text);
  std::string key;
  int ncols = 0, nrows = 0;
  double xll = 0, yll = 0, cell = 0, nodata = -9999.0;
  for (int k = 0; k < 6; ++k) {
    in >> key;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (key == "ncols")
      in >> ncols;
    else if (key == "nrows")
      in >> nrows;
    else if (key == "xllcorner")
      in >> xll;
    else if (key == "yllcorner")
      in >> yll;
    else if (key == "cellsize")
      in >> cell;
    else if (key == "nodata_value")
      in >> nodata;
    else
      throw std::runtime_error("ascii grid: unexpected header key " + key);
  }
  Raster raster(xll, yll, cell, ncols, nrows);
  for (int r = nrows - 1; r >= 0; --r) {
    for (int c = 0; c < ncols; ++c) {
      double v = 0;
      if (!(in >> v))
        throw std::runtime_error("ascii grid: truncated body");
      raster.at(r, c) = v;
      raster.background[raster.index(r, c)] = v == nodata ? 1 : 0;
    }
  }
  return raster;
}

} // namespace treeseg
