#include "treeseg/watershed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>

namespace treeseg {

void WatershedParams::validate() const
{
  if (!(resolution >= 0.05 && resolution <= 1.0))
    throw std::invalid_argument("watershed: resolution must lie in [0.05, 1.0]");
  if (!(sigma >= 0.1 && sigma <= 6.0))
    throw std::invalid_argument("watershed: sigma must lie in [0.1, 6.0]");
  for (int w : { window_gf, window_mf })
    if (w % 2 == 0 || w < 3 || w > 41)
      throw std::invalid_argument("watershed: windows must be odd and in [3, 41], got " + std::to_string(w));
}

Raster build_chm(const PointCloud& normalized, double resolution)
{
  if (normalized.empty())
    throw std::invalid_argument("build_chm: empty cloud");
  const auto [xlo, xhi] = std::minmax_element(normalized.x.begin(), normalized.x.end());
  const auto [ylo, yhi] = std::minmax_element(normalized.y.begin(), normalized.y.end());
  Raster chm = Raster::covering(*xlo, *ylo, *xhi, *yhi, resolution, -std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> empty(chm.size(), 1);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const auto [r, c] = chm.cell_of(normalized.x[i], normalized.y[i]);
    const auto k = chm.index(r, c);
    chm.values[k] = std::max(chm.values[k], normalized.z[i]);
    empty[k] = 0;
  }
  fill_empty_cells(chm, empty);
  for (std::size_t k = 0; k < chm.size(); ++k)
    chm.background[k] = chm.values[k] < kCanopyFloor ? 1 : 0;
  return chm;
}

Raster gaussian_smooth(const Raster& chm, double sigma, int window, Exec exec)
{
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("gaussian_smooth: window must be odd");
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian_smooth: sigma must be positive");
  const int half = window / 2;
  const double s_px = sigma / chm.resolution;
  std::vector<double> kernel(static_cast<std::size_t>(window) * window);
  for (int dr = -half; dr <= half; ++dr)
    for (int dc = -half; dc <= half; ++dc)
      kernel[static_cast<std::size_t>((dr + half) * window + dc + half)] =
        std::exp(-(dr * dr + dc * dc) / (2.0 * s_px * s_px));

  Raster out = chm;
  auto smooth_row = [&](int r) {
    for (int c = 0; c < chm.width; ++c) {
      if (chm.is_background(r, c))
        continue;
      double acc = 0.0, wsum = 0.0;
      for (int dr = -half; dr <= half; ++dr) {
        for (int dc = -half; dc <= half; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (!chm.in_bounds(rr, cc) || chm.is_background(rr, cc))
            continue;
          const double w = kernel[static_cast<std::size_t>((dr + half) * window + dc + half)];
          acc += w * chm.at(rr, cc);
          wsum += w;
        }
      }
      out.at(r, c) = acc / wsum;
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < chm.height; ++r)
      smooth_row(r);
  } else {
    for (int r = 0; r < chm.height; ++r)
      smooth_row(r);
  }
  return out;
}

std::vector<Peak> find_local_maxima(const Raster& chm, int window)
{
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("find_local_maxima: window must be odd");
  const int half = window / 2;
  std::vector<std::uint8_t> candidate(chm.size(), 0);
  for (int r = 0; r < chm.height; ++r) {
    for (int c = 0; c < chm.width; ++c) {
      if (chm.is_background(r, c))
        continue;
      const double v = chm.at(r, c);
      bool is_max = true;
      for (int dr = -half; dr <= half && is_max; ++dr)
        for (int dc = -half; dc <= half && is_max; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (chm.in_bounds(rr, cc) && !chm.is_background(rr, cc) && chm.at(rr, cc) > v)
            is_max = false;
        }
      candidate[chm.index(r, c)] = is_max ? 1 : 0;
    }
  }

  // Row-major scan visits each plateau first at its smallest (row, col).
  std::vector<Peak> peaks;
  std::vector<std::uint8_t> seen(chm.size(), 0);
  std::vector<Cell> stack;
  for (int r = 0; r < chm.height; ++r) {
    for (int c = 0; c < chm.width; ++c) {
      const auto k = chm.index(r, c);
      if (!candidate[k] || seen[k])
        continue;
      const double v = chm.at(r, c);
      peaks.push_back({ { r, c }, v });
      seen[k] = 1;
      stack.assign(1, { r, c });
      while (!stack.empty()) {
        const Cell cur = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = cur.row + dr, cc = cur.col + dc;
            if (!chm.in_bounds(rr, cc))
              continue;
            const auto j = chm.index(rr, cc);
            if (candidate[j] && !seen[j] && chm.values[j] == v) {
              seen[j] = 1;
              stack.push_back({ rr, cc });
            }
          }
      }
    }
  }
  return peaks;
}

std::vector<std::int32_t> marker_watershed(const Raster& chm, const std::vector<Peak>& markers)
{
  std::vector<std::int32_t> label(chm.size(), 0);
  // (height, -insertion order, cell index): highest first, FIFO among equals.
  using Entry = std::tuple<double, std::int64_t, std::size_t>;
  std::priority_queue<Entry> queue;
  std::int64_t counter = 0;
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const auto k = chm.index(markers[m].cell.row, markers[m].cell.col);
    if (chm.background[k] || label[k] != 0)
      continue;
    label[k] = static_cast<std::int32_t>(m + 1);
    queue.emplace(chm.values[k], -counter++, k);
  }
  while (!queue.empty()) {
    const auto [h, order, k] = queue.top();
    queue.pop();
    const int r = static_cast<int>(k / chm.width), c = static_cast<int>(k % chm.width);
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if ((dr == 0 && dc == 0) || !chm.in_bounds(rr, cc))
          continue;
        const auto j = chm.index(rr, cc);
        if (chm.background[j] || label[j] != 0)
          continue;
        label[j] = label[k];
        queue.emplace(chm.values[j], -counter++, j);
      }
  }
  return label;
}

Segmentation watershed_its(const PointCloud& cloud, const GroundModel& ground, const WatershedParams& params)
{
  params.validate();
  Segmentation seg(Labels(cloud.size(), 0));
  if (cloud.empty())
    return seg;
  const PointCloud norm = normalize_heights(cloud, ground);
  const Raster chm = build_chm(norm, params.resolution);
  const Raster smooth = gaussian_smooth(chm, params.sigma, params.window_gf);
  const auto peaks = find_local_maxima(smooth, params.window_mf);
  if (peaks.empty())
    return seg;
  const auto cell_label = marker_watershed(smooth, peaks);
  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (norm.z[i] < kCanopyFloor)
      continue;
    const auto [r, c] = smooth.cell_of(norm.x[i], norm.y[i]);
    seg.labels[i] = cell_label[smooth.index(r, c)];
  }
  seg.compact();
  return seg;
}

} // namespace treeseg
