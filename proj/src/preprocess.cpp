#include "treeseg/preprocess.hpp"

#include "treeseg/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace treeseg {

std::vector<double> mean_neighbor_distances(const PointCloud& cloud, int k, Exec exec)
{
  const KdTree3 tree(xyz_points(cloud));
  const auto neighbours = knn_self(tree, static_cast<std::size_t>(k), exec);
  std::vector<double> mean(cloud.size(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double s = 0.0;
    for (const auto& n : neighbours[i])
      s += std::sqrt(n.dist2);
    mean[i] = neighbours[i].empty() ? 0.0 : s / static_cast<double>(neighbours[i].size());
  }
  return mean;
}

PointCloud remove_statistical_outliers(const PointCloud& cloud, int k, double std_ratio)
{
  if (k < 1)
    throw std::invalid_argument("remove_statistical_outliers: k must be >= 1");
  if (!(std_ratio > 0.0))
    throw std::invalid_argument("remove_statistical_outliers: std_ratio must be positive");
  if (static_cast<std::size_t>(k) >= cloud.size())
    throw std::invalid_argument("remove_statistical_outliers: k must be smaller than the point count");

  const auto d = mean_neighbor_distances(cloud, k);
  const double n = static_cast<double>(d.size());
  const double mu = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d)
    ss += (v - mu) * (v - mu);
  const double sigma = d.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double limit = mu + std_ratio * sigma;

  std::vector<std::size_t> keep;
  keep.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(d[i] > limit))
      keep.push_back(i);
  return cloud.subset(keep);
}

std::vector<std::size_t> density_sample_indices(std::size_t point_count, double area_m2, double target, std::uint64_t seed)
{
  if (!(target > 0.0))
    throw std::invalid_argument("downsample_to_density: target must be positive");
  std::vector<std::size_t> all(point_count);
  std::iota(all.begin(), all.end(), std::size_t{ 0 });
  if (static_cast<double>(point_count) / area_m2 <= target)
    return all;

  const auto m = static_cast<std::size_t>(std::llround(target * area_m2));
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> key(point_count);
  for (auto& k : key)
    k = rng();
  auto by_key = [&](std::size_t a, std::size_t b) { return key[a] < key[b] || (key[a] == key[b] && a < b); };
  if (m < point_count)
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(), by_key);
  all.resize(std::min(m, point_count));
  std::sort(all.begin(), all.end());
  return all;
}

PointCloud downsample_to_density(const PointCloud& cloud, const PlotGeometry& plot, double target, std::uint64_t seed)
{
  const auto keep = density_sample_indices(cloud.size(), plot.area_m2(), target, seed);
  if (keep.size() == cloud.size())
    return cloud;
  return cloud.subset(keep);
}

double quantile(std::vector<double> values, double q)
{
  if (values.empty())
    throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> normalize_reflectance_iqr(std::span<const double> values)
{
  std::vector<double> present;
  for (double v : values)
    if (v != kMissingReflectance)
      present.push_back(v);
  if (present.empty())
    throw std::invalid_argument("normalize_reflectance_iqr: all values missing");

  const double median = quantile(present, 0.5);
  const double iqr = quantile(present, 0.75) - quantile(present, 0.25);
  std::vector<double> out(values.begin(), values.end());
  if (iqr == 0.0) {
    for (double& v : out)
      if (v != kMissingReflectance)
        v = 0.0;
    return out;
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : present) {
    lo = std::min(lo, (v - median) / iqr);
    hi = std::max(hi, (v - median) / iqr);
  }
  for (double& v : out) {
    if (v == kMissingReflectance)
      continue;
    v = hi > lo ? ((v - median) / iqr - lo) / (hi - lo) : 0.0;
  }
  return out;
}

Labels nearest_neighbor_transfer(const PointCloud& source, const PointCloud& target)
{
  if (source.empty())
    throw std::invalid_argument("nearest_neighbor_transfer: empty source");
  const KdTree3 tree(xyz_points(source));
  Labels out(target.size(), 0);
  const auto n = static_cast<std::ptrdiff_t>(target.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto nn = tree.nearest({ target.x[i], target.y[i], target.z[i] });
    out[i] = source.instance_id[nn.index];
  }
  return out;
}

} // namespace treeseg
