#pragma once

#include "treeseg/execution.hpp"
#include "treeseg/point_cloud.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace treeseg {

/// Mean distance from each point to its k nearest neighbours (self excluded).
std::vector<double> mean_neighbor_distances(const PointCloud& cloud, int k, Exec exec = Exec::parallel);

/// Drops point i when its mean k-NN distance exceeds mu + std_ratio * sigma,
/// where mu and sigma (sample standard deviation) are taken over all points.
/// Single pass; relative order is preserved.
PointCloud remove_statistical_outliers(const PointCloud& cloud, int k, double std_ratio);

/// Ordinals kept by downsample_to_density (ascending).  Every point draws one
/// random key from `seed` and the smallest keys win, so for a fixed seed the
/// selection at a lower target is a subset of the selection at a higher one.
std::vector<std::size_t> density_sample_indices(std::size_t point_count, double area_m2, double target, std::uint64_t seed);

/// Uniform sampling without replacement down to round(target * area) points;
/// returns the input unchanged when it is already at or below the target.
PointCloud downsample_to_density(const PointCloud& cloud, const PlotGeometry& plot, double target, std::uint64_t seed);

/// Linear-interpolation quantile (numpy's default) of an unsorted sample.
double quantile(std::vector<double> values, double q);

/// Median/IQR standardisation followed by min-max scaling to [0, 1].
/// Missing values (kMissingReflectance) pass through.  A zero IQR or a zero
/// spread maps every present value to 0.
std::vector<double> normalize_reflectance_iqr(std::span<const double> values);

/// Label of the single nearest source point for every target point; ties go
/// to the lowest source ordinal.
Labels nearest_neighbor_transfer(const PointCloud& source, const PointCloud& target);

} // namespace treeseg
