#pragma once

#include "treeseg/execution.hpp"
#include "treeseg/point_cloud.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/spatial_index.hpp"
#include "treeseg/terrain.hpp"

#include <cstdint>
#include <vector>

namespace treeseg {

/// Points with z' below this are treated as ground by the segmenters.
inline constexpr double kGroundClearance = 0.5;

struct AMS3DParams
{
  double s_s = 0.3;
  double s_z = 0.4;
  double work_density = 100.0;
  int merge_min_points = 50;
  double merge_dist_thresh = 1.0;
  double tol = 1e-3;
  int max_iter = 100;

  void validate() const;
};

struct MeanShiftResult
{
  Point3 mode;
  int iterations = 0;
  bool converged = false;
  /// Kernel support was empty at the start point.
  bool empty_support = false;
  /// Length of every step taken, in order.
  std::vector<double> steps;
};

/// Adaptive mean shift from `start`: each iteration moves to the kernel
/// weighted mean of the points inside a cylinder of radius s_s*z and
/// half-height s_z*z (z of the current position), weighting each point by
/// (1 - r^2/h_s^2) * (1 - dz^2/h_z^2).
MeanShiftResult mean_shift_converge(const Point3& start, const PointCloud& cloud, double s_s, double s_z,
                                    double tol = 1e-3, int max_iter = 100);
MeanShiftResult mean_shift_converge(const Point3& start, const KdTree3& index, double s_s, double s_z,
                                    double tol = 1e-3, int max_iter = 100);

/// Mean shift from every point of a height-normalised cloud.
std::vector<MeanShiftResult> mean_shift_all(const PointCloud& normalized, double s_s, double s_z, double tol,
                                            int max_iter, Exec exec = Exec::parallel);

/// Clusters points by their modes: modes are visited from the highest down
/// and join the first existing group whose representative lies within
/// 0.5*s_s*z_rep horizontally (the nearest such group wins).
Labels group_modes(const std::vector<MeanShiftResult>& modes, double s_s, double s_z);

/// Weighted distance used by merge_small_segments.
inline constexpr double kVerticalMergeWeight = 2.0;

/// Small-segment merging in height-normalised space.  Segments under
/// `min_points` are processed in ascending size (then id).  For each, the
/// distance to every other segment centroid is d_h + 2*|d_z|; it merges into
/// the nearest one when that distance is below `dist_thresh` or below its own
/// centroid height, otherwise it leaves the worklist.  Unlabelled points
/// (0) are ignored.
Segmentation merge_small_segments(const Segmentation& seg, const PointCloud& cloud, const GroundModel& ground,
                                  int min_points, double dist_thresh);

Segmentation ams3d_segment(const PointCloud& cloud, const GroundModel& ground, const AMS3DParams& params,
                           std::uint64_t seed);

} // namespace treeseg
