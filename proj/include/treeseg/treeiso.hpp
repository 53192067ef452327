#pragma once

#include "treeseg/cut_pursuit.hpp"
#include "treeseg/point_cloud.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/terrain.hpp"

#include <cstdint>
#include <vector>

namespace treeseg {

struct TreeisoParams
{
  int K1 = 5;
  int K2 = 20;
  double lambda1 = 1.0;
  double lambda2 = 20.0;
  double rho_zmax = 0.5;
  double w_rho = 0.5;

  void validate() const;
};

/// Partition of the points of a cloud into clusters 0..count-1.
struct ClusterSet
{
  std::vector<int> cluster;
  std::size_t count = 0;

  static ClusterSet from_labels(std::vector<int> labels);
};

/// Highest base z' a stem cluster may have.
inline constexpr double kStemBaseMax = 1.5;

/// Candidate stems considered per cluster in merge_by_rho_score.
inline constexpr std::size_t kRhoCandidates = 5;

/// First stage: cut pursuit over the K-NN graph of the xyz coordinates.
ClusterSet stage1_cluster(const PointCloud& cloud, int K1, double lambda1);

/// Second stage: cut pursuit over the xy centroids of the clusters,
/// weighted by point count, on their K2-NN graph (K2 clamped to count-1).
ClusterSet stage2_cluster(const PointCloud& cloud, const ClusterSet& clusters, int K2, double lambda2);

/// A cluster is a stem when its z extent over the extent along its principal
/// axis is at least rho_zmax and its lowest z' is within kStemBaseMax of the
/// ground.  `normalized` holds height-normalised coordinates.
std::vector<std::uint8_t> identify_stems(const PointCloud& normalized, const ClusterSet& clusters, double rho_zmax);

/// z extent / principal-axis extent of a point set (0 for fewer than 2 points).
double verticality_ratio(const PointCloud& cloud, const std::vector<std::size_t>& members);

struct RhoComponents
{
  double vertical_overlap = 0.0;
  double horizontal_overlap = 0.0;
  double gap = 0.0;
  double centroid_distance = 0.0;
};

/// rho = vo + w_rho * ho - gap - cd with every component min-max scaled over
/// the candidate set (a constant component scales to 0).
std::vector<double> rho_scores(const std::vector<RhoComponents>& candidates, double w_rho);

/// Merges every non-stem cluster into a stem, always taking the globally
/// highest rho_score next.  Instances are numbered by stem.  Without any
/// stem, the largest cluster is promoted.
Segmentation merge_by_rho_score(const PointCloud& normalized, const ClusterSet& clusters,
                                std::vector<std::uint8_t> stems, double w_rho);

Segmentation treeiso_segment(const PointCloud& cloud, const GroundModel& ground, const TreeisoParams& params);

} // namespace treeseg
