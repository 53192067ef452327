#pragma once

#include "treeseg/point_cloud.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace treeseg {

/// Per-point instance labelling.  0 means unassigned; instances are
/// 1..instance_count() after compact().  `confidence` is either empty or has
/// one entry per instance (confidence[id - 1]).
struct Segmentation
{
  Labels labels;
  std::vector<double> confidence;

  Segmentation() = default;
  explicit Segmentation(Labels l)
    : labels(std::move(l))
  {
  }

  std::size_t size() const { return labels.size(); }
  bool has_confidence() const { return !confidence.empty(); }

  /// Largest label present (equals the instance count once compacted).
  std::int32_t max_label() const;
  std::size_t instance_count() const;
  std::map<std::int32_t, std::size_t> counts() const;

  /// Relabels instances to 1..K in ascending order of their current id,
  /// carrying confidences along.
  void compact();
};

/// Instance labels of a cloud as a segmentation.
Segmentation ground_truth(const PointCloud& cloud);

/// Fraction of points whose predicted instance, mapped one-to-one onto the
/// ground-truth instance it overlaps most (greedy by overlap count), agrees
/// with the ground truth.  Label 0 maps to 0.
double label_agreement(const Labels& truth, const Labels& predicted);

} // namespace treeseg
