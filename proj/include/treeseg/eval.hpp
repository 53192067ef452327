#pragma once

#include "treeseg/execution.hpp"
#include "treeseg/point_cloud.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/tree_geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace treeseg {

/// |A ∩ B| / (|A| + |B| - |A ∩ B|) of two sets of point ordinals.
double compute_iou(std::vector<std::size_t> gt, std::vector<std::size_t> pred);

/// Point counts of every instance pair of two labellings of one cloud.
struct IoUTable
{
  std::vector<std::int32_t> gt_ids;
  std::vector<std::int32_t> pred_ids;
  std::vector<std::size_t> gt_count;
  std::vector<std::size_t> pred_count;
  /// Row-major gt x pred intersection counts.
  std::vector<std::size_t> intersection;

  double iou(std::size_t g, std::size_t p) const;
};

IoUTable iou_table(const Labels& gt, const Labels& pred, Exec exec = Exec::parallel);

struct MatchPair
{
  std::int32_t gt = 0;
  std::int32_t pred = 0;
  double iou = 0.0;

  bool operator==(const MatchPair&) const = default;
};

struct MatchResult
{
  /// Ascending by gt id.
  std::vector<MatchPair> pairs;
  std::vector<std::int32_t> unmatched_gt;
  std::vector<std::int32_t> unmatched_pred;
  /// maxIoU of every gt instance (0 when there are no predictions).
  std::map<std::int32_t, double> max_iou;

  std::size_t tp() const { return pairs.size(); }
  std::size_t fp() const { return unmatched_pred.size(); }
  std::size_t fn() const { return unmatched_gt.size(); }
};

/// Every gt paired with its best prediction (ties: lowest pred id) when
/// that IoU reaches the threshold, before enforcing uniqueness.
std::vector<MatchPair> candidate_pairs(const IoUTable& table, double iou_thresh);

/// candidate_pairs, then a prediction claimed by several gts keeps only its
/// highest-IoU pair (ties: lowest gt id).
MatchResult match_instances(const Segmentation& gt, const Segmentation& pred, double iou_thresh = 0.5);
MatchResult match_instances(const IoUTable& table, double iou_thresh = 0.5);

struct MetricsReport
{
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double coverage = 0.0;
  std::optional<double> ap50;
  /// Indexed A, B, C, D; empty when no gt of that category was scored.
  std::array<std::optional<double>, 4> category_recall;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Pools TP/FP/FN, per-category counts and maxIoU values over any number of
/// plots; report() computes the metrics over the pooled totals.
class MetricsAccumulator
{
public:
  /// `trees` supplies the category of each gt id (missing ids are
  /// uncategorised).
  void add(const MatchResult& match, std::span<const TreeRecord> trees = {});
  MetricsReport report() const;

private:
  std::size_t tp_ = 0, fp_ = 0, fn_ = 0;
  std::array<std::size_t, 4> cat_tp_{};
  std::array<std::size_t, 4> cat_fn_{};
  double max_iou_sum_ = 0.0;
  std::size_t gt_total_ = 0;
};

MetricsReport compute_metrics(const MatchResult& match, std::span<const TreeRecord> trees = {});

/// Highest-confidence-first matching: each gt in ascending id order takes
/// the most confident unmatched prediction overlapping it with IoU at or
/// above the threshold.  Returns pred id -> gt id.
std::map<std::int32_t, std::int32_t> confidence_matching(const IoUTable& table, const std::vector<double>& confidence,
                                                         double iou_thresh);

/// Area under the interpolated precision envelope of the precision-recall
/// curve traced over descending confidence.  Requires confidences.
double average_precision(const Segmentation& gt, const Segmentation& pred, double iou_thresh = 0.5);

/// Predicted instances with fewer than 40 points and a z extent under 1.5 m.
Segmentation postfilter_segments(const Segmentation& pred, const PointCloud& cloud);

/// Gt instances with fewer than `min_points` points become 0.
Segmentation filter_small_gt(const Segmentation& gt, int min_points = 5);

/// Flat JSON object with precision, recall, f1, coverage, ap50,
/// recall_A..recall_D, tp, fp, fn (undefined values are null).
nlohmann::json metrics_to_json(const MetricsReport& report);

} // namespace treeseg
