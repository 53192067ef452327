#include "oracles.hpp"

#include "treeseg/eval.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/tree_geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace treeseg;

namespace {

Segmentation seg_of(Labels l)
{
  return Segmentation(std::move(l));
}

MatchResult match_with(std::size_t tp, std::size_t fp, std::size_t fn)
{
  MatchResult m;
  std::int32_t g = 1, p = 1;
  for (std::size_t k = 0; k < tp; ++k) {
    m.pairs.push_back({ g, p++, 1.0 });
    m.max_iou[g++] = 1.0;
  }
  for (std::size_t k = 0; k < fp; ++k)
    m.unmatched_pred.push_back(p++);
  for (std::size_t k = 0; k < fn; ++k) {
    m.unmatched_gt.push_back(g);
    m.max_iou[g++] = 0.0;
  }
  return m;
}

} // namespace

TEST(Iou, SetCountingExamples)
{
  EXPECT_DOUBLE_EQ(compute_iou({ 1, 2, 3 }, { 3, 2, 1 }), 1.0);
  EXPECT_DOUBLE_EQ(compute_iou({ 1, 2 }, { 3, 4 }), 0.0);
  EXPECT_NEAR(compute_iou({ 0, 1, 2, 3, 4, 5 }, { 0, 1, 2, 3, 4, 9 }), 5.0 / 7.0, 1e-15);
  EXPECT_THROW(compute_iou({}, {}), std::invalid_argument);
}

TEST(IouTable, SerialAndParallelIdentical)
{
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto pair = oracles::random_label_pair(rng, 20, 5000);
    const auto a = iou_table(pair.gt, pair.pred, Exec::serial);
    const auto b = iou_table(pair.gt, pair.pred, Exec::parallel);
    EXPECT_EQ(a.intersection, b.intersection);
    EXPECT_EQ(a.gt_ids, b.gt_ids);
    EXPECT_EQ(a.pred_count, b.pred_count);
  }
}

TEST(Matching, IdentityAndEmpty)
{
  const Labels gt{ 1, 1, 2, 2, 0, 3 };
  const auto same = match_instances(seg_of(gt), seg_of(gt));
  EXPECT_EQ(same.tp(), 3u);
  for (const auto& p : same.pairs)
    EXPECT_EQ(p.iou, 1.0);
  const auto none = match_instances(seg_of(gt), seg_of(Labels(gt.size(), 0)));
  EXPECT_EQ(none.tp(), 0u);
  EXPECT_EQ(none.unmatched_gt, (std::vector<std::int32_t>{ 1, 2, 3 }));
  for (const auto& [g, v] : none.max_iou)
    EXPECT_EQ(v, 0.0);
  EXPECT_THROW(match_instances(seg_of(gt), seg_of(gt), 0.0), std::invalid_argument);
}

TEST(Matching, CrossingFixture)
{
  const Labels gt{ 1, 1, 1, 1, 1, 1, 2, 2, 2, 2 };
  const Labels pred{ 1, 1, 1, 1, 1, 0, 1, 2, 2, 2 };
  const auto m = match_instances(seg_of(gt), seg_of(pred));
  ASSERT_EQ(m.tp(), 2u);
  EXPECT_EQ(m.fp(), 0u);
  EXPECT_EQ(m.fn(), 0u);
  EXPECT_NEAR(m.pairs[0].iou, 5.0 / 7.0, 1e-15);
  EXPECT_NEAR(m.pairs[1].iou, 0.75, 1e-15);
}

TEST(Matching, AgreesWithBruteForceAssignment)
{
  std::mt19937_64 rng(2);
  for (int t = 0; t < 1000; ++t) {
    const auto pair = oracles::random_label_pair(rng);
    const auto m = match_instances(seg_of(pair.gt), seg_of(pair.pred), 0.5);
    ASSERT_EQ(m.pairs, oracles::brute_force_matching(pair.gt, pair.pred, 0.5)) << "fixture " << t;
    std::set<std::int32_t> preds;
    for (const auto& p : m.pairs)
      EXPECT_TRUE(preds.insert(p.pred).second);
  }
}

TEST(Matching, CandidatesInjectiveAboveOneHalf)
{
  // Injective without deduplication unless some IoU equals 0.5 exactly.
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto pair = oracles::random_label_pair(rng);
    const auto table = iou_table(pair.gt, pair.pred);
    bool exact_half = false;
    for (std::size_t g = 0; g < table.gt_ids.size(); ++g)
      for (std::size_t p = 0; p < table.pred_ids.size(); ++p)
        exact_half = exact_half || table.iou(g, p) == 0.5;
    const auto cands = candidate_pairs(table, 0.5);
    std::set<std::int32_t> preds;
    for (const auto& c : cands)
      preds.insert(c.pred);
    if (!exact_half)
      EXPECT_EQ(preds.size(), cands.size());
  }
  // the exact tie: one prediction covering two equal gts
  const auto tie = candidate_pairs(iou_table({ 1, 2 }, { 1, 1 }), 0.5);
  EXPECT_EQ(tie.size(), 2u);
  const auto m = match_instances(seg_of({ 1, 2 }), seg_of({ 1, 1 }));
  EXPECT_EQ(m.pairs, (std::vector<MatchPair>{ { 1, 1, 0.5 } }));
  EXPECT_EQ(m.unmatched_gt, (std::vector<std::int32_t>{ 2 }));
}

TEST(Matching, LowThresholdKeepsBestPairPerPrediction)
{
  // pred 1 overlaps gt 1 (IoU 3/5) and gt 2 (IoU 2/6)
  const Labels gt{ 1, 1, 1, 2, 2, 2 };
  const Labels pred{ 1, 1, 1, 1, 1, 0 };
  const auto m = match_instances(seg_of(gt), seg_of(pred), 0.3);
  EXPECT_EQ(m.pairs, (std::vector<MatchPair>{ { 1, 1, 0.6 } }));
  EXPECT_EQ(m.unmatched_gt, (std::vector<std::int32_t>{ 2 }));
  EXPECT_NEAR(m.max_iou.at(2), 1.0 / 3.0, 1e-15);
}

TEST(Metrics, FormulaExamples)
{
  const auto all = compute_metrics(match_with(3, 0, 0));
  EXPECT_EQ(all.precision, 1.0);
  EXPECT_EQ(all.recall, 1.0);
  EXPECT_EQ(all.f1, 1.0);

  const auto r = compute_metrics(match_with(2, 1, 2));
  EXPECT_NEAR(r.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.recall, 0.5, 1e-12);
  EXPECT_NEAR(r.f1, 4.0 / 7.0, 1e-12);

  MatchResult cov;
  cov.pairs = { { 1, 1, 1.0 } };
  cov.unmatched_gt = { 2 };
  cov.max_iou = { { 1, 1.0 }, { 2, 0.4 } };
  const auto c = compute_metrics(cov);
  EXPECT_NEAR(c.recall, 0.5, 1e-12);
  EXPECT_NEAR(c.coverage, 0.7, 1e-12);

  const auto empty = compute_metrics(MatchResult{});
  EXPECT_EQ(empty.f1, 0.0);
}

TEST(Metrics, CategoryRecallUsesOnlyThatCategory)
{
  const auto m = match_with(2, 0, 2); // gts 1, 2 matched; 3, 4 missed
  const std::vector<TreeRecord> trees{ { 1, 0, 0, 10, CrownCategory::A },
                                       { 2, 0, 0, 10, CrownCategory::D },
                                       { 3, 0, 0, 10, CrownCategory::D },
                                       { 4, 0, 0, 10, CrownCategory::D } };
  const auto r = compute_metrics(m, trees);
  EXPECT_EQ(r.category_recall[0], 1.0);
  EXPECT_FALSE(r.category_recall[1].has_value());
  EXPECT_FALSE(r.category_recall[2].has_value());
  EXPECT_NEAR(*r.category_recall[3], 1.0 / 3.0, 1e-12);
}

TEST(Metrics, CountingIdentitiesAndCoverageBounds)
{
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    const auto pair = oracles::random_label_pair(rng);
    Segmentation pred = seg_of(pair.pred);
    pred.compact();
    const auto m = match_instances(seg_of(pair.gt), pred);
    const auto r = compute_metrics(m);
    EXPECT_EQ(r.tp + r.fp, pred.instance_count());
    EXPECT_EQ(r.tp + r.fn, seg_of(pair.gt).instance_count());
    EXPECT_GE(r.coverage + 1e-12, r.recall * 0.5);
    if (r.precision + r.recall > 0)
      EXPECT_NEAR(r.f1, 2 * r.precision * r.recall / (r.precision + r.recall), 1e-15);
  }
}

TEST(Metrics, CoverageInvariantToRelabelling)
{
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto pair = oracles::random_label_pair(rng);
    const auto base = compute_metrics(match_instances(seg_of(pair.gt), seg_of(pair.pred)));
    std::int32_t top = *std::max_element(pair.pred.begin(), pair.pred.end());
    std::vector<std::int32_t> perm(static_cast<std::size_t>(top) + 1);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin() + 1, perm.end(), rng);
    Labels relabelled = pair.pred;
    for (auto& l : relabelled)
      l = perm[static_cast<std::size_t>(l)];
    const auto again = compute_metrics(match_instances(seg_of(pair.gt), seg_of(relabelled)));
    EXPECT_NEAR(again.coverage, base.coverage, 1e-12);
    EXPECT_EQ(again.tp, base.tp);
  }
}

TEST(AveragePrecision, Examples)
{
  Segmentation perfect({ 1, 1, 2, 2, 3 });
  perfect.confidence = { 0.2, 0.9, 0.5 };
  EXPECT_DOUBLE_EQ(average_precision(seg_of({ 1, 1, 2, 2, 3 }), perfect), 1.0);

  Segmentation tp_fp({ 1, 1, 1, 2, 2 });
  tp_fp.confidence = { 0.9, 0.8 };
  EXPECT_DOUBLE_EQ(average_precision(seg_of({ 1, 1, 1, 0, 0 }), tp_fp), 1.0);

  Segmentation tied({ 1, 1, 2, 2, 3, 3, 4, 4 });
  tied.confidence = { 0.5, 0.5, 0.5, 0.5 };
  EXPECT_DOUBLE_EQ(average_precision(seg_of({ 1, 1, 2, 2, 3, 3, 0, 0 }), tied), 0.75);

  EXPECT_THROW(average_precision(seg_of({ 1, 1 }), seg_of({ 1, 1 })), std::invalid_argument);
}

TEST(AveragePrecision, MatchesExhaustivePrIntegration)
{
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    const auto pair = oracles::random_label_pair(rng, 5, 200);
    Segmentation pred = seg_of(pair.pred);
    pred.compact();
    ASSERT_LE(pred.instance_count(), 6u);
    for (std::size_t k = 0; k < pred.instance_count(); ++k)
      pred.confidence.push_back(static_cast<double>(rng() % 5) / 4.0);
    const double got = average_precision(seg_of(pair.gt), pred);
    EXPECT_NEAR(got, oracles::brute_force_ap(pair.gt, pred.labels, pred.confidence, 0.5), 1e-9) << "fixture " << t;
  }
}

TEST(Postfilter, ConjunctionOfSizeAndExtent)
{
  auto fixture = [](int n, double extent) {
    PointCloud c;
    for (int i = 0; i < n; ++i)
      c.push_back({ 0, 0, 10.0 + extent * i / (n - 1) });
    return c;
  };
  for (auto [n, extent, removed] : { std::tuple{ 39, 1.4, true }, { 39, 2.0, false }, { 40, 1.4, false } }) {
    const auto cloud = fixture(n, extent);
    const auto out = postfilter_segments(seg_of(Labels(cloud.size(), 1)), cloud);
    EXPECT_EQ(out.instance_count(), removed ? 0u : 1u) << n << " " << extent;
  }
}

TEST(FilterSmallGt, Boundary)
{
  EXPECT_EQ(filter_small_gt(seg_of({ 1, 1, 1, 1, 2, 2, 2, 2, 2 })).labels, (Labels{ 0, 0, 0, 0, 2, 2, 2, 2, 2 }));
  EXPECT_EQ(filter_small_gt(seg_of({})).labels, Labels{});
  EXPECT_EQ(filter_small_gt(seg_of({ 0, 0 })).labels, (Labels{ 0, 0 }));
}

TEST(MetricsJson, ExactKeys)
{
  const auto j = metrics_to_json(compute_metrics(match_with(1, 1, 1)));
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items())
    keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{ "precision", "recall", "f1", "coverage", "ap50", "recall_A", "recall_B",
                                          "recall_C", "recall_D", "tp", "fp", "fn" }));
  EXPECT_TRUE(j["ap50"].is_null());
  EXPECT_EQ(j["tp"], 1);
}

TEST(LabelAgreement, PermutationInvariant)
{
  EXPECT_DOUBLE_EQ(label_agreement({ 1, 1, 2, 2, 0 }, { 5, 5, 3, 3, 0 }), 1.0);
  EXPECT_DOUBLE_EQ(label_agreement({ 1, 1, 2, 2 }, { 1, 1, 1, 1 }), 0.5);
}
