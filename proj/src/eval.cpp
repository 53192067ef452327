#include "treeseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace treeseg {

double compute_iou(std::vector<std::size_t> gt, std::vector<std::size_t> pred)
{
  if (gt.empty() && pred.empty())
    throw std::invalid_argument("compute_iou: both sets are empty");
  std::sort(gt.begin(), gt.end());
  gt.erase(std::unique(gt.begin(), gt.end()), gt.end());
  std::sort(pred.begin(), pred.end());
  pred.erase(std::unique(pred.begin(), pred.end()), pred.end());
  std::vector<std::size_t> both;
  std::set_intersection(gt.begin(), gt.end(), pred.begin(), pred.end(), std::back_inserter(both));
  const double i = static_cast<double>(both.size());
  return i / (static_cast<double>(gt.size() + pred.size()) - i);
}

double IoUTable::iou(std::size_t g, std::size_t p) const
{
  const double i = static_cast<double>(intersection[g * pred_ids.size() + p]);
  const double u = static_cast<double>(gt_count[g] + pred_count[p]) - i;
  return u > 0.0 ? i / u : 0.0;
}

IoUTable iou_table(const Labels& gt, const Labels& pred, Exec exec)
{
  if (gt.size() != pred.size())
    throw std::invalid_argument("iou_table: labellings have different sizes");
  IoUTable t;
  std::map<std::int32_t, std::size_t> gi, pi;
  for (auto l : gt)
    if (l > 0)
      gi.emplace(l, 0);
  for (auto l : pred)
    if (l > 0)
      pi.emplace(l, 0);
  for (auto& [id, k] : gi) {
    k = t.gt_ids.size();
    t.gt_ids.push_back(id);
  }
  for (auto& [id, k] : pi) {
    k = t.pred_ids.size();
    t.pred_ids.push_back(id);
  }
  const std::size_t G = t.gt_ids.size(), P = t.pred_ids.size();
  // Dense lookup from label to row/column.
  std::int32_t gmax = t.gt_ids.empty() ? 0 : t.gt_ids.back();
  std::int32_t pmax = t.pred_ids.empty() ? 0 : t.pred_ids.back();
  std::vector<std::size_t> grow(static_cast<std::size_t>(gmax) + 1, G), pcol(static_cast<std::size_t>(pmax) + 1, P);
  for (const auto& [id, k] : gi)
    grow[static_cast<std::size_t>(id)] = k;
  for (const auto& [id, k] : pi)
    pcol[static_cast<std::size_t>(id)] = k;

  t.gt_count.assign(G, 0);
  t.pred_count.assign(P, 0);
  t.intersection.assign(G * P, 0);
  const auto n = static_cast<std::ptrdiff_t>(gt.size());
  auto tally = [&](std::ptrdiff_t lo, std::ptrdiff_t hi, std::vector<std::size_t>& gc, std::vector<std::size_t>& pc,
                   std::vector<std::size_t>& inter) {
    for (std::ptrdiff_t i = lo; i < hi; ++i) {
      const std::size_t g = gt[i] > 0 ? grow[static_cast<std::size_t>(gt[i])] : G;
      const std::size_t p = pred[i] > 0 ? pcol[static_cast<std::size_t>(pred[i])] : P;
      if (g < G)
        ++gc[g];
      if (p < P)
        ++pc[p];
      if (g < G && p < P)
        ++inter[g * P + p];
    }
  };
  if (exec == Exec::serial) {
    tally(0, n, t.gt_count, t.pred_count, t.intersection);
    return t;
  }
#pragma omp parallel
  {
    std::vector<std::size_t> gc(G, 0), pc(P, 0), inter(G * P, 0);
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i)
      tally(i, i + 1, gc, pc, inter);
#pragma omp critical
    {
      for (std::size_t k = 0; k < G; ++k)
        t.gt_count[k] += gc[k];
      for (std::size_t k = 0; k < P; ++k)
        t.pred_count[k] += pc[k];
      for (std::size_t k = 0; k < G * P; ++k)
        t.intersection[k] += inter[k];
    }
  }
  return t;
}

std::vector<MatchPair> candidate_pairs(const IoUTable& table, double iou_thresh)
{
  std::vector<MatchPair> out;
  for (std::size_t g = 0; g < table.gt_ids.size(); ++g) {
    double best = 0.0;
    std::size_t arg = table.pred_ids.size();
    for (std::size_t p = 0; p < table.pred_ids.size(); ++p)
      if (const double v = table.iou(g, p); v > best) {
        best = v;
        arg = p;
      }
    if (arg < table.pred_ids.size() && best >= iou_thresh)
      out.push_back({ table.gt_ids[g], table.pred_ids[arg], best });
  }
  return out;
}

MatchResult match_instances(const IoUTable& table, double iou_thresh)
{
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0))
    throw std::invalid_argument("match_instances: threshold must lie in (0, 1]");
  MatchResult res;
  for (std::size_t g = 0; g < table.gt_ids.size(); ++g) {
    double best = 0.0;
    for (std::size_t p = 0; p < table.pred_ids.size(); ++p)
      best = std::max(best, table.iou(g, p));
    res.max_iou[table.gt_ids[g]] = best;
  }

  std::map<std::int32_t, MatchPair> by_pred;
  for (const auto& c : candidate_pairs(table, iou_thresh)) {
    auto [it, fresh] = by_pred.emplace(c.pred, c);
    if (!fresh && c.iou > it->second.iou)
      it->second = c;
  }
  for (const auto& [pred, pair] : by_pred)
    res.pairs.push_back(pair);
  std::sort(res.pairs.begin(), res.pairs.end(), [](const MatchPair& a, const MatchPair& b) { return a.gt < b.gt; });

  std::vector<std::int32_t> matched_gt;
  for (const auto& p : res.pairs)
    matched_gt.push_back(p.gt);
  std::sort(matched_gt.begin(), matched_gt.end());
  for (auto id : table.gt_ids)
    if (!std::binary_search(matched_gt.begin(), matched_gt.end(), id))
      res.unmatched_gt.push_back(id);
  for (auto id : table.pred_ids)
    if (!by_pred.count(id))
      res.unmatched_pred.push_back(id);
  return res;
}

MatchResult match_instances(const Segmentation& gt, const Segmentation& pred, double iou_thresh)
{
  return match_instances(iou_table(gt.labels, pred.labels), iou_thresh);
}

namespace {

int category_index(CrownCategory c)
{
  return static_cast<int>(c) - 'A';
}

double ratio(std::size_t a, std::size_t b)
{
  return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}

} // namespace

void MetricsAccumulator::add(const MatchResult& match, std::span<const TreeRecord> trees)
{
  tp_ += match.tp();
  fp_ += match.fp();
  fn_ += match.fn();
  for (const auto& [id, v] : match.max_iou) {
    max_iou_sum_ += v;
    ++gt_total_;
  }
  std::map<std::int32_t, int> cat;
  for (const auto& t : trees)
    cat[t.id] = category_index(t.category);
  for (const auto& p : match.pairs)
    if (auto it = cat.find(p.gt); it != cat.end())
      ++cat_tp_[static_cast<std::size_t>(it->second)];
  for (auto id : match.unmatched_gt)
    if (auto it = cat.find(id); it != cat.end())
      ++cat_fn_[static_cast<std::size_t>(it->second)];
}

MetricsReport MetricsAccumulator::report() const
{
  MetricsReport r;
  r.tp = tp_;
  r.fp = fp_;
  r.fn = fn_;
  r.precision = ratio(tp_, tp_ + fp_);
  r.recall = ratio(tp_, tp_ + fn_);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.coverage = gt_total_ == 0 ? 0.0 : max_iou_sum_ / static_cast<double>(gt_total_);
  for (std::size_t c = 0; c < 4; ++c)
    if (cat_tp_[c] + cat_fn_[c] > 0)
      r.category_recall[c] = ratio(cat_tp_[c], cat_tp_[c] + cat_fn_[c]);
  return r;
}

MetricsReport compute_metrics(const MatchResult& match, std::span<const TreeRecord> trees)
{
  MetricsAccumulator acc;
  acc.add(match, trees);
  return acc.report();
}

std::map<std::int32_t, std::int32_t> confidence_matching(const IoUTable& table, const std::vector<double>& confidence,
                                                         double iou_thresh)
{
  std::map<std::int32_t, std::int32_t> matches;
  const std::size_t P = table.pred_ids.size();
  for (std::size_t g = 0; g < table.gt_ids.size(); ++g) {
    std::vector<std::size_t> possible;
    for (std::size_t p = 0; p < P; ++p)
      if (table.intersection[g * P + p] > 0)
        possible.push_back(p);
    std::stable_sort(possible.begin(), possible.end(), [&](std::size_t a, std::size_t b) {
      return confidence[static_cast<std::size_t>(table.pred_ids[a]) - 1] >
             confidence[static_cast<std::size_t>(table.pred_ids[b]) - 1];
    });
    for (auto p : possible) {
      if (matches.count(table.pred_ids[p]))
        continue;
      if (table.iou(g, p) >= iou_thresh) {
        matches[table.pred_ids[p]] = table.gt_ids[g];
        break;
      }
    }
  }
  return matches;
}

double average_precision(const Segmentation& gt, const Segmentation& pred, double iou_thresh)
{
  if (!pred.has_confidence() && pred.max_label() > 0)
    throw std::invalid_argument("average_precision: predictions carry no confidence");
  if (static_cast<std::size_t>(pred.max_label()) > pred.confidence.size())
    throw std::invalid_argument("average_precision: confidence missing for some instances");
  const IoUTable table = iou_table(gt.labels, pred.labels);
  const std::size_t num_gt = table.gt_ids.size();
  if (num_gt == 0)
    return 0.0;
  const auto matches = confidence_matching(table, pred.confidence, iou_thresh);

  std::vector<std::int32_t> order = table.pred_ids;
  auto conf = [&](std::int32_t id) { return pred.confidence[static_cast<std::size_t>(id) - 1]; };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return conf(a) > conf(b); });

  // One PR point per distinct confidence.
  std::vector<double> rec, prec;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    tp += matches.count(order[k]) ? 1 : 0;
    if (k + 1 < order.size() && conf(order[k + 1]) == conf(order[k]))
      continue;
    rec.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  for (std::size_t k = prec.size(); k-- > 1;)
    prec[k - 1] = std::max(prec[k - 1], prec[k]);
  double ap = 0.0, last = 0.0;
  for (std::size_t k = 0; k < rec.size(); ++k) {
    ap += (rec[k] - last) * prec[k];
    last = rec[k];
  }
  return ap;
}

Segmentation postfilter_segments(const Segmentation& pred, const PointCloud& cloud)
{
  if (pred.size() != cloud.size())
    throw std::invalid_argument("postfilter_segments: segmentation does not match cloud");
  struct Info
  {
    std::size_t n = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
  };
  std::map<std::int32_t, Info> info;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (pred.labels[i] <= 0)
      continue;
    auto& s = info[pred.labels[i]];
    ++s.n;
    s.lo = std::min(s.lo, cloud.z[i]);
    s.hi = std::max(s.hi, cloud.z[i]);
  }
  Segmentation out = pred;
  for (auto& l : out.labels) {
    if (l <= 0)
      continue;
    const auto& s = info[l];
    if (s.n < 40 && s.hi - s.lo < 1.5)
      l = 0;
  }
  out.compact();
  return out;
}

Segmentation filter_small_gt(const Segmentation& gt, int min_points)
{
  if (min_points < 1)
    throw std::invalid_argument("filter_small_gt: min_points must be >= 1");
  const auto counts = gt.counts();
  Segmentation out = gt;
  for (auto& l : out.labels)
    if (l > 0 && counts.at(l) < static_cast<std::size_t>(min_points))
      l = 0;
  return out;
}

nlohmann::json metrics_to_json(const MetricsReport& r)
{
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return nlohmann::json{ { "precision", r.precision },
                         { "recall", r.recall },
                         { "f1", r.f1 },
                         { "coverage", r.coverage },
                         { "ap50", opt(r.ap50) },
                         { "recall_A", opt(r.category_recall[0]) },
                         { "recall_B", opt(r.category_recall[1]) },
                         { "recall_C", opt(r.category_recall[2]) },
                         { "recall_D", opt(r.category_recall[3]) },
                         { "tp", r.tp },
                         { "fp", r.fp },
                         { "fn", r.fn } };
}

} // namespace treeseg
