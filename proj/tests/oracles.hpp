#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.  Everything here works from raw label vectors.

#include "treeseg/cut_pursuit.hpp"
#include "treeseg/eval.hpp"
#include "treeseg/segmentation.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracles {

using treeseg::Labels;

struct LabelPair
{
  Labels gt;
  Labels pred;
};

/// Random gt labelling with up to `max_instances` instances and a prediction
/// derived from it by relabelling, merging, splitting and point noise, so
/// that IoUs spread over the whole range and exact 0.5 ties occur.
inline LabelPair random_label_pair(std::mt19937_64& rng, int max_instances = 20, int max_points = 500)
{
  const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_points));
  const int k = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_instances));
  LabelPair out;
  out.gt.resize(static_cast<std::size_t>(n));
  const bool tiny = rng() % 4 == 0; // small sets make exact ties likely
  for (auto& l : out.gt)
    l = rng() % 6 == 0 ? 0 : 1 + static_cast<std::int32_t>(rng() % static_cast<unsigned>(tiny ? std::min(k, 4) : k));

  std::vector<std::int32_t> perm(static_cast<std::size_t>(k) + 1);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin() + 1, perm.end(), rng);
  const std::int32_t merge_from = 1 + static_cast<std::int32_t>(rng() % static_cast<unsigned>(k));
  const std::int32_t merge_into = 1 + static_cast<std::int32_t>(rng() % static_cast<unsigned>(k));
  const std::int32_t split = 1 + static_cast<std::int32_t>(rng() % static_cast<unsigned>(k));
  const double noise = static_cast<double>(rng() % 60) / 100.0;
  out.pred.resize(out.gt.size());
  for (std::size_t i = 0; i < out.gt.size(); ++i) {
    std::int32_t l = out.gt[i];
    if (l == merge_from && rng() % 2)
      l = merge_into;
    l = perm[static_cast<std::size_t>(l)];
    if (l == perm[static_cast<std::size_t>(split)] && rng() % 2)
      l = k + 1;
    if (std::uniform_real_distribution<double>(0, 1)(rng) < noise)
      l = static_cast<std::int32_t>(rng() % static_cast<unsigned>(k + 2));
    out.pred[i] = l;
  }
  return out;
}

inline std::map<std::int32_t, std::set<std::size_t>> instance_sets(const Labels& labels)
{
  std::map<std::int32_t, std::set<std::size_t>> sets;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] > 0)
      sets[labels[i]].insert(i);
  return sets;
}

inline double set_iou(const std::set<std::size_t>& a, const std::set<std::size_t>& b)
{
  std::size_t inter = 0;
  for (auto i : a)
    inter += b.count(i);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

/// Exhaustive search over all injective assignments restricted to pairs with
/// IoU >= thresh: most pairs, then largest IoU sum, then the lexicographically
/// smallest (gt, pred) list.
inline std::vector<treeseg::MatchPair> brute_force_matching(const Labels& gt, const Labels& pred, double thresh)
{
  const auto g = instance_sets(gt), p = instance_sets(pred);
  std::vector<std::int32_t> gids;
  for (const auto& [id, s] : g)
    gids.push_back(id);
  std::map<std::int32_t, std::vector<std::pair<std::int32_t, double>>> options;
  for (const auto& [gid, gs] : g)
    for (const auto& [pid, ps] : p) {
      const double v = set_iou(gs, ps);
      if (v >= thresh)
        options[gid].push_back({ pid, v });
    }

  std::vector<treeseg::MatchPair> best, cur;
  double best_sum = -1.0;
  std::set<std::int32_t> used;
  auto better = [&](double sum) {
    if (cur.size() != best.size())
      return cur.size() > best.size();
    if (sum != best_sum)
      return sum > best_sum;
    return std::lexicographical_compare(cur.begin(), cur.end(), best.begin(), best.end(), [](const auto& a, const auto& b) {
      return std::pair(a.gt, a.pred) < std::pair(b.gt, b.pred);
    });
  };
  std::function<void(std::size_t, double)> rec = [&](std::size_t k, double sum) {
    if (k == gids.size()) {
      if (best_sum < 0.0 || better(sum)) {
        best = cur;
        best_sum = sum;
      }
      return;
    }
    rec(k + 1, sum);
    for (const auto& [pid, v] : options[gids[k]]) {
      if (used.count(pid))
        continue;
      used.insert(pid);
      cur.push_back({ gids[k], pid, v });
      rec(k + 1, sum + v);
      cur.pop_back();
      used.erase(pid);
    }
  };
  rec(0, 0.0);
  return best;
}

/// AP from first principles: match each gt (ascending id) to the most
/// confident unused prediction with IoU >= thresh, evaluate precision and
/// recall at every distinct confidence cutoff, and integrate the upper
/// envelope max{p_j : r_j >= r} over recall.
inline double brute_force_ap(const Labels& gt, const Labels& pred, const std::vector<double>& confidence, double thresh)
{
  const auto g = instance_sets(gt), p = instance_sets(pred);
  if (g.empty())
    return 0.0;
  std::set<std::int32_t> matched;
  for (const auto& [gid, gs] : g) {
    std::int32_t pick = 0;
    for (const auto& [pid, ps] : p) {
      if (matched.count(pid) || set_iou(gs, ps) < thresh)
        continue;
      if (pick == 0 || confidence[static_cast<std::size_t>(pid) - 1] > confidence[static_cast<std::size_t>(pick) - 1])
        pick = pid;
    }
    if (pick)
      matched.insert(pick);
  }
  std::set<double> cutoffs;
  for (const auto& [pid, ps] : p)
    cutoffs.insert(confidence[static_cast<std::size_t>(pid) - 1]);
  std::vector<std::pair<double, double>> pr; // (recall, precision)
  for (double t : cutoffs) {
    std::size_t kept = 0, tp = 0;
    for (const auto& [pid, ps] : p)
      if (confidence[static_cast<std::size_t>(pid) - 1] >= t) {
        ++kept;
        tp += matched.count(pid);
      }
    pr.push_back({ static_cast<double>(tp) / static_cast<double>(g.size()), static_cast<double>(tp) / static_cast<double>(kept) });
  }
  std::set<double> recalls;
  for (const auto& [r, prec] : pr)
    recalls.insert(r);
  double area = 0.0, last = 0.0;
  for (double r : recalls) {
    double env = 0.0;
    for (const auto& [rj, pj] : pr)
      if (rj >= r)
        env = std::max(env, pj);
    area += (r - last) * env;
    last = r;
  }
  return area;
}

/// Random graph on n nodes with 3-d values in [0, 3) and edge probability 0.45.
inline treeseg::PointGraph random_graph(std::mt19937_64& rng, int n)
{
  treeseg::PointGraph g;
  g.dim = 3;
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 3 * n; ++i)
    g.values.push_back(u(rng));
  g.node_weight.assign(static_cast<std::size_t>(n), 1.0);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (rng() % 100 < 45)
        g.edges.push_back({ static_cast<std::size_t>(a), static_cast<std::size_t>(b), 1.0 });
  return g;
}

/// Minimum objective over every partition of the nodes.  Disconnected
/// clusters never beat their split, so this is also the optimum over
/// connected partitions.
inline double brute_force_optimum(const treeseg::PointGraph& g, double lambda)
{
  const int n = static_cast<int>(g.node_count());
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int)> rec = [&](int i, int k) {
    if (i == n) {
      best = std::min(best, treeseg::cut_pursuit_objective(g, label, lambda));
      return;
    }
    for (int c = 0; c <= k; ++c) {
      label[static_cast<std::size_t>(i)] = c;
      rec(i + 1, std::max(k, c + 1));
    }
  };
  rec(0, 0);
  return best;
}

} // namespace oracles
