#include "treeseg/cut_pursuit.hpp"

#include "treeseg/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_set>
#include <stdexcept>
#include <string>
#include <tuple>

namespace treeseg {

void PointGraph::validate() const
{
  if (dim == 0 || values.size() != node_weight.size() * dim)
    throw std::invalid_argument("PointGraph: values do not match node count and dimension");
  for (double w : node_weight)
    if (!(w > 0.0))
      throw std::invalid_argument("PointGraph: node weights must be positive");
  for (const auto& e : edges)
    if (e.a >= e.b || e.b >= node_count() || e.weight < 0.0)
      throw std::invalid_argument("PointGraph: malformed edge");
}

namespace {

std::vector<GraphEdge> symmetrize(const std::vector<std::vector<Neighbor>>& nn)
{
  std::vector<GraphEdge> edges;
  for (std::size_t i = 0; i < nn.size(); ++i)
    for (const auto& n : nn[i])
      edges.push_back({ std::min(i, n.index), std::max(i, n.index), 1.0 });
  std::sort(edges.begin(), edges.end(),
            [](const GraphEdge& x, const GraphEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const GraphEdge& x, const GraphEdge& y) { return x.a == y.a && x.b == y.b; }),
              edges.end());
  return edges;
}

void check_k(std::size_t n, int K)
{
  if (n < 2)
    throw std::invalid_argument("build_knn_graph: need at least two points");
  if (K < 1 || static_cast<std::size_t>(K) >= n)
    throw std::invalid_argument("build_knn_graph: K must lie in [1, point_count - 1], got " + std::to_string(K));
}

} // namespace

PointGraph build_knn_graph(const std::vector<std::array<double, 3>>& points, int K)
{
  check_k(points.size(), K);
  const KdTree3 tree(points);
  PointGraph g;
  g.dim = 3;
  g.values.reserve(points.size() * 3);
  for (const auto& p : points)
    g.values.insert(g.values.end(), p.begin(), p.end());
  g.node_weight.assign(points.size(), 1.0);
  g.edges = symmetrize(knn_self(tree, static_cast<std::size_t>(K)));
  return g;
}

PointGraph build_knn_graph_2d(const std::vector<std::array<double, 2>>& points, int K, std::vector<double> node_weight)
{
  check_k(points.size(), K);
  if (node_weight.size() != points.size())
    throw std::invalid_argument("build_knn_graph_2d: weight count mismatch");
  const KdTree2 tree(points);
  std::vector<std::vector<Neighbor>> nn(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto found = tree.knn(points[i], static_cast<std::size_t>(K) + 1);
    auto self = std::find_if(found.begin(), found.end(), [&](const Neighbor& n) { return n.index == i; });
    if (self != found.end())
      found.erase(self);
    else
      found.pop_back();
    nn[i] = std::move(found);
  }
  PointGraph g;
  g.dim = 2;
  for (const auto& p : points)
    g.values.insert(g.values.end(), p.begin(), p.end());
  g.node_weight = std::move(node_weight);
  g.edges = symmetrize(nn);
  return g;
}

std::vector<int> connected_components(std::size_t n, const std::vector<GraphEdge>& edges)
{
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{ 0 });
  auto find = [&](std::size_t x) {
    while (parent[x] != x)
      x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    const auto ra = find(e.a), rb = find(e.b);
    if (ra != rb)
      parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<int> id(n, -1), comp(n);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    if (id[r] < 0)
      id[r] = next++;
    comp[i] = id[r];
  }
  return comp;
}

double cut_pursuit_objective(const PointGraph& graph, const std::vector<int>& cluster, double lambda)
{
  const std::size_t d = graph.dim;
  std::map<int, std::vector<double>> sum;
  std::map<int, double> weight;
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    auto& s = sum[cluster[i]];
    s.resize(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
      s[k] += graph.node_weight[i] * graph.value(i)[k];
    weight[cluster[i]] += graph.node_weight[i];
  }
  double obj = 0.0;
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    const auto& s = sum[cluster[i]];
    const double w = weight[cluster[i]];
    for (std::size_t k = 0; k < d; ++k) {
      const double t = graph.value(i)[k] - s[k] / w;
      obj += graph.node_weight[i] * t * t;
    }
  }
  for (const auto& e : graph.edges)
    if (cluster[e.a] != cluster[e.b])
      obj += lambda * e.weight;
  return obj;
}

namespace {

struct Moments
{
  double w = 0.0;
  std::vector<double> s;
  double q = 0.0;

  explicit Moments(std::size_t d = 0)
    : s(d, 0.0)
  {
  }
  void add(const double* x, double wx, double sign = 1.0)
  {
    w += sign * wx;
    for (std::size_t k = 0; k < s.size(); ++k) {
      s[k] += sign * wx * x[k];
      q += sign * wx * x[k] * x[k];
    }
  }
  void absorb(const Moments& o)
  {
    w += o.w;
    q += o.q;
    for (std::size_t k = 0; k < s.size(); ++k)
      s[k] += o.s[k];
  }
  double fidelity() const
  {
    if (!(w > 0.0))
      return 0.0;
    double ss = 0.0;
    for (double v : s)
      ss += v * v;
    return std::max(0.0, q - ss / w);
  }
  /// w_x * |x - mean|^2.
  double dist2(const double* x) const
  {
    double t = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double m = x[k] - s[k] / w;
      t += m * m;
    }
    return t;
  }
};

Moments merged(const Moments& a, const Moments& b)
{
  Moments m = a;
  m.absorb(b);
  return m;
}

/// Dinic max-flow, used for exact binary relabelling in the split step.
class MaxFlow
{
public:
  explicit MaxFlow(std::size_t n)
    : head_(n, -1)
    , level_(n)
    , iter_(n)
  {
  }

  void add_edge(std::size_t u, std::size_t v, double cap, double rev_cap = 0.0)
  {
    arcs_.push_back({ v, head_[u], cap });
    head_[u] = static_cast<int>(arcs_.size()) - 1;
    arcs_.push_back({ u, head_[v], rev_cap });
    head_[v] = static_cast<int>(arcs_.size()) - 1;
  }

  double run(std::size_t s, std::size_t t)
  {
    double flow = 0.0;
    while (bfs(s, t)) {
      for (std::size_t i = 0; i < head_.size(); ++i)
        iter_[i] = head_[i];
      while (const double f = dfs(s, t, std::numeric_limits<double>::infinity()))
        flow += f;
    }
    return flow;
  }

  /// Nodes reachable from s in the residual graph after run().
  std::vector<std::uint8_t> source_side(std::size_t s) const
  {
    std::vector<std::uint8_t> seen(head_.size(), 0);
    std::vector<std::size_t> stack{ s };
    seen[s] = 1;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (int a = head_[u]; a >= 0; a = arcs_[a].next)
        if (arcs_[a].cap > kEps && !seen[arcs_[a].to]) {
          seen[arcs_[a].to] = 1;
          stack.push_back(arcs_[a].to);
        }
    }
    return seen;
  }

private:
  static constexpr double kEps = 1e-12;
  struct Arc
  {
    std::size_t to;
    int next;
    double cap;
  };

  bool bfs(std::size_t s, std::size_t t)
  {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (int a = head_[u]; a >= 0; a = arcs_[a].next)
        if (arcs_[a].cap > kEps && level_[arcs_[a].to] < 0) {
          level_[arcs_[a].to] = level_[u] + 1;
          q.push(arcs_[a].to);
        }
    }
    return level_[t] >= 0;
  }

  double dfs(std::size_t u, std::size_t t, double pushed)
  {
    if (u == t)
      return pushed;
    for (int& a = iter_[u]; a >= 0; a = arcs_[a].next) {
      Arc& arc = arcs_[a];
      if (arc.cap <= kEps || level_[arc.to] != level_[u] + 1)
        continue;
      if (const double f = dfs(arc.to, t, std::min(pushed, arc.cap)); f > 0.0) {
        arc.cap -= f;
        arcs_[a ^ 1].cap += f;
        return f;
      }
    }
    return 0.0;
  }

  std::vector<int> head_;
  std::vector<Arc> arcs_;
  std::vector<int> level_;
  std::vector<int> iter_;
};

class Solver
{
public:
  Solver(const PointGraph& g, double lambda)
    : g_(g)
    , lambda_(lambda)
    , adj_(g.node_count())
    , local_(g.node_count(), kNone)
  {
    for (const auto& e : g.edges) {
      adj_[e.a].emplace_back(e.b, e.weight);
      adj_[e.b].emplace_back(e.a, e.weight);
    }
  }

  CutPursuitResult run(std::vector<int> start)
  {
    label_ = std::move(start);
    rebuild();
    objective_ = current_objective();
    history_.push_back(objective_);
    for (int round = 0; round < 100; ++round) {
      bool moved = false;
      moved |= split_pass();
      moved |= merge_pass();
      moved |= move_pass();
      if (!moved)
        moved = pair_pass();
      if (!moved)
        moved = lookahead_merge_pass();
      if (!moved)
        moved = chain_pass();
      if (!moved)
        break;
    }
    CutPursuitResult res;
    std::vector<int> remap(clusters_.size(), -1);
    res.cluster.resize(label_.size());
    int next = 0;
    for (std::size_t i = 0; i < label_.size(); ++i) {
      auto& r = remap[static_cast<std::size_t>(label_[i])];
      if (r < 0)
        r = next++;
      res.cluster[i] = r;
    }
    res.cluster_count = static_cast<std::size_t>(next);
    res.objective = cut_pursuit_objective(g_, res.cluster, lambda_);
    res.history = std::move(history_);
    return res;
  }

private:
  bool improves(double delta) const { return delta < -1e-12 * std::max(1.0, std::abs(objective_)); }

  void accept(double delta)
  {
    objective_ += delta;
    history_.push_back(objective_);
  }

  void rebuild()
  {
    int count = 0;
    for (int l : label_)
      count = std::max(count, l + 1);
    clusters_.assign(static_cast<std::size_t>(count), Moments(g_.dim));
    members_.assign(static_cast<std::size_t>(count), {});
    for (std::size_t i = 0; i < label_.size(); ++i) {
      clusters_[label_[i]].add(g_.value(i), g_.node_weight[i]);
      members_[label_[i]].push_back(i);
    }
  }

  void compact()
  {
    std::vector<int> remap(clusters_.size(), -1);
    int next = 0;
    for (auto& l : label_) {
      auto& r = remap[static_cast<std::size_t>(l)];
      if (r < 0)
        r = next++;
      l = r;
    }
    rebuild();
  }

  double current_objective() const
  {
    double obj = 0.0;
    for (const auto& c : clusters_)
      obj += c.fidelity();
    for (const auto& e : g_.edges)
      if (label_[e.a] != label_[e.b])
        obj += lambda_ * e.weight;
    return obj;
  }

  /// Weighted 2-means inside one cluster; returns the side of each member.
  std::vector<int> two_means(const std::vector<std::size_t>& m) const
  {
    const Moments& c = clusters_[label_[m.front()]];
    std::size_t a = m.front();
    double best = -1.0;
    for (auto i : m)
      if (const double d = c.dist2(g_.value(i)); d > best) {
        best = d;
        a = i;
      }
    std::size_t b = a;
    best = -1.0;
    for (auto i : m) {
      double d = 0.0;
      for (std::size_t k = 0; k < g_.dim; ++k) {
        const double t = g_.value(i)[k] - g_.value(a)[k];
        d += t * t;
      }
      if (d > best) {
        best = d;
        b = i;
      }
    }
    std::vector<double> ca(g_.value(a), g_.value(a) + g_.dim), cb(g_.value(b), g_.value(b) + g_.dim);
    std::vector<int> side(m.size(), 0);
    for (int iter = 0; iter < 20; ++iter) {
      bool changed = false;
      for (std::size_t k = 0; k < m.size(); ++k) {
        double da = 0.0, db = 0.0;
        for (std::size_t j = 0; j < g_.dim; ++j) {
          const double x = g_.value(m[k])[j];
          da += (x - ca[j]) * (x - ca[j]);
          db += (x - cb[j]) * (x - cb[j]);
        }
        const int s = db < da ? 1 : 0;
        changed |= s != side[k];
        side[k] = s;
      }
      if (!changed && iter > 0)
        break;
      Moments ma(g_.dim), mb(g_.dim);
      for (std::size_t k = 0; k < m.size(); ++k)
        (side[k] ? mb : ma).add(g_.value(m[k]), g_.node_weight[m[k]]);
      if (!(ma.w > 0.0) || !(mb.w > 0.0))
        break;
      for (std::size_t j = 0; j < g_.dim; ++j) {
        ca[j] = ma.s[j] / ma.w;
        cb[j] = mb.s[j] / mb.w;
      }
    }
    return side;
  }

  /// Alternates exact binary relabelling (min cut of the two-value Potts
  /// energy restricted to the cluster) with recomputing the two values.
  std::vector<int> refine_split(const std::vector<std::size_t>& m, std::vector<int> side) const
  {
    const std::size_t n = m.size(), src = n, sink = n + 1;
    for (int iter = 0; iter < 10; ++iter) {
      Moments ma(g_.dim), mb(g_.dim);
      for (std::size_t k = 0; k < n; ++k)
        (side[k] ? mb : ma).add(g_.value(m[k]), g_.node_weight[m[k]]);
      if (!(ma.w > 0.0) || !(mb.w > 0.0))
        break;
      MaxFlow flow(n + 2);
      for (std::size_t k = 0; k < n; ++k) {
        const double wi = g_.node_weight[m[k]];
        flow.add_edge(src, k, wi * mb.dist2(g_.value(m[k])));
        flow.add_edge(k, sink, wi * ma.dist2(g_.value(m[k])));
        for (const auto& [j, w] : adj_[m[k]]) {
          const auto q = local_[j];
          if (q != kNone && k < q)
            flow.add_edge(k, q, lambda_ * w, lambda_ * w);
        }
      }
      flow.run(src, sink);
      const auto reach = flow.source_side(src);
      std::vector<int> next(n);
      for (std::size_t k = 0; k < n; ++k)
        next[k] = reach[k] ? 0 : 1;
      if (next == side)
        break;
      side = std::move(next);
    }
    return side;
  }

  /// Replaces the clusters `old_ids` (whose members are `m`) by the pieces
  /// of the two-sided labelling `side`, after greedily re-merging pieces.
  /// Applied only when it strictly lowers the objective.
  bool repartition(const std::vector<std::size_t>& m, const std::vector<int>& side, const std::vector<int>& old_ids)
  {
    // Pieces: connected components of the two sides inside the member set.
    std::vector<GraphEdge> inner;
    double old_cut = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k)
      for (const auto& [j, w] : adj_[m[k]]) {
        const auto q = local_[j];
        if (q == kNone || k >= q)
          continue;
        if (side[k] == side[q])
          inner.push_back({ k, q, w });
        if (label_[m[k]] != label_[j])
          old_cut += w;
      }
    std::vector<int> piece = connected_components(m.size(), inner);
    const int npieces = *std::max_element(piece.begin(), piece.end()) + 1;

    std::vector<Moments> pm(static_cast<std::size_t>(npieces), Moments(g_.dim));
    for (std::size_t k = 0; k < m.size(); ++k)
      pm[piece[k]].add(g_.value(m[k]), g_.node_weight[m[k]]);
    std::map<std::pair<int, int>, double> between;
    for (std::size_t k = 0; k < m.size(); ++k)
      for (const auto& [j, w] : adj_[m[k]]) {
        const auto l = local_[j];
        if (l == kNone || k >= l)
          continue;
        const int p = piece[k], q = piece[l];
        if (p != q)
          between[{ std::min(p, q), std::max(p, q) }] += w;
      }

    // Greedily re-merge pieces while that helps.
    std::vector<int> root(static_cast<std::size_t>(npieces));
    std::iota(root.begin(), root.end(), 0);
    auto find = [&](int x) {
      while (root[x] != x)
        x = root[x];
      return x;
    };
    while (true) {
      double best = 0.0;
      std::pair<int, int> pick{ -1, -1 };
      std::map<std::pair<int, int>, double> agg;
      for (const auto& [pq, w] : between) {
        const int a = find(pq.first), b = find(pq.second);
        if (a != b)
          agg[{ std::min(a, b), std::max(a, b) }] += w;
      }
      for (const auto& [pq, w] : agg) {
        const double d = merged(pm[pq.first], pm[pq.second]).fidelity() - pm[pq.first].fidelity() -
                         pm[pq.second].fidelity() - lambda_ * w;
        if (d < best) {
          best = d;
          pick = pq;
        }
      }
      if (pick.first < 0)
        break;
      pm[pick.first].absorb(pm[pick.second]);
      root[pick.second] = pick.first;
    }

    double delta = -lambda_ * old_cut;
    for (int id : old_ids)
      delta -= clusters_[id].fidelity();
    std::vector<int> roots;
    for (int p = 0; p < npieces; ++p)
      if (find(p) == p) {
        delta += pm[p].fidelity();
        roots.push_back(p);
      }
    for (const auto& [pq, w] : between)
      if (find(pq.first) != find(pq.second))
        delta += lambda_ * w;
    if (!improves(delta))
      return false;

    std::map<int, int> new_id;
    for (std::size_t k = 0; k < roots.size(); ++k) {
      if (k < old_ids.size()) {
        new_id[roots[k]] = old_ids[k];
      } else {
        new_id[roots[k]] = static_cast<int>(clusters_.size());
        clusters_.emplace_back(g_.dim);
        members_.emplace_back();
      }
    }
    for (int id : old_ids) {
      clusters_[id] = Moments(g_.dim);
      members_[id].clear();
    }
    for (const auto& [r, id] : new_id)
      clusters_[id] = pm[r];
    for (std::size_t k = 0; k < m.size(); ++k) {
      const int id = new_id[find(piece[k])];
      label_[m[k]] = id;
      members_[id].push_back(m[k]);
    }
    accept(delta);
    return true;
  }

  /// Sets local_ to the positions of `m` until destroyed.
  struct LocalIndex
  {
    LocalIndex(std::vector<std::size_t>& local, const std::vector<std::size_t>& m)
      : local_(local)
      , m_(m)
    {
      for (std::size_t k = 0; k < m.size(); ++k)
        local_[m[k]] = k;
    }
    ~LocalIndex()
    {
      for (auto i : m_)
        local_[i] = kNone;
    }
    LocalIndex(const LocalIndex&) = delete;
    LocalIndex& operator=(const LocalIndex&) = delete;

    std::vector<std::size_t>& local_;
    const std::vector<std::size_t>& m_;
  };

  /// Order-independent hash of a cluster's members.  Split attempts depend
  /// only on membership, so failed ones are remembered and not repeated.
  std::uint64_t signature(int c) const
  {
    std::uint64_t h = members_[c].size();
    for (auto i : members_[c]) {
      std::uint64_t z = i + 0x9e3779b97f4a7c15ULL;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      h += z ^ (z >> 31);
    }
    return h;
  }

  bool split_pass()
  {
    bool any = false;
    const std::size_t count = clusters_.size();
    for (std::size_t c = 0; c < count; ++c) {
      const auto m = members_[c];
      if (m.size() < 2)
        continue;
      const auto sig = signature(static_cast<int>(c));
      if (failed_splits_.count(sig))
        continue;
      const LocalIndex scope(local_, m);
      const auto side = refine_split(m, two_means(m));
      const bool split = !std::all_of(side.begin(), side.end(), [&](int v) { return v == side.front(); }) &&
                         repartition(m, side, { static_cast<int>(c) });
      if (split)
        any = true;
      else
        failed_splits_.insert(sig);
    }
    return any;
  }

  /// Re-splits the union of every pair of adjacent clusters, starting from
  /// the current boundary between them.
  bool pair_pass()
  {
    std::set<std::pair<int, int>> pairs;
    for (const auto& e : g_.edges) {
      const int a = label_[e.a], b = label_[e.b];
      if (a != b)
        pairs.insert({ std::min(a, b), std::max(a, b) });
    }
    std::vector<std::uint8_t> touched(clusters_.size(), 0);
    bool any = false;
    for (const auto& [a, b] : pairs) {
      if (touched[a] || touched[b])
        continue;
      const auto sa = signature(a), sb = signature(b);
      const std::pair<std::uint64_t, std::uint64_t> key{ std::min(sa, sb), std::max(sa, sb) };
      if (failed_pairs_.count(key))
        continue;
      std::vector<std::size_t> m = members_[a];
      m.insert(m.end(), members_[b].begin(), members_[b].end());
      const LocalIndex scope(local_, m);
      std::vector<int> side(m.size(), 0);
      std::fill(side.begin() + static_cast<std::ptrdiff_t>(members_[a].size()), side.end(), 1);
      side = refine_split(m, side);
      if (repartition(m, side, { a, b })) {
        touched[a] = touched[b] = 1;
        any = true;
      } else {
        failed_pairs_.insert(key);
      }
    }
    if (any)
      compact();
    return any;
  }

  bool merge_pass()
  {
    std::vector<std::map<int, double>> nb(clusters_.size());
    for (const auto& e : g_.edges) {
      const int a = label_[e.a], b = label_[e.b];
      if (a != b) {
        nb[a][b] += e.weight;
        nb[b][a] += e.weight;
      }
    }
    std::vector<int> version(clusters_.size(), 0);
    std::vector<std::uint8_t> alive(clusters_.size(), 1);
    using Entry = std::tuple<double, int, int, int, int>; // delta, a, b, va, vb (min-heap)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    auto delta_of = [&](int a, int b) {
      return merged(clusters_[a], clusters_[b]).fidelity() - clusters_[a].fidelity() - clusters_[b].fidelity() -
             lambda_ * nb[a].at(b);
    };
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (const auto& [b, w] : nb[a])
        if (static_cast<int>(a) < b)
          heap.emplace(delta_of(static_cast<int>(a), b), static_cast<int>(a), b, 0, 0);

    bool any = false;
    std::vector<int> into(clusters_.size());
    std::iota(into.begin(), into.end(), 0);
    while (!heap.empty()) {
      const auto [d, a, b, va, vb] = heap.top();
      heap.pop();
      if (!alive[a] || !alive[b] || va != version[a] || vb != version[b])
        continue;
      if (!improves(d))
        break;
      clusters_[a].absorb(clusters_[b]);
      alive[b] = 0;
      into[b] = a;
      ++version[a];
      for (const auto& [c, w] : nb[b]) {
        nb[c].erase(b);
        if (c == a)
          continue;
        nb[a][c] += w;
        nb[c][a] += w;
      }
      nb[a].erase(b);
      nb[b].clear();
      accept(d);
      any = true;
      for (const auto& [c, w] : nb[a])
        heap.emplace(delta_of(std::min(a, c), std::max(a, c)), std::min(a, c), std::max(a, c),
                     version[std::min(a, c)], version[std::max(a, c)]);
    }
    if (any) {
      auto root = [&](int x) {
        while (into[x] != x)
          x = into[x];
        return x;
      };
      for (auto& l : label_)
        l = root(l);
      compact();
    }
    return any;
  }

  /// Grows a cluster by up to four adjacent clusters, each time taking the
  /// one that yields the lowest objective, and applies the best prefix when
  /// it improves.  Escapes minima where no single merge helps.
  bool lookahead_merge_pass()
  {
    std::vector<std::map<int, double>> nb(clusters_.size());
    for (const auto& e : g_.edges) {
      const int a = label_[e.a], b = label_[e.b];
      if (a != b) {
        nb[a][b] += e.weight;
        nb[b][a] += e.weight;
      }
    }
    for (std::size_t a = 0; a < clusters_.size(); ++a) {
      Moments grown = clusters_[a];
      std::map<int, double> border = nb[a];
      std::vector<int> taken;
      double total = 0.0, best_total = 0.0;
      std::size_t best_len = 0;
      for (int step = 0; step < 4 && !border.empty(); ++step) {
        int pick = -1;
        double pick_delta = std::numeric_limits<double>::infinity();
        for (const auto& [b, w] : border) {
          const double d =
            merged(grown, clusters_[b]).fidelity() - grown.fidelity() - clusters_[b].fidelity() - lambda_ * w;
          if (d < pick_delta) {
            pick_delta = d;
            pick = b;
          }
        }
        total += pick_delta;
        grown.absorb(clusters_[pick]);
        taken.push_back(pick);
        border.erase(pick);
        for (const auto& [c, w] : nb[pick])
          if (c != static_cast<int>(a) && std::find(taken.begin(), taken.end(), c) == taken.end())
            border[c] += w;
        if (total < best_total) {
          best_total = total;
          best_len = taken.size();
        }
      }
      if (best_len == 0 || !improves(best_total))
        continue;
      for (std::size_t k = 0; k < best_len; ++k)
        for (auto& l : label_)
          if (l == taken[k])
            l = static_cast<int>(a);
      compact();
      accept(best_total);
      return true;
    }
    return false;
  }

  /// Best single-node relocation of i (to an adjacent cluster, or to a new
  /// singleton when `allow_new`).  Returns (delta, target); target -1 means a
  /// new singleton, -2 no candidate.
  std::pair<double, int> best_move(std::size_t i) const
  {
    const int a = label_[i];
    const double wi = g_.node_weight[i];
    const double* x = g_.value(i);
    std::map<int, double> link;
    for (const auto& [j, w] : adj_[i])
      link[label_[j]] += w;
    const double to_own = link.count(a) ? link.at(a) : 0.0;
    const Moments& A = clusters_[a];
    const bool alone = !(A.w - wi > 1e-12 * A.w);
    const double removal = alone ? 0.0 : -wi * A.w / (A.w - wi) * A.dist2(x);
    double best = std::numeric_limits<double>::infinity();
    int target = -2;
    if (!alone) {
      best = removal + lambda_ * to_own;
      target = -1;
    }
    for (const auto& [b, w] : link) {
      if (b == a)
        continue;
      const Moments& B = clusters_[b];
      const double d = removal + wi * B.w / (B.w + wi) * B.dist2(x) + lambda_ * (to_own - w);
      if (d < best) {
        best = d;
        target = b;
      }
    }
    return { best, target };
  }

  int apply_move(std::size_t i, int target)
  {
    const int a = label_[i];
    const double wi = g_.node_weight[i];
    clusters_[a].add(g_.value(i), wi, -1.0);
    if (!(clusters_[a].w > 1e-12))
      clusters_[a] = Moments(g_.dim);
    if (target == -1) {
      target = static_cast<int>(clusters_.size());
      clusters_.emplace_back(g_.dim);
      members_.emplace_back();
    }
    clusters_[target].add(g_.value(i), wi);
    label_[i] = target;
    return a;
  }

  /// Kernighan-Lin style chain: up to kChain node moves, each the best
  /// available one even if it worsens the objective, with moved nodes
  /// locked; keeps the best improving prefix and reverts the rest.
  bool chain_pass()
  {
    constexpr std::size_t kChain = 12;
    std::vector<std::uint8_t> locked(label_.size(), 0);
    std::vector<std::pair<std::size_t, int>> done; // node, previous cluster
    double total = 0.0, best_total = 0.0;
    std::size_t best_len = 0;
    for (std::size_t step = 0; step < std::min(kChain, label_.size()); ++step) {
      double pick = std::numeric_limits<double>::infinity();
      std::size_t node = 0;
      int target = -2;
      for (std::size_t i = 0; i < label_.size(); ++i) {
        if (locked[i])
          continue;
        const auto [d, t] = best_move(i);
        if (t != -2 && d < pick) {
          pick = d;
          node = i;
          target = t;
        }
      }
      if (target == -2)
        break;
      locked[node] = 1;
      done.emplace_back(node, apply_move(node, target));
      total += pick;
      if (total < best_total) {
        best_total = total;
        best_len = done.size();
      }
    }
    const std::size_t keep = best_len > 0 && improves(best_total) ? best_len : 0;
    while (done.size() > keep) {
      const auto [node, prev] = done.back();
      done.pop_back();
      const int cur = label_[node];
      clusters_[cur].add(g_.value(node), g_.node_weight[node], -1.0);
      if (!(clusters_[cur].w > 1e-12))
        clusters_[cur] = Moments(g_.dim);
      clusters_[prev].add(g_.value(node), g_.node_weight[node]);
      label_[node] = prev;
    }
    compact();
    if (keep == 0)
      return false;
    accept(best_total);
    return true;
  }

  bool move_pass()
  {
    bool any = false;
    for (std::size_t i = 0; i < label_.size(); ++i) {
      const int a = label_[i];
      const double wi = g_.node_weight[i];
      const double* x = g_.value(i);
      std::map<int, double> link;
      for (const auto& [j, w] : adj_[i])
        link[label_[j]] += w;
      const double to_own = link.count(a) ? link[a] : 0.0;
      const Moments& A = clusters_[a];
      const bool alone = !(A.w - wi > 1e-12 * A.w);
      const double removal = alone ? 0.0 : -wi * A.w / (A.w - wi) * A.dist2(x);

      double best = 0.0;
      int target = -2;
      if (!alone) {
        const double d = removal + lambda_ * to_own;
        if (improves(d)) {
          best = d;
          target = -1;
        }
      }
      for (const auto& [b, w] : link) {
        if (b == a)
          continue;
        const Moments& B = clusters_[b];
        const double d = removal + wi * B.w / (B.w + wi) * B.dist2(x) + lambda_ * (to_own - w);
        if (improves(d) && d < best) {
          best = d;
          target = b;
        }
      }
      if (target == -2)
        continue;
      clusters_[a].add(x, wi, -1.0);
      if (alone)
        clusters_[a] = Moments(g_.dim);
      if (target == -1) {
        target = static_cast<int>(clusters_.size());
        clusters_.emplace_back(g_.dim);
        members_.emplace_back();
      }
      clusters_[target].add(x, wi);
      label_[i] = target;
      accept(best);
      any = true;
    }
    if (any)
      compact();
    return any;
  }

  const PointGraph& g_;
  double lambda_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_;
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  mutable std::vector<std::size_t> local_;
  std::unordered_set<std::uint64_t> failed_splits_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> failed_pairs_;
  std::vector<int> label_;
  std::vector<Moments> clusters_;
  std::vector<std::vector<std::size_t>> members_;
  double objective_ = 0.0;
  std::vector<double> history_;
};

} // namespace

CutPursuitResult cut_pursuit_l0(const PointGraph& graph, double lambda)
{
  if (!(lambda >= 0.0))
    throw std::invalid_argument("cut_pursuit_l0: lambda must be non-negative");
  graph.validate();
  if (graph.node_count() == 0)
    return {};
  // Centred copy: keeps the moment-based fidelity free of cancellation.
  PointGraph centred = graph;
  std::vector<double> mean(graph.dim, 0.0);
  for (std::size_t i = 0; i < graph.node_count(); ++i)
    for (std::size_t k = 0; k < graph.dim; ++k)
      mean[k] += graph.value(i)[k] / static_cast<double>(graph.node_count());
  for (std::size_t i = 0; i < graph.node_count(); ++i)
    for (std::size_t k = 0; k < graph.dim; ++k)
      centred.values[i * graph.dim + k] -= mean[k];
  auto top_down = Solver(centred, lambda).run(connected_components(graph.node_count(), graph.edges));
  std::vector<int> singletons(graph.node_count());
  std::iota(singletons.begin(), singletons.end(), 0);
  auto bottom_up = Solver(centred, lambda).run(std::move(singletons));
  return bottom_up.objective < top_down.objective ? bottom_up : top_down;
}

} // namespace treeseg
