#include "treeseg/treeiso.hpp"

#include "treeseg/meanshift.hpp"
#include "treeseg/spatial_index.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace treeseg {

void TreeisoParams::validate() const
{
  if (K1 < 3 || K1 > 20)
    throw std::invalid_argument("treeiso: K1 must lie in [3, 20]");
  if (K2 < 3 || K2 > 40)
    throw std::invalid_argument("treeiso: K2 must lie in [3, 40]");
  if (!(lambda1 >= 0.1 && lambda1 <= 40.0))
    throw std::invalid_argument("treeiso: lambda1 must lie in [0.1, 40]");
  if (!(lambda2 >= 5.0 && lambda2 <= 40.0))
    throw std::invalid_argument("treeiso: lambda2 must lie in [5, 40]");
  if (!(rho_zmax >= 0.1 && rho_zmax <= 1.0))
    throw std::invalid_argument("treeiso: rho_zmax must lie in [0.1, 1]");
  if (!(w_rho >= 0.1 && w_rho <= 2.0))
    throw std::invalid_argument("treeiso: w_rho must lie in [0.1, 2]");
}

ClusterSet ClusterSet::from_labels(std::vector<int> labels)
{
  std::map<int, int> remap;
  for (int l : labels)
    remap.emplace(l, 0);
  int next = 0;
  for (auto& [l, id] : remap)
    id = next++;
  for (auto& l : labels)
    l = remap[l];
  return { std::move(labels), remap.size() };
}

namespace {

std::vector<std::vector<std::size_t>> members_of(const ClusterSet& c)
{
  std::vector<std::vector<std::size_t>> m(c.count);
  for (std::size_t i = 0; i < c.cluster.size(); ++i)
    m[static_cast<std::size_t>(c.cluster[i])].push_back(i);
  return m;
}

} // namespace

ClusterSet stage1_cluster(const PointCloud& cloud, int K1, double lambda1)
{
  if (cloud.size() < 2)
    return { std::vector<int>(cloud.size(), 0), cloud.size() };
  const int k = std::min<int>(K1, static_cast<int>(cloud.size()) - 1);
  const auto result = cut_pursuit_l0(build_knn_graph(xyz_points(cloud), k), lambda1);
  return { result.cluster, result.cluster_count };
}

ClusterSet stage2_cluster(const PointCloud& cloud, const ClusterSet& clusters, int K2, double lambda2)
{
  if (clusters.count == 0)
    throw std::invalid_argument("stage2_cluster: no clusters");
  if (clusters.count == 1)
    return clusters;
  const auto members = members_of(clusters);
  std::vector<std::array<double, 2>> centroid(clusters.count, { 0.0, 0.0 });
  std::vector<double> weight(clusters.count, 0.0);
  for (std::size_t c = 0; c < clusters.count; ++c) {
    for (auto i : members[c]) {
      centroid[c][0] += cloud.x[i];
      centroid[c][1] += cloud.y[i];
    }
    weight[c] = static_cast<double>(members[c].size());
    centroid[c][0] /= weight[c];
    centroid[c][1] /= weight[c];
  }
  const int k = std::min<int>(K2, static_cast<int>(clusters.count) - 1);
  const auto result = cut_pursuit_l0(build_knn_graph_2d(centroid, k, weight), lambda2);
  std::vector<int> labels(clusters.cluster.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = result.cluster[static_cast<std::size_t>(clusters.cluster[i])];
  return ClusterSet::from_labels(std::move(labels));
}

double verticality_ratio(const PointCloud& cloud, const std::vector<std::size_t>& members)
{
  if (members.size() < 2)
    return 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (auto i : members)
    mean += Eigen::Vector3d(cloud.x[i], cloud.y[i], cloud.z[i]);
  mean /= static_cast<double>(members.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : members) {
    const Eigen::Vector3d d = Eigen::Vector3d(cloud.x[i], cloud.y[i], cloud.z[i]) - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d axis = eig.eigenvectors().col(2);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, zlo = lo, zhi = -lo;
  for (auto i : members) {
    const double t = axis.dot(Eigen::Vector3d(cloud.x[i], cloud.y[i], cloud.z[i]));
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    zlo = std::min(zlo, cloud.z[i]);
    zhi = std::max(zhi, cloud.z[i]);
  }
  return hi > lo ? (zhi - zlo) / (hi - lo) : 0.0;
}

std::vector<std::uint8_t> identify_stems(const PointCloud& normalized, const ClusterSet& clusters, double rho_zmax)
{
  const auto members = members_of(clusters);
  std::vector<std::uint8_t> stem(clusters.count, 0);
  for (std::size_t c = 0; c < clusters.count; ++c) {
    if (members[c].empty())
      continue;
    double base = std::numeric_limits<double>::infinity();
    for (auto i : members[c])
      base = std::min(base, normalized.z[i]);
    stem[c] = base <= kStemBaseMax && verticality_ratio(normalized, members[c]) >= rho_zmax ? 1 : 0;
  }
  return stem;
}

std::vector<double> rho_scores(const std::vector<RhoComponents>& candidates, double w_rho)
{
  auto scaled = [&](auto get) {
    std::vector<double> v;
    for (const auto& c : candidates)
      v.push_back(get(c));
    if (v.empty())
      return v;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double a = *lo, b = *hi;
    for (auto& x : v)
      x = b > a ? (x - a) / (b - a) : 0.0;
    return v;
  };
  const auto vo = scaled([](const RhoComponents& c) { return c.vertical_overlap; });
  const auto ho = scaled([](const RhoComponents& c) { return c.horizontal_overlap; });
  const auto gap = scaled([](const RhoComponents& c) { return c.gap; });
  const auto cd = scaled([](const RhoComponents& c) { return c.centroid_distance; });
  std::vector<double> rho(candidates.size());
  for (std::size_t k = 0; k < rho.size(); ++k)
    rho[k] = vo[k] + w_rho * ho[k] - gap[k] - cd[k];
  return rho;
}

namespace {

struct Extent
{
  double zlo = std::numeric_limits<double>::infinity();
  double zhi = -std::numeric_limits<double>::infinity();
  double xlo = zlo, xhi = zhi, ylo = zlo, yhi = zhi;
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;

  void add(double x, double y, double z)
  {
    zlo = std::min(zlo, z);
    zhi = std::max(zhi, z);
    xlo = std::min(xlo, x);
    xhi = std::max(xhi, x);
    ylo = std::min(ylo, y);
    yhi = std::max(yhi, y);
    sx += x;
    sy += y;
    ++n;
  }
  void absorb(const Extent& o)
  {
    zlo = std::min(zlo, o.zlo);
    zhi = std::max(zhi, o.zhi);
    xlo = std::min(xlo, o.xlo);
    xhi = std::max(xhi, o.xhi);
    ylo = std::min(ylo, o.ylo);
    yhi = std::max(yhi, o.yhi);
    sx += o.sx;
    sy += o.sy;
    n += o.n;
  }
  double cx() const { return sx / static_cast<double>(n); }
  double cy() const { return sy / static_cast<double>(n); }
};

double interval_overlap(double a0, double a1, double b0, double b1)
{
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

RhoComponents components(const Extent& c, const Extent& s, double gap)
{
  RhoComponents r;
  const double dz = c.zhi - c.zlo;
  r.vertical_overlap = dz > 0.0 ? interval_overlap(c.zlo, c.zhi, s.zlo, s.zhi) / dz
                                : (c.zlo >= s.zlo && c.zlo <= s.zhi ? 1.0 : 0.0);
  const double area = (c.xhi - c.xlo) * (c.yhi - c.ylo);
  if (area > 0.0) {
    r.horizontal_overlap =
      interval_overlap(c.xlo, c.xhi, s.xlo, s.xhi) * interval_overlap(c.ylo, c.yhi, s.ylo, s.yhi) / area;
  } else {
    const bool inside = c.cx() >= s.xlo && c.cx() <= s.xhi && c.cy() >= s.ylo && c.cy() <= s.yhi;
    r.horizontal_overlap = inside ? 1.0 : 0.0;
  }
  r.gap = gap;
  r.centroid_distance = std::hypot(c.cx() - s.cx(), c.cy() - s.cy());
  return r;
}

} // namespace

Segmentation merge_by_rho_score(const PointCloud& normalized, const ClusterSet& clusters,
                                std::vector<std::uint8_t> stems, double w_rho)
{
  if (stems.size() != clusters.count)
    throw std::invalid_argument("merge_by_rho_score: stem flags do not match clusters");
  Segmentation seg(Labels(normalized.size(), 0));
  if (clusters.count == 0)
    return seg;
  const auto members = members_of(clusters);
  if (std::none_of(stems.begin(), stems.end(), [](auto s) { return s != 0; })) {
    std::size_t largest = 0;
    for (std::size_t c = 1; c < clusters.count; ++c)
      if (members[c].size() > members[largest].size())
        largest = c;
    stems[largest] = 1;
  }

  std::vector<Extent> ext(clusters.count);
  for (std::size_t c = 0; c < clusters.count; ++c)
    for (auto i : members[c])
      ext[c].add(normalized.x[i], normalized.y[i], normalized.z[i]);

  std::vector<KdTree3> trees;
  trees.reserve(clusters.count);
  for (std::size_t c = 0; c < clusters.count; ++c) {
    std::vector<PointN<3>> pts;
    for (auto i : members[c])
      pts.push_back({ normalized.x[i], normalized.y[i], normalized.z[i] });
    trees.emplace_back(std::move(pts));
  }
  std::map<std::pair<std::size_t, std::size_t>, double> gap_cache;
  auto cluster_gap = [&](std::size_t a, std::size_t b) {
    const auto key = std::minmax(a, b);
    auto it = gap_cache.find(key);
    if (it != gap_cache.end())
      return it->second;
    const auto& small = trees[a].size() <= trees[b].size() ? trees[a] : trees[b];
    const auto& large = trees[a].size() <= trees[b].size() ? trees[b] : trees[a];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : small.points())
      best = std::min(best, large.nearest(p).dist2);
    best = std::sqrt(best);
    gap_cache.emplace(key, best);
    return best;
  };

  // Stem groups: extent plus the original clusters they contain.
  std::vector<std::size_t> stem_ids;
  std::vector<Extent> group;
  std::vector<std::vector<std::size_t>> parts;
  std::vector<std::int32_t> owner(clusters.count, 0);
  for (std::size_t c = 0; c < clusters.count; ++c)
    if (stems[c]) {
      stem_ids.push_back(c);
      group.push_back(ext[c]);
      parts.push_back({ c });
      owner[c] = static_cast<std::int32_t>(group.size());
    }

  std::vector<std::size_t> pending;
  for (std::size_t c = 0; c < clusters.count; ++c)
    if (!stems[c])
      pending.push_back(c);

  while (!pending.empty()) {
    double best_rho = -std::numeric_limits<double>::infinity();
    std::size_t best_k = 0, best_group = 0;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      const std::size_t c = pending[k];
      std::vector<std::size_t> order(group.size());
      std::iota(order.begin(), order.end(), std::size_t{ 0 });
      auto dist = [&](std::size_t g) { return std::hypot(ext[c].cx() - group[g].cx(), ext[c].cy() - group[g].cy()); };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
      order.resize(std::min(order.size(), kRhoCandidates));
      std::vector<RhoComponents> comps;
      for (auto g : order) {
        double gap = std::numeric_limits<double>::infinity();
        for (auto p : parts[g])
          gap = std::min(gap, cluster_gap(c, p));
        comps.push_back(components(ext[c], group[g], gap));
      }
      const auto rho = rho_scores(comps, w_rho);
      for (std::size_t j = 0; j < rho.size(); ++j)
        if (rho[j] > best_rho) {
          best_rho = rho[j];
          best_k = k;
          best_group = order[j];
        }
    }
    const std::size_t c = pending[best_k];
    group[best_group].absorb(ext[c]);
    parts[best_group].push_back(c);
    owner[c] = static_cast<std::int32_t>(best_group + 1);
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(best_k));
  }

  for (std::size_t i = 0; i < normalized.size(); ++i)
    seg.labels[i] = owner[static_cast<std::size_t>(clusters.cluster[i])];
  seg.compact();
  return seg;
}

Segmentation treeiso_segment(const PointCloud& cloud, const GroundModel& ground, const TreeisoParams& params)
{
  params.validate();
  Segmentation seg(Labels(cloud.size(), 0));
  const PointCloud norm = normalize_heights(cloud, ground);
  std::vector<std::size_t> veg;
  for (std::size_t i = 0; i < norm.size(); ++i)
    if (norm.z[i] >= kGroundClearance)
      veg.push_back(i);
  if (veg.empty())
    return seg;
  const PointCloud v = norm.subset(veg);
  const ClusterSet first = stage1_cluster(v, params.K1, params.lambda1);
  const ClusterSet second = stage2_cluster(v, first, params.K2, params.lambda2);
  const auto stems = identify_stems(v, second, params.rho_zmax);
  const Segmentation merged = merge_by_rho_score(v, second, stems, params.w_rho);
  for (std::size_t k = 0; k < veg.size(); ++k)
    seg.labels[veg[k]] = merged.labels[k];
  seg.compact();
  return seg;
}

} // namespace treeseg
