#include "treeseg/meanshift.hpp"

#include "treeseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace treeseg {

void AMS3DParams::validate() const
{
  if (!(s_s > 0.0 && s_s <= 1.0) || !(s_z > 0.0 && s_z <= 1.0))
    throw std::invalid_argument("ams3d: bandwidth slopes must lie in (0, 1]");
  if (!(work_density > 0.0))
    throw std::invalid_argument("ams3d: work_density must be positive");
  if (merge_min_points < 0 || merge_dist_thresh < 0.0)
    throw std::invalid_argument("ams3d: merge thresholds must be non-negative");
  if (!(tol > 0.0) || max_iter < 1)
    throw std::invalid_argument("ams3d: tol must be positive and max_iter >= 1");
}

MeanShiftResult mean_shift_converge(const Point3& start, const PointCloud& cloud, double s_s, double s_z, double tol,
                                    int max_iter)
{
  if (cloud.empty())
    throw std::invalid_argument("mean_shift_converge: empty cloud");
  return mean_shift_converge(start, KdTree3(xyz_points(cloud)), s_s, s_z, tol, max_iter);
}

MeanShiftResult mean_shift_converge(const Point3& start, const KdTree3& index, double s_s, double s_z, double tol,
                                    int max_iter)
{
  if (!(s_s > 0.0) || !(s_z > 0.0))
    throw std::invalid_argument("mean_shift_converge: bandwidth slopes must be positive");
  MeanShiftResult res;
  res.mode = start;
  Point3 cur = start;
  std::vector<std::size_t> inside;
  for (int it = 0; it < max_iter; ++it) {
    const double hs = s_s * cur.z, hz = s_z * cur.z;
    double wsum = 0.0, mx = 0.0, my = 0.0, mz = 0.0;
    if (hs > 0.0 && hz > 0.0) {
      index.box({ cur.x - hs, cur.y - hs, cur.z - hz }, { cur.x + hs, cur.y + hs, cur.z + hz }, inside);
      for (auto i : inside) {
        const auto& p = index.point(i);
        const double dx = p[0] - cur.x, dy = p[1] - cur.y, dz = p[2] - cur.z;
        const double uh = (dx * dx + dy * dy) / (hs * hs);
        const double uz = (dz * dz) / (hz * hz);
        if (uh >= 1.0 || uz >= 1.0)
          continue;
        const double w = (1.0 - uh) * (1.0 - uz);
        wsum += w;
        mx += w * p[0];
        my += w * p[1];
        mz += w * p[2];
      }
    }
    if (!(wsum > 0.0)) {
      res.empty_support = it == 0;
      break;
    }
    const Point3 next{ mx / wsum, my / wsum, mz / wsum };
    const double step = std::hypot(next.x - cur.x, next.y - cur.y, next.z - cur.z);
    cur = next;
    res.iterations = it + 1;
    res.steps.push_back(step);
    if (step < tol) {
      res.converged = true;
      break;
    }
  }
  res.mode = cur;
  return res;
}

std::vector<MeanShiftResult> mean_shift_all(const PointCloud& normalized, double s_s, double s_z, double tol,
                                            int max_iter, Exec exec)
{
  std::vector<MeanShiftResult> out(normalized.size());
  if (normalized.empty())
    return out;
  const KdTree3 index(xyz_points(normalized));
  const auto n = static_cast<std::ptrdiff_t>(normalized.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i)
      out[i] = mean_shift_converge(normalized.point(i), index, s_s, s_z, tol, max_iter);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i)
      out[i] = mean_shift_converge(normalized.point(i), index, s_s, s_z, tol, max_iter);
  }
  return out;
}

Labels group_modes(const std::vector<MeanShiftResult>& modes, double s_s, double /*s_z*/)
{
  std::vector<std::size_t> order(modes.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return modes[a].mode.z > modes[b].mode.z; });

  std::vector<Point3> reps;
  Labels labels(modes.size(), 0);
  for (auto i : order) {
    const Point3& m = modes[i].mode;
    std::int32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < reps.size(); ++g) {
      const double d = std::hypot(m.x - reps[g].x, m.y - reps[g].y);
      if (d < 0.5 * s_s * reps[g].z && d < best_d) {
        best_d = d;
        best = static_cast<std::int32_t>(g + 1);
      }
    }
    if (best == 0) {
      reps.push_back(m);
      best = static_cast<std::int32_t>(reps.size());
    }
    labels[i] = best;
  }
  return labels;
}

Segmentation merge_small_segments(const Segmentation& seg, const PointCloud& cloud, const GroundModel& ground,
                                  int min_points, double dist_thresh)
{
  if (seg.size() != cloud.size())
    throw std::invalid_argument("merge_small_segments: segmentation does not match cloud");
  const PointCloud norm = normalize_heights(cloud, ground);

  struct Stats
  {
    std::size_t count = 0;
    double sx = 0, sy = 0, sz = 0;
    Point3 centroid() const
    {
      const double n = static_cast<double>(count);
      return { sx / n, sy / n, sz / n };
    }
  };
  std::map<std::int32_t, Stats> segs;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const auto l = seg.labels[i];
    if (l <= 0)
      continue;
    auto& s = segs[l];
    ++s.count;
    s.sx += norm.x[i];
    s.sy += norm.y[i];
    s.sz += norm.z[i];
  }

  std::map<std::int32_t, std::int32_t> parent;
  auto find = [&](std::int32_t l) {
    while (parent.count(l))
      l = parent[l];
    return l;
  };

  std::vector<std::int32_t> worklist;
  for (const auto& [id, s] : segs)
    if (s.count < static_cast<std::size_t>(min_points))
      worklist.push_back(id);

  while (!worklist.empty()) {
    auto it = std::min_element(worklist.begin(), worklist.end(), [&](std::int32_t a, std::int32_t b) {
      return segs[a].count < segs[b].count || (segs[a].count == segs[b].count && a < b);
    });
    const std::int32_t id = *it;
    worklist.erase(it);
    const Point3 c = segs[id].centroid();

    std::int32_t target = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [other, s] : segs) {
      if (other == id)
        continue;
      const Point3 o = s.centroid();
      const double d = std::hypot(c.x - o.x, c.y - o.y) + kVerticalMergeWeight * std::abs(c.z - o.z);
      if (d < best) {
        best = d;
        target = other;
      }
    }
    if (target == 0 || !(best < dist_thresh || best < c.z))
      continue;

    auto& t = segs[target];
    const auto& s = segs[id];
    t.count += s.count;
    t.sx += s.sx;
    t.sy += s.sy;
    t.sz += s.sz;
    segs.erase(id);
    parent[id] = target;
    const bool queued = std::find(worklist.begin(), worklist.end(), target) != worklist.end();
    if (!queued && t.count < static_cast<std::size_t>(min_points))
      worklist.push_back(target);
  }

  Segmentation out = seg;
  out.confidence.clear();
  for (auto& l : out.labels)
    if (l > 0)
      l = find(l);
  out.compact();
  return out;
}

Segmentation ams3d_segment(const PointCloud& cloud, const GroundModel& ground, const AMS3DParams& params,
                           std::uint64_t seed)
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

  const PointCloud veg_norm = norm.subset(veg);
  const double area = PlotGeometry::equivalent_to(veg_norm).area_m2();
  const auto picked = density_sample_indices(veg.size(), area, params.work_density, seed);
  std::vector<std::size_t> work_idx(picked.size());
  for (std::size_t k = 0; k < picked.size(); ++k)
    work_idx[k] = veg[picked[k]];
  const PointCloud work_norm = norm.subset(work_idx);

  const auto modes = mean_shift_all(work_norm, params.s_s, params.s_z, params.tol, params.max_iter);
  Segmentation work_seg(group_modes(modes, params.s_s, params.s_z));
  work_seg = merge_small_segments(work_seg, cloud.subset(work_idx), ground, params.merge_min_points,
                                  params.merge_dist_thresh);

  PointCloud labelled = work_norm;
  labelled.instance_id = work_seg.labels;
  const Labels transferred = nearest_neighbor_transfer(labelled, veg_norm);
  for (std::size_t k = 0; k < veg.size(); ++k)
    seg.labels[veg[k]] = transferred[k];
  for (std::size_t k = 0; k < work_idx.size(); ++k)
    seg.labels[work_idx[k]] = work_seg.labels[k];
  seg.compact();
  return seg;
}

} // namespace treeseg
