#include "treeseg/spatial_index.hpp"

namespace treeseg {

std::vector<PointN<3>> xyz_points(const PointCloud& cloud)
{
  std::vector<PointN<3>> pts(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    pts[i] = { cloud.x[i], cloud.y[i], cloud.z[i] };
  return pts;
}

std::vector<PointN<2>> xy_points(const PointCloud& cloud)
{
  std::vector<PointN<2>> pts(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    pts[i] = { cloud.x[i], cloud.y[i] };
  return pts;
}

namespace {

std::vector<Neighbor> neighbours_excluding_self(const KdTree3& tree, std::size_t i, std::size_t k)
{
  auto nn = tree.knn(tree.point(i), k + 1);
  auto self = std::find_if(nn.begin(), nn.end(), [i](const Neighbor& n) { return n.index == i; });
  if (self != nn.end())
    nn.erase(self);
  else if (!nn.empty())
    nn.pop_back();
  return nn;
}

} // namespace

std::vector<std::vector<Neighbor>> knn_self(const KdTree3& tree, std::size_t k, Exec exec)
{
  const auto n = static_cast<std::ptrdiff_t>(tree.size());
  std::vector<std::vector<Neighbor>> out(tree.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i)
      out[i] = neighbours_excluding_self(tree, static_cast<std::size_t>(i), k);
    return out;
  }
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = neighbours_excluding_self(tree, static_cast<std::size_t>(i), k);
  return out;
}

} // namespace treeseg
