#include "fixtures.hpp"

#include "treeseg/meanshift.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/spatial_index.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace treeseg;

namespace {

PointCloud gaussian_blob(Point3 c, double sigma, std::size_t n, std::uint64_t seed, std::int32_t id = 0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  PointCloud out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({ c.x + g(rng), c.y + g(rng), c.z + g(rng) }, id, 1);
  return out;
}

Point3 kernel_mean(const PointCloud& cloud, Point3 at, double s_s, double s_z)
{
  const double hs = s_s * at.z, hz = s_z * at.z;
  double w = 0, x = 0, y = 0, z = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double uh = (std::pow(cloud.x[i] - at.x, 2) + std::pow(cloud.y[i] - at.y, 2)) / (hs * hs);
    const double uz = std::pow(cloud.z[i] - at.z, 2) / (hz * hz);
    if (uh >= 1 || uz >= 1)
      continue;
    const double k = (1 - uh) * (1 - uz);
    w += k;
    x += k * cloud.x[i];
    y += k * cloud.y[i];
    z += k * cloud.z[i];
  }
  return { x / w, y / w, z / w };
}

void append(PointCloud& a, const PointCloud& b)
{
  for (std::size_t i = 0; i < b.size(); ++i)
    a.push_back(b.point(i), b.instance_id[i], b.semantic_id[i]);
}

} // namespace

TEST(MeanShift, BlobConvergesToItsDensityPeak)
{
  const Point3 centre{ 5.0, -3.0, 15.0 };
  const auto blob = gaussian_blob(centre, 0.6, 3000, 1);
  Point3 start{};
  for (std::size_t i = 0; i < blob.size(); ++i) {
    start.x += blob.x[i] / blob.size();
    start.y += blob.y[i] / blob.size();
    start.z += blob.z[i] / blob.size();
  }
  const double tol = 1e-3;
  const auto r = mean_shift_converge(start, blob, 0.1, 0.1, tol, 200);
  EXPECT_TRUE(r.converged);
  // fixed point of the kernel-weighted mean, recomputed by linear scan
  const Point3 m = kernel_mean(blob, r.mode, 0.1, 0.1);
  EXPECT_LT(std::hypot(m.x - r.mode.x, m.y - r.mode.y, m.z - r.mode.z), 2 * tol);
  EXPECT_LT(std::hypot(r.mode.x - centre.x, r.mode.y - centre.y, r.mode.z - centre.z), 0.15);
}

TEST(MeanShift, SinglePointCloud)
{
  PointCloud one;
  one.push_back({ 1.0, 2.0, 10.0 });
  const auto r = mean_shift_converge({ 1.2, 2.1, 10.3 }, one, 0.3, 0.4);
  EXPECT_EQ(r.mode.x, 1.0);
  EXPECT_EQ(r.mode.y, 2.0);
  EXPECT_EQ(r.mode.z, 10.0);
  ASSERT_GE(r.steps.size(), 1u);
  EXPECT_NEAR(r.steps[0], std::hypot(0.2, 0.1, 0.3), 1e-12);
  const auto at = mean_shift_converge(one.point(0), one, 0.3, 0.4);
  EXPECT_EQ(at.iterations, 1);
  EXPECT_TRUE(at.converged);
}

TEST(MeanShift, StepsShrinkOnUnimodalFixture)
{
  const auto blob = gaussian_blob({ 0, 0, 12 }, 0.8, 2000, 2);
  for (const Point3 start : { Point3{ 1.0, 0.5, 12.5 }, Point3{ -0.8, 1.0, 11.4 } }) {
    const auto r = mean_shift_converge(start, blob, 0.15, 0.15, 1e-4, 300);
    for (std::size_t k = 4; k < r.steps.size(); ++k)
      EXPECT_LE(r.steps[k], r.steps[k - 1] + 1e-12);
  }
}

TEST(MeanShift, EmptySupportIsFlagged)
{
  const auto blob = gaussian_blob({ 0, 0, 10 }, 0.5, 100, 3);
  const Point3 far{ 100, 100, 10 };
  const auto r = mean_shift_converge(far, blob, 0.3, 0.4);
  EXPECT_TRUE(r.empty_support);
  EXPECT_EQ(r.mode.x, far.x);
  EXPECT_EQ(r.mode.z, far.z);
  EXPECT_THROW(mean_shift_converge(far, blob, 0.0, 0.4), std::invalid_argument);
}

TEST(MeanShift, ModeIsAFixedPoint)
{
  const auto blob = gaussian_blob({ 0, 0, 10 }, 0.5, 1500, 4);
  const auto r = mean_shift_converge({ 0.3, 0.2, 10.2 }, blob, 0.2, 0.2, 1e-6, 500);
  ASSERT_TRUE(r.converged);
  const auto again = mean_shift_converge(r.mode, blob, 0.2, 0.2, 1e-3, 1);
  EXPECT_LT(again.steps.front(), 1e-3);
}

TEST(MeanShift, SerialAndParallelIdentical)
{
  auto cloud = fixtures::cone_stand({ { -4, 0 }, { 4, 0, 16.0 } }, 0.3);
  const auto a = mean_shift_all(cloud, 0.3, 0.4, 1e-3, 100, Exec::serial);
  const auto b = mean_shift_all(cloud, 0.3, 0.4, 1e-3, 100, Exec::parallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mode.x, b[i].mode.x);
    EXPECT_EQ(a[i].mode.y, b[i].mode.y);
    EXPECT_EQ(a[i].mode.z, b[i].mode.z);
    EXPECT_EQ(a[i].steps, b[i].steps);
  }
}

TEST(GroupModes, NearbyModesShareAGroup)
{
  std::vector<MeanShiftResult> modes(4);
  modes[0].mode = { 0, 0, 20 };
  modes[1].mode = { 0.5, 0, 19 };   // within 0.5 * 0.3 * 20 = 3
  modes[2].mode = { 10, 0, 18 };
  modes[3].mode = { 10.2, 0.1, 18 };
  EXPECT_EQ(group_modes(modes, 0.3, 0.4), (Labels{ 1, 1, 2, 2 }));
}

TEST(MergeSmallSegments, FragmentsBeneathCrownMergeUpward)
{
  const auto ground = fixtures::flat_ground(0.0);
  auto cloud = gaussian_blob({ 0, 0, 18 }, 1.0, 400, 5, 1);
  for (int f = 0; f < 5; ++f)
    append(cloud, gaussian_blob({ 0.3 * f - 0.6, 0.2, 15.5 - 0.5 * f }, 0.2, 6, 10 + f, 2 + f));
  Segmentation seg(cloud.instance_id);
  const auto merged = merge_small_segments(seg, cloud, ground, 50, 1.0);
  EXPECT_EQ(merged.instance_count(), 1u);
  for (auto l : merged.labels)
    EXPECT_EQ(l, 1);
}

TEST(MergeSmallSegments, NoSmallSegmentIsNoOp)
{
  auto cloud = gaussian_blob({ 0, 0, 18 }, 1.0, 100, 6, 1);
  append(cloud, gaussian_blob({ 8, 0, 15 }, 1.0, 100, 7, 2));
  Segmentation seg(cloud.instance_id);
  EXPECT_EQ(merge_small_segments(seg, cloud, fixtures::flat_ground(0.0), 50, 1.0).labels, seg.labels);
}

TEST(MergeSmallSegments, IsolatedSmallSegmentIsKept)
{
  auto cloud = gaussian_blob({ 0, 0, 3 }, 0.3, 100, 8, 1);
  append(cloud, gaussian_blob({ 30, 0, 1.0 }, 0.05, 10, 9, 2));
  Segmentation seg(cloud.instance_id);
  const auto merged = merge_small_segments(seg, cloud, fixtures::flat_ground(0.0), 50, 1.0);
  EXPECT_EQ(merged.instance_count(), 2u);
}

TEST(MergeSmallSegments, CountNeverIncreases)
{
  std::mt19937_64 rng(10);
  const auto ground = fixtures::flat_ground(0.0);
  for (int trial = 0; trial < 30; ++trial) {
    PointCloud cloud;
    const int k = 2 + static_cast<int>(rng() % 8);
    for (int s = 0; s < k; ++s)
      append(cloud, gaussian_blob({ static_cast<double>(rng() % 20), static_cast<double>(rng() % 20),
                                    1.0 + static_cast<double>(rng() % 15) },
                                  0.5, 1 + rng() % 60, rng(), s + 1));
    Segmentation seg(cloud.instance_id);
    const auto merged = merge_small_segments(seg, cloud, ground, 30, 1.5);
    EXPECT_LE(merged.instance_count(), seg.instance_count());
    EXPECT_EQ(merged.instance_count(), merged.counts().size());
  }
}

TEST(Ams3d, ThreeCrownsThreeInstances)
{
  const auto cloud = fixtures::cone_stand({ { -8, 0, 20.0, 3.5 }, { 0, 6, 18.0, 3.0 }, { 8, 0, 22.0, 3.5 } }, 0.25, 0.0, 13.0);
  const auto seg = ams3d_segment(cloud, fixtures::flat_ground(0.0), AMS3DParams{}, 1);
  EXPECT_EQ(seg.instance_count(), 3u);
  Labels truth, pred;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.z[i] >= kGroundClearance) {
      truth.push_back(cloud.instance_id[i]);
      pred.push_back(seg.labels[i]);
    }
  EXPECT_GE(label_agreement(truth, pred), 0.95);
}

TEST(Ams3d, EqualSlopesSingleCrown)
{
  const auto cloud = fixtures::cone_stand({ { 0, 0, 18.0, 3.0 } }, 0.25, 0.0, 5.0);
  AMS3DParams p;
  p.s_s = p.s_z = 0.5;
  EXPECT_EQ(ams3d_segment(cloud, fixtures::flat_ground(0.0), p, 2).instance_count(), 1u);
}

TEST(Ams3d, TabulatedConfigurationsAccepted)
{
  const auto cloud = fixtures::cone_stand({ { 0, 0, 15.0, 2.5 } }, 0.4, 0.0, 4.0);
  const auto ground = fixtures::flat_ground(0.0);
  for (auto [ss, sz] : { std::pair{ 0.3, 0.4 }, { 0.3, 0.8 } }) {
    AMS3DParams p;
    p.s_s = ss;
    p.s_z = sz;
    EXPECT_NO_THROW(p.validate());
    EXPECT_NO_THROW(ams3d_segment(cloud, ground, p, 3));
  }
  AMS3DParams bad;
  bad.s_z = 1.2;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Ams3d, SeedDeterminism)
{
  const auto cloud = fixtures::cone_stand({ { -5, 0 }, { 5, 0, 17.0 } }, 0.2, 0.0, 9.0);
  AMS3DParams p;
  p.work_density = 20.0;
  const auto ground = fixtures::flat_ground(0.0);
  EXPECT_EQ(ams3d_segment(cloud, ground, p, 4).labels, ams3d_segment(cloud, ground, p, 4).labels);
}
