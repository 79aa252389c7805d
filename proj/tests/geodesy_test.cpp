#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsd/error.hpp"
#include "lsd/geodesy.hpp"
#include "lsd/shapes.hpp"
#include "lsd/verify/oracles.hpp"

using namespace lsd;

TEST(Geodesic, ChainDistances) {
  const TriMesh m = shapes::chain(4);
  const GeodesicField f = geodesic_distances(m, 0);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(f.distances[i], static_cast<double>(i));
}

TEST(Geodesic, SourceIsZeroAndEdgesObeyTriangleInequality) {
  const TriMesh m = shapes::jittered(shapes::torus(1.0, 0.3, 12, 6), 0.05, 2);
  for (Index s : {0, 17, 40}) {
    const GeodesicField f = geodesic_distances(m, s);
    EXPECT_EQ(f.distances[static_cast<std::size_t>(s)], 0.0);
    for (const Edge& e : m.edges())
      EXPECT_LE(std::abs(f.distances[e.a] - f.distances[e.b]), e.length + 1e-12);
  }
}

TEST(Geodesic, MatchesBellmanFordExactly) {
  for (const TriMesh& m : {shapes::icosphere(1), shapes::grid(7, 7, 1.0, 1.0),
                           shapes::jittered(shapes::torus(1.0, 0.3, 8, 6), 0.05, 4)})
    for (Index s = 0; s < m.vertex_count(); ++s)
      EXPECT_EQ(geodesic_distances(m, s).distances, verify::bellman_ford(m, s)) << s;
}

TEST(Geodesic, CutoffLeavesFarVerticesInfinite) {
  const TriMesh m = shapes::chain(6);
  const GeodesicField f = geodesic_distances(m, 0, 2.5);
  EXPECT_EQ(f.distances[2], 2.0);
  EXPECT_TRUE(std::isinf(f.distances[3]));
}

TEST(Geodesic, IcosphereAntipodes) {
  const TriMesh m = shapes::icosphere(3);
  for (Index s = 0; s < m.vertex_count(); s += 50) {
    Index anti = 0;
    for (Index v = 0; v < m.vertex_count(); ++v)
      if ((m.position(v) + m.position(s)).norm() < (m.position(anti) + m.position(s)).norm()) anti = v;
    const double d = geodesic_distances(m, s).distances[static_cast<std::size_t>(anti)];
    EXPECT_GE(d, std::numbers::pi * 0.85);
    EXPECT_LE(d, std::numbers::pi * 1.15);
  }
}

TEST(GeodesicBall, ChainBall) {
  const auto ball = geodesic_ball(shapes::chain(5), 0, 1.5);
  ASSERT_EQ(ball.size(), 2u);
  EXPECT_EQ(ball[0].vertex, 0);
  EXPECT_EQ(ball[0].distance, 0.0);
  EXPECT_EQ(ball[1].vertex, 1);
  EXPECT_EQ(ball[1].distance, 1.0);
}

TEST(GeodesicBall, BoundaryIsExcluded) {
  const auto ball = geodesic_ball(shapes::chain(5), 0, 2.0);
  EXPECT_EQ(ball.size(), 2u);
}

TEST(GeodesicBall, LargeRadiusReachesEverything) {
  const TriMesh m = shapes::icosphere(1);
  EXPECT_EQ(geodesic_ball(m, 3, 1e9).size(), static_cast<std::size_t>(m.vertex_count()));
}

TEST(GeodesicBall, MatchesBruteForceCount) {
  const TriMesh m = shapes::icosphere(2);
  for (Index c = 0; c < m.vertex_count(); c += 7) {
    const auto full = verify::bellman_ford(m, c);
    const auto expected = std::count_if(full.begin(), full.end(), [](double d) { return d < 0.5; });
    const auto ball = geodesic_ball(m, c, 0.5);
    EXPECT_EQ(ball.size(), static_cast<std::size_t>(expected));
    for (std::size_t i = 1; i < ball.size(); ++i)
      EXPECT_TRUE(ball[i - 1].distance < ball[i].distance ||
                  (ball[i - 1].distance == ball[i].distance && ball[i - 1].vertex < ball[i].vertex));
  }
}

namespace {

PairwiseMetric line_metric(const std::vector<double>& xs) {
  return [xs](std::size_t a, std::size_t b) { return std::abs(xs[a] - xs[b]); };
}

}  // namespace

TEST(Fps, CollinearPoints) {
  const std::vector<Index> cand{0, 1, 2, 3, 4};
  const auto order = farthest_point_sample(cand, line_metric({0, 1, 2, 3, 4}), 3, 0);
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 4, 2}));
}

TEST(Fps, FullSelectionIsPermutation) {
  const std::vector<Index> cand{5, 9, 2, 7, 1, 3};
  auto order = farthest_point_sample(cand, line_metric({0.3, 2.0, 1.1, 5.0, 4.2, 3.3}), 6, 2);
  EXPECT_EQ(order.front(), 2u);
  std::sort(order.begin(), order.end());
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Fps, PaddingCyclesThroughPicks) {
  const std::vector<Index> cand{0, 1, 2};
  const auto order = farthest_point_sample(cand, line_metric({0, 1, 2}), 7, 0);
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 2, 1, 0, 2, 1, 0}));
}

TEST(Fps, TiesGoToLowestVertexIndex) {
  // Positions 1 and 2 are both at distance 1 from the seed; vertex 3 < 8.
  const std::vector<Index> cand{5, 8, 3};
  const auto order = farthest_point_sample(cand, line_metric({0, 1, -1}), 2, 0);
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 2}));
}

TEST(Fps, MatchesBruteForceOnRandomSets) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<Vec3> pts(30);
    for (Vec3& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    std::vector<Index> cand(30);
    for (int i = 0; i < 30; ++i) cand[i] = i;
    const PairwiseMetric metric = [&](std::size_t a, std::size_t b) { return (pts[a] - pts[b]).norm(); };
    EXPECT_EQ(farthest_point_sample(cand, metric, 8, 0), verify::brute_force_fps(cand, metric, 8, 0));
  }
}

TEST(Fps, RejectsBadSeed) {
  const std::vector<Index> cand{0, 1};
  EXPECT_THROW(farthest_point_sample(cand, line_metric({0, 1}), 2, 5), ValidationError);
}

TEST(Neighborhood, StartsAtCenterAndStaysInBall) {
  const TriMesh m = shapes::icosphere(2);
  const double tau = 0.6;
  for (Index c = 0; c < m.vertex_count(); c += 11) {
    const NeighborhoodSample s = sample_neighborhood(m, c, tau, 8);
    ASSERT_EQ(s.members.size(), 8u);
    EXPECT_EQ(s.members.front(), c);
    EXPECT_EQ(s.geodesics.front(), 0.0);
    for (double g : s.geodesics) EXPECT_LT(g, tau);
    if (!s.padded) {
      auto sorted = s.members;
      std::sort(sorted.begin(), sorted.end());
      EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    }
  }
}

TEST(Neighborhood, SmallBallIsPadded) {
  const NeighborhoodSample s = sample_neighborhood(shapes::chain(5), 0, 1.5, 4);
  EXPECT_TRUE(s.padded);
  EXPECT_EQ(s.members, (std::vector<Index>{0, 1, 0, 1}));
}
