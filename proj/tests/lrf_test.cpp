#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

#include "lsd/error.hpp"
#include "lsd/lrf.hpp"
#include "lsd/shapes.hpp"

using namespace lsd;

namespace {

void expect_rotation(const Lrf& f) {
  EXPECT_LT((f.rotation.transpose() * f.rotation - Mat3::Identity()).norm(), 1e-9);
  EXPECT_NEAR(f.rotation.determinant(), 1.0, 1e-9);
}

bool parallel(const Vec3& a, const Vec3& b, double tol) {
  return std::abs(std::abs(a.normalized().dot(b.normalized())) - 1.0) < tol;
}

// Center at the origin with a fan of points on an ellipse of semi-axes 2 and 1.
TriMesh ellipse_fan(int points) {
  std::vector<Vec3> v{Vec3::Zero()};
  std::vector<Face> f;
  for (int i = 0; i < points; ++i) {
    const double t = 2 * std::numbers::pi * (i + 0.3) / points;
    v.emplace_back(2.0 * std::cos(t), std::sin(t), 0.0);
    f.push_back({0, static_cast<Index>(1 + i), static_cast<Index>(1 + (i + 1) % points)});
  }
  return TriMesh::build(std::move(v), std::move(f));
}

std::vector<BallMember> full_support(const TriMesh& m, Index center) {
  std::vector<BallMember> s;
  for (Index v = 0; v < m.vertex_count(); ++v)
    s.push_back({v, (m.position(v) - m.position(center)).norm()});
  return s;
}

}  // namespace

TEST(LrfShot, EllipseMajorAxisIsX) {
  const TriMesh m = ellipse_fan(16);
  const Lrf f = lrf_shot(m, 0, full_support(m, 0), 5.0);
  ASSERT_TRUE(f.reliable);
  expect_rotation(f);
  EXPECT_TRUE(parallel(f.rotation.col(0), Vec3::UnitX(), 1e-9));
  EXPECT_TRUE(parallel(f.rotation.col(2), Vec3::UnitZ(), 1e-9));
}

TEST(LrfShot, TetrahedronSupportIsUnreliable) {
  const TriMesh m = shapes::tetrahedron();
  const Lrf f = lrf_shot(m, 0, full_support(m, 0), 10.0);
  EXPECT_FALSE(f.reliable);
  EXPECT_FALSE(f.strict());
  expect_rotation(f);
}

TEST(LrfShot, TooFewPointsIsUnreliable) {
  const TriMesh m = shapes::grid(2, 2, 1.0, 1.0);
  const std::vector<BallMember> s{{0, 0.0}, {1, 1.0}, {2, 1.0}};
  EXPECT_FALSE(lrf_shot(m, 0, s, 2.0).reliable);
}

TEST(LrfShot, MajorityOrientsAxes) {
  // Offsets that mostly point along +x and +z.
  std::vector<Vec3> v{Vec3::Zero(), {3, 0, 0.4}, {2.5, 0.5, 0.3}, {2, -0.5, 0.2}, {-1, 0.2, -0.1},
                      {1.5, 0.1, 0.5}};
  std::vector<Face> f{{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 5}};
  const TriMesh m = TriMesh::build(v, f);
  const Lrf lrf = lrf_shot(m, 0, full_support(m, 0), 10.0);
  ASSERT_TRUE(lrf.reliable);
  int xpos = 0;
  for (Index i = 1; i < 6; ++i) xpos += m.position(i).dot(lrf.rotation.col(0)) >= 0.0;
  EXPECT_GE(xpos, 3);
  EXPECT_EQ(lrf.variant, LrfVariant::Shot);
}

TEST(LrfCurvature, RequiresGeometry) {
  EXPECT_THROW(lrf_curvature(shapes::icosphere(1), 0), ValidationError);
}

TEST(LrfCurvature, PlaneFallsBack) {
  const TriMesh m = with_geometry(shapes::grid(9, 9, 1.0, 1.0));
  const Lrf f = lrf_curvature(m, 40);
  EXPECT_FALSE(f.reliable);
  EXPECT_FALSE(f.strict());
  expect_rotation(f);
}

TEST(LrfCurvature, CylinderFrame) {
  const TriMesh m = with_geometry(shapes::cylinder(0.5, 3.0, 24, 24));
  int checked = 0;
  for (Index v = 0; v < m.vertex_count(); ++v) {
    const Vec3& p = m.position(v);
    if (p.z() < 0.5 || p.z() > 2.5) continue;
    const Lrf f = lrf_curvature(m, v);
    ASSERT_TRUE(f.reliable);
    expect_rotation(f);
    EXPECT_TRUE(parallel(f.rotation.col(0), Vec3(p.x(), p.y(), 0.0), 1e-3));
    EXPECT_TRUE(parallel(f.rotation.col(1), Vec3(-p.y(), p.x(), 0.0), 1e-2));
    EXPECT_TRUE(parallel(f.rotation.col(2), Vec3::UnitZ(), 1e-2));
    ++checked;
  }
  EXPECT_GT(checked, 300);
}

TEST(LrfBoth, EquivariantUnderRotation) {
  const TriMesh m = with_geometry(shapes::jittered(shapes::torus(1.0, 0.35, 16, 8), 0.03, 5));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = shapes::random_rotation(rng);
    const TriMesh moved = with_geometry(transformed(m, r, Vec3(0.3, -1.0, 2.0)));
    for (LrfVariant variant : {LrfVariant::Shot, LrfVariant::Curvature})
      for (Index v = 0; v < m.vertex_count(); v += 3) {
        const Lrf a = compute_lrf(m, v, variant, 0.5);
        const Lrf b = compute_lrf(moved, v, variant, 0.5);
        expect_rotation(a);
        if (!a.strict() || !b.strict()) continue;
        EXPECT_LT((r * a.rotation - b.rotation).norm(), 1e-6) << v;
      }
  }
}
