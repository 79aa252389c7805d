#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <Eigen/Geometry>

#include "lsd/error.hpp"
#include "lsd/mesh.hpp"
#include "lsd/shapes.hpp"

using namespace lsd;

namespace {

const char* kTetraOff =
    "OFF\n4 4 0\n"
    "0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
    "3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

double angle(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

void expect_structure(const TriMesh& m) {
  for (const Face& f : m.faces()) {
    for (Index v : f) EXPECT_LT(v, m.vertex_count());
    EXPECT_TRUE(f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
  }
  for (Index v = 0; v < m.vertex_count(); ++v)
    for (Index u : m.neighbors(v)) {
      auto back = m.neighbors(u);
      EXPECT_NE(std::find(back.begin(), back.end(), v), back.end());
    }
}

}  // namespace

TEST(MeshLoad, TetrahedronOff) {
  const TriMesh m = parse_off(kTetraOff);
  EXPECT_EQ(m.vertex_count(), 4);
  EXPECT_EQ(m.face_count(), 4);
  for (Index v = 0; v < 4; ++v) EXPECT_EQ(m.neighbors(v).size(), 3u);
  expect_structure(m);
}

TEST(MeshLoad, CountsOnHeaderLine) {
  const TriMesh m = parse_off("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  EXPECT_EQ(m.vertex_count(), 3);
  EXPECT_EQ(m.face_count(), 1);
}

TEST(MeshLoad, MissingVertexReportsLine) {
  try {
    parse_off("OFF\n5 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n", "bad.off");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line, 0);
    EXPECT_NE(std::string(e.what()).find("bad.off:"), std::string::npos);
  }
}

TEST(MeshLoad, RejectsOutOfRangeFace) {
  EXPECT_THROW(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"), ValidationError);
}

TEST(MeshLoad, ObjMatchesOff) {
  const TriMesh a = parse_off(kTetraOff);
  const TriMesh b = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1/1 2/2 4/4\nf 1 4 3\nf 2 3 4\n");
  EXPECT_EQ(a.vertices(), b.vertices());
  EXPECT_EQ(a.faces(), b.faces());
}

TEST(MeshLoad, OffRoundTripIsExact) {
  const TriMesh m = shapes::jittered(shapes::torus(1.0, 0.3, 8, 5), 0.05, 1);
  const auto path = std::filesystem::temp_directory_path() / "lsd_mesh_roundtrip.off";
  save_off(m, path);
  const TriMesh back = load_mesh(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.vertices(), m.vertices());
  EXPECT_EQ(back.faces(), m.faces());
  EXPECT_EQ(content_hash(back), content_hash(m));
}

TEST(MeshLoad, MissingFileIsIoError) {
  EXPECT_THROW(load_mesh("/nonexistent/mesh.off"), IoError);
}

TEST(MeshShapes, IcosphereCounts) {
  const TriMesh m = shapes::icosphere(2);
  EXPECT_EQ(m.vertex_count(), 162);
  EXPECT_EQ(m.face_count(), 320);
  expect_structure(m);
}

TEST(MeshNormals, FlatGridPointsUp) {
  const TriMesh m = estimate_normals(shapes::grid(6, 5, 1.0, 1.0));
  for (const Vec3& n : m.normals()) EXPECT_LT((n - Vec3::UnitZ()).norm(), 1e-12);
}

TEST(MeshNormals, SphereNormalsAreRadial) {
  const TriMesh m = estimate_normals(shapes::icosphere(2));
  for (Index v = 0; v < m.vertex_count(); ++v) {
    EXPECT_NEAR(m.normal(v).norm(), 1.0, 1e-9);
    EXPECT_LT(angle(m.normal(v), m.position(v)), 0.05);
  }
}

TEST(MeshNormals, TetrahedronApexIsAreaWeighted) {
  const TriMesh m = estimate_normals(parse_off(kTetraOff));
  const Index apex = 3;
  Vec3 sum = Vec3::Zero();
  for (const Face& f : m.faces()) {
    if (f[0] != apex && f[1] != apex && f[2] != apex) continue;
    // Cross product length is twice the area, so this is area weighting.
    sum += (m.position(f[1]) - m.position(f[0])).cross(m.position(f[2]) - m.position(f[0]));
  }
  EXPECT_LT((m.normal(apex) - sum.normalized()).norm(), 1e-12);
}

TEST(MeshCurvature, CylinderMaxDirectionIsCircumferential) {
  const TriMesh m = with_geometry(shapes::cylinder(1.0, 3.0, 24, 20));
  int checked = 0;
  for (Index v = 0; v < m.vertex_count(); ++v) {
    const Vec3& p = m.position(v);
    if (p.z() < 0.5 || p.z() > 2.5) continue;
    const Vec3 circ = Vec3(-p.y(), p.x(), 0.0).normalized();
    const Vec3& c = m.curvature_dir(v);
    EXPECT_NEAR(c.norm(), 1.0, 1e-9);
    EXPECT_LT(std::abs(c.dot(m.normal(v))), 1e-6);
    EXPECT_LT(std::min(angle(c, circ), angle(-c, circ)), 0.1);
    EXPECT_TRUE(m.curvature_reliable(v));
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(MeshCurvature, PlaneAndSphereAreUmbilic) {
  for (const TriMesh& raw : {shapes::grid(8, 8, 1.0, 1.0), shapes::icosphere(2)}) {
    const TriMesh m = with_geometry(raw);
    for (Index v = 0; v < m.vertex_count(); ++v) {
      EXPECT_FALSE(m.curvature_reliable(v)) << v;
      EXPECT_NEAR(m.curvature_dir(v).norm(), 1.0, 1e-9);
      EXPECT_LT(std::abs(m.curvature_dir(v).dot(m.normal(v))), 1e-6);
    }
  }
}

TEST(MeshTransform, RigidMotionPreservesStructure) {
  const TriMesh m = shapes::torus(1.0, 0.3, 8, 5);
  const Mat3 r = Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const TriMesh t = transformed(m, r, Vec3(1, -2, 0.5));
  EXPECT_EQ(t.faces(), m.faces());
  EXPECT_NEAR(t.surface_area(), m.surface_area(), 1e-12);
  EXPECT_NE(content_hash(t), content_hash(m));
}

TEST(MeshRings, KRingOfTetrahedron) {
  const TriMesh m = parse_off(kTetraOff);
  EXPECT_EQ(k_ring(m, 0, 1).size(), 3u);
  EXPECT_EQ(k_ring(m, 0, 2).size(), 3u);
}
