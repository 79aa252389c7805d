#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsd/error.hpp"
#include "lsd/patch.hpp"
#include "lsd/shapes.hpp"

using namespace lsd;

TEST(Patch, CenterComesFirstAtOrigin) {
  const TriMesh m = with_geometry(shapes::icosphere(2));
  for (Index c = 0; c < m.vertex_count(); c += 13) {
    const AlignedPatch p = build_patch(m, c, 0.5, 8, compute_lrf(m, c, LrfVariant::Curvature, 0.5));
    ASSERT_EQ(p.size(), 8u);
    EXPECT_EQ(p.members[0], c);
    EXPECT_EQ(p.coords[0], Vec3::Zero());
    EXPECT_EQ(p.geodesics[0], 0.0);
  }
}

TEST(Patch, IdentityFrameGivesWorldOffsets) {
  const TriMesh m = estimate_normals(shapes::grid(5, 5, 4.0, 4.0));
  const Index center = 12;  // (2, 2)
  const AlignedPatch p = build_patch(m, center, 1.5, 9, Lrf{});
  bool found = false;
  for (std::size_t j = 0; j < p.size(); ++j) {
    EXPECT_LT((p.coords[j] - (m.position(p.members[j]) - m.position(center))).norm(), 1e-15);
    EXPECT_LT((p.normals[j] - Vec3::UnitZ()).norm(), 1e-15);
    if (p.members[j] == 13) {
      EXPECT_EQ(p.coords[j], Vec3(1, 0, 0));
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Patch, RejectsEmptyPatch) {
  const TriMesh m = shapes::icosphere(1);
  EXPECT_THROW(build_patch(m, 0, 0.5, 0, Lrf{}), ValidationError);
  EXPECT_THROW(build_patch_table(m, PatchOptions{.tau = 0.0}), ValidationError);
}

TEST(PatchTable, FlatRowsMatchPatches) {
  const TriMesh m = with_geometry(shapes::torus(1.0, 0.35, 12, 6));
  const PatchTable t = build_patch_table(m, {.tau = 0.6, .k = 6});
  ASSERT_EQ(t.centers(), 72u);
  ASSERT_EQ(t.coords.size(), 72u * 6 * 3);
  for (Index c = 0; c < 72; c += 5) {
    const AlignedPatch direct = build_patch(m, c, 0.6, 6, t.frames[c]);
    const AlignedPatch flat = t.patch(c);
    EXPECT_EQ(direct.members, flat.members);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(direct.coords[j], flat.coords[j]);
  }
}

TEST(PatchTable, WorkerCountDoesNotChangeResult) {
  const TriMesh m = with_geometry(shapes::torus(1.0, 0.35, 12, 6));
  const PatchTable a = build_patch_table(m, {.tau = 0.6, .k = 6, .workers = 1});
  const PatchTable b = build_patch_table(m, {.tau = 0.6, .k = 6, .workers = 3});
  EXPECT_EQ(a.members, b.members);
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_EQ(a.normals, b.normals);
}

TEST(PatchTable, WithoutFramesUsesWorldAxes) {
  const TriMesh m = with_geometry(shapes::torus(1.0, 0.35, 12, 6));
  const PatchTable t = build_patch_table(m, {.tau = 0.6, .k = 6, .use_lrf = false});
  for (std::size_t r = 0; r < t.members.size(); ++r) {
    const Index c = static_cast<Index>(r / 6);
    const Vec3 off = m.position(t.members[r]) - m.position(c);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(t.coords[r * 3 + a], off(a), 1e-15);
  }
}

TEST(PatchTable, InvariantUnderRigidMotion) {
  const TriMesh m = with_geometry(shapes::jittered(shapes::torus(1.0, 0.35, 16, 8), 0.03, 2));
  std::mt19937_64 rng(4);
  for (LrfVariant variant : {LrfVariant::Curvature, LrfVariant::Shot}) {
    const PatchOptions opt{.tau = 0.5, .k = 8, .variant = variant};
    const PatchTable a = build_patch_table(m, opt);
    for (int trial = 0; trial < 3; ++trial) {
      const TriMesh moved = with_geometry(transformed(m, shapes::random_rotation(rng), Vec3(2, 1, -3)));
      const PatchTable b = build_patch_table(moved, opt);
      EXPECT_EQ(a.members, b.members);
      int strict = 0;
      for (std::size_t c = 0; c < a.centers(); ++c) {
        if (!a.frames[c].strict() || !b.frames[c].strict()) continue;
        ++strict;
        for (std::size_t j = 0; j < 8 * 3; ++j) {
          EXPECT_NEAR(a.coords[c * 24 + j], b.coords[c * 24 + j], 1e-9);
          EXPECT_NEAR(a.normals[c * 24 + j], b.normals[c * 24 + j], 1e-9);
        }
      }
      EXPECT_GT(strict, 0);
    }
  }
}

TEST(PatchTable, RadiusScalesWithArea) {
  const TriMesh m = shapes::icosphere(2);
  EXPECT_NEAR(layer_radius(m, 0.1, 2.0), 0.2 * std::sqrt(m.surface_area()), 1e-15);
}
