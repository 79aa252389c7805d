#pragma once

#include <functional>
#include <random>
#include <vector>

#include "lsd/mesh.hpp"

/// Procedural meshes used as fixtures and as desk-scale stand-in datasets.
namespace lsd::shapes {

TriMesh tetrahedron();

/// Unit icosahedron refined `subdivisions` times, projected to the sphere.
TriMesh icosphere(int subdivisions, double radius = 1.0);

/// Planar grid in z = 0 with counter-clockwise winding (normals +z).
TriMesh grid(int nx, int ny, double width, double height);

/// Open tube around the z axis, outward winding.
TriMesh cylinder(double radius, double height, int around, int along);

/// Strip whose bottom row is `count` collinear vertices spaced `spacing`
/// apart; the top row is far enough away that bottom-row graph distances
/// are exactly multiples of `spacing`.
TriMesh chain(int count, double spacing = 1.0);

/// Torus with `around` x `tube` vertices, radii R and r.
TriMesh torus(double major, double minor, int around, int tube);

/// Per-vertex random displacement along the current normal, amplitude `amp`.
TriMesh jittered(const TriMesh& mesh, double amp, std::uint64_t seed);

/// Closed surface of revolution about z with poles; `radius(t)` for t in
/// (0,1) is the profile, `height` the axis length. Vertex count is
/// around*rings + 2. `label(t)` assigns a class per ring; poles take the
/// label of the adjacent ring.
struct Revolved {
  TriMesh mesh;
  std::vector<int> labels;
};
Revolved revolve(const std::function<double(double)>& radius,
                 const std::function<int(double)>& label, double height, int around,
                 int rings);

/// Capsule-like two-part shape: a cylinder (label 0) topped by a sphere
/// (label 1). Vertex count is around*rings + 2.
Revolved cylinder_sphere(int around, int rings);

/// Uniform random rotation (Shoemake quaternion sampling).
Mat3 random_rotation(std::mt19937_64& rng);

}  // namespace lsd::shapes
