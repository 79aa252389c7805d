#include "lsd/shapes.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Geometry>

namespace lsd::shapes {

using std::numbers::pi;

TriMesh tetrahedron() {
  std::vector<Vec3> v{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  std::vector<Face> f{{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v{{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                      {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                      {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : v) p.normalize();
  std::vector<Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<Index, Index>, Index> mid;
    auto midpoint = [&](Index a, Index b) {
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const auto id = static_cast<Index>(v.size() - 1);
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& tri : f) {
      Index a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  for (Vec3& p : v) p *= radius;
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh grid(int nx, int ny, double width, double height) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      v.emplace_back(width * i / (nx - 1), height * j / (ny - 1), 0.0);
  auto id = [nx](int i, int j) { return static_cast<Index>(j * nx + i); };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh cylinder(double radius, double height, int around, int along) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int j = 0; j < along; ++j)
    for (int i = 0; i < around; ++i) {
      const double th = 2 * pi * i / around;
      v.emplace_back(radius * std::cos(th), radius * std::sin(th), height * j / (along - 1));
    }
  auto id = [around](int i, int j) { return static_cast<Index>(j * around + (i % around)); };
  for (int j = 0; j + 1 < along; ++j)
    for (int i = 0; i < around; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh chain(int count, double spacing) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  const double far = 10.0 * spacing * count;
  for (int i = 0; i < count; ++i) v.emplace_back(spacing * i, 0.0, 0.0);
  for (int i = 0; i + 1 < count; ++i) v.emplace_back(spacing * (i + 0.5), far, 0.0);
  for (int i = 0; i + 1 < count; ++i) f.push_back({i, i + 1, static_cast<Index>(count + i)});
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh torus(double major, double minor, int around, int tube) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int i = 0; i < around; ++i)
    for (int j = 0; j < tube; ++j) {
      const double u = 2 * pi * i / around, w = 2 * pi * j / tube;
      const double r = major + minor * std::cos(w);
      v.emplace_back(r * std::cos(u), r * std::sin(u), minor * std::sin(w));
    }
  auto id = [&](int i, int j) { return static_cast<Index>((i % around) * tube + (j % tube)); };
  for (int i = 0; i < around; ++i)
    for (int j = 0; j < tube; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh jittered(const TriMesh& mesh, double amp, std::uint64_t seed) {
  const TriMesh withn = estimate_normals(mesh);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<Vec3> v = mesh.vertices();
  for (Index i = 0; i < mesh.vertex_count(); ++i) v[i] += u(rng) * withn.normal(i);
  return TriMesh::build(std::move(v), mesh.faces());
}

Revolved revolve(const std::function<double(double)>& radius,
                 const std::function<int(double)>& label, double height, int around,
                 int rings) {
  Revolved out;
  std::vector<Vec3> v;
  std::vector<Face> f;
  v.emplace_back(0.0, 0.0, 0.0);
  out.labels.push_back(label(0.5 / (rings + 1)));
  for (int j = 0; j < rings; ++j) {
    const double t = (j + 1.0) / (rings + 1.0);
    const double r = radius(t);
    // Stagger alternate rings to avoid degenerate symmetric quads.
    const double phase = (j % 2) * pi / around;
    for (int i = 0; i < around; ++i) {
      const double th = 2 * pi * i / around + phase;
      v.emplace_back(r * std::cos(th), r * std::sin(th), height * t);
      out.labels.push_back(label(t));
    }
  }
  v.emplace_back(0.0, 0.0, height);
  out.labels.push_back(label(1.0 - 0.5 / (rings + 1)));
  const auto top = static_cast<Index>(v.size() - 1);
  auto id = [around](int i, int j) { return static_cast<Index>(1 + j * around + (i % around)); };
  for (int i = 0; i < around; ++i) f.push_back({0, id(i + 1, 0), id(i, 0)});
  for (int j = 0; j + 1 < rings; ++j)
    for (int i = 0; i < around; ++i) {
      if (j % 2 == 0) {
        f.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        f.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  for (int i = 0; i < around; ++i) f.push_back({top, id(i, rings - 1), id(i + 1, rings - 1)});
  out.mesh = TriMesh::build(std::move(v), std::move(f));
  return out;
}

Revolved cylinder_sphere(int around, int rings) {
  // Axis length 4: cylinder of radius 0.5 over z in [0, 2.5), sphere of
  // radius 1 centred at z = 3 above that.
  constexpr double kHeight = 4.0;
  constexpr double kJoin = 2.5 / kHeight;
  auto radius = [](double t) {
    const double z = t * kHeight;
    if (z < 2.5) return 0.5 * std::sqrt(std::min(1.0, z / 0.25));
    const double dz = z - 3.0;
    return std::sqrt(std::max(1e-4, 1.0 - dz * dz));
  };
  auto label = [](double t) { return t < kJoin ? 0 : 1; };
  return revolve(radius, label, kHeight, around, rings);
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(2 * pi * u2), a * std::cos(2 * pi * u2),
                       b * std::sin(2 * pi * u3), b * std::cos(2 * pi * u3));
  return q.normalized().toRotationMatrix();
}

}  // namespace lsd::shapes
