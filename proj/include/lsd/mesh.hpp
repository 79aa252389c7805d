#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lsd {

using Index = std::int32_t;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<Index, 3>;

enum class MeshFormat { Off, Obj };

struct Edge {
  Index a;
  Index b;
  double length;
};

/// Triangle mesh with connectivity and per-vertex differential quantities.
///
/// Built once through `TriMesh::build` and treated as immutable afterwards;
/// the estimation passes return modified copies.
class TriMesh {
 public:
  TriMesh() = default;

  /// Validates faces and builds adjacency and edge lengths.
  static TriMesh build(std::vector<Vec3> vertices, std::vector<Face> faces);

  Index vertex_count() const { return static_cast<Index>(vertices_.size()); }
  Index face_count() const { return static_cast<Index>(faces_.size()); }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const Vec3& position(Index v) const { return vertices_[v]; }

  std::span<const Index> neighbors(Index v) const {
    return {adj_.data() + adj_offsets_[v],
            static_cast<std::size_t>(adj_offsets_[v + 1] - adj_offsets_[v])};
  }
  /// Edge lengths parallel to `neighbors(v)`.
  std::span<const double> neighbor_lengths(Index v) const {
    return {adj_len_.data() + adj_offsets_[v],
            static_cast<std::size_t>(adj_offsets_[v + 1] - adj_offsets_[v])};
  }
  const std::vector<Edge>& edges() const { return edges_; }

  bool has_normals() const { return !normals_.empty(); }
  bool has_curvature() const { return !curvature_dirs_.empty(); }
  const std::vector<Vec3>& normals() const { return normals_; }
  const Vec3& normal(Index v) const { return normals_[v]; }
  const std::vector<Vec3>& curvature_dirs() const { return curvature_dirs_; }
  const Vec3& curvature_dir(Index v) const { return curvature_dirs_[v]; }

  bool isolated(Index v) const { return isolated_[v] != 0; }
  bool non_manifold(Index v) const { return non_manifold_[v] != 0; }
  /// False for umbilic or under-determined vertices; set by curvature estimation.
  bool curvature_reliable(Index v) const {
    return !curvature_reliable_.empty() && curvature_reliable_[v] != 0;
  }
  /// Vertices that may serve as patch centers.
  bool center_eligible(Index v) const { return !isolated(v) && !non_manifold(v); }

  double face_area(Index f) const;
  double surface_area() const;

  friend TriMesh estimate_normals(const TriMesh& mesh);
  friend TriMesh estimate_curvature_dirs(const TriMesh& mesh);

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<Index> adj_offsets_;
  std::vector<Index> adj_;
  std::vector<double> adj_len_;
  std::vector<Edge> edges_;
  std::vector<std::uint8_t> isolated_;
  std::vector<std::uint8_t> non_manifold_;

  std::vector<Vec3> normals_;
  std::vector<Vec3> curvature_dirs_;
  std::vector<std::uint8_t> curvature_reliable_;
};

TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
/// Format chosen by extension (.off or .obj).
TriMesh load_mesh(const std::filesystem::path& path);
TriMesh parse_off(std::string_view text, const std::string& origin = "<memory>");
TriMesh parse_obj(std::string_view text, const std::string& origin = "<memory>");

/// OFF with 17 significant digits, so a reload reproduces vertices bit-exactly.
void save_off(const TriMesh& mesh, const std::filesystem::path& path);
std::string to_off_string(const TriMesh& mesh);

/// Area-weighted face normals averaged per vertex. Isolated vertices get a zero normal.
TriMesh estimate_normals(const TriMesh& mesh);

/// Maximum-curvature directions from a quadric fit over the 2-ring in the
/// tangent frame. Requires normals.
TriMesh estimate_curvature_dirs(const TriMesh& mesh);

/// Normals followed by curvature directions.
TriMesh with_geometry(const TriMesh& mesh);

/// Rigidly moved copy (x -> R x + t). Derived quantities are not carried over.
TriMesh transformed(const TriMesh& mesh, const Mat3& rotation, const Vec3& translation);

/// Vertices within `rings` edge hops of v, excluding v, in BFS order.
std::vector<Index> k_ring(const TriMesh& mesh, Index v, int rings);

/// FNV-1a over vertex coordinates and face indices.
std::uint64_t content_hash(const TriMesh& mesh);

std::uint64_t fnv1a(std::span<const std::byte> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lsd
