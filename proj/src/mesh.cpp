#include "lsd/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "lsd/error.hpp"

namespace lsd {

namespace {

// Principal curvatures closer than this (absolute, or relative to the
// larger magnitude) mark the vertex as umbilic.
constexpr double kUmbilicAbs = 1e-6;
constexpr double kUmbilicRel = 0.2;
constexpr int kMinFitPoints = 5;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Line-oriented tokenizer that tracks line numbers and skips comments.
class LineReader {
 public:
  LineReader(std::string_view text, std::string origin)
      : text_(text), origin_(std::move(origin)) {}

  /// Next non-empty, non-comment line split into tokens; false at EOF.
  bool next(std::vector<std::string_view>& tokens) {
    while (pos_ <= text_.size()) {
      if (pos_ == text_.size()) {
        ++line_;
        pos_ = text_.size() + 1;
        return false;
      }
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      tokens.clear();
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) tokens.push_back(line.substr(i, j - i));
        i = j;
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  int line() const { return line_; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(origin_, line_, what); }

  double to_double(std::string_view tok) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      fail("malformed number '" + std::string(tok) + "'");
    return v;
  }
  long to_int(std::string_view tok) const {
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      fail("malformed integer '" + std::string(tok) + "'");
    return v;
  }

 private:
  std::string_view text_;
  std::string origin_;
  std::size_t pos_ = 0;
  int line_ = 0;
};

Vec3 any_orthogonal(const Vec3& n) {
  Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return (a - a.dot(n) * n).normalized();
}

}  // namespace

TriMesh TriMesh::build(std::vector<Vec3> vertices, std::vector<Face> faces) {
  const auto n = static_cast<Index>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    for (Index v : t)
      if (v < 0 || v >= n)
        throw ValidationError("face " + std::to_string(f) + " references vertex " +
                              std::to_string(v) + " of " + std::to_string(n));
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw ValidationError("face " + std::to_string(f) + " is degenerate");
  }

  TriMesh m;
  m.vertices_ = std::move(vertices);
  m.faces_ = std::move(faces);

  std::map<std::pair<Index, Index>, int> edge_faces;
  for (const Face& t : m.faces_)
    for (int k = 0; k < 3; ++k) {
      Index a = t[k], b = t[(k + 1) % 3];
      ++edge_faces[{std::min(a, b), std::max(a, b)}];
    }

  std::vector<std::vector<Index>> adj(n);
  m.non_manifold_.assign(n, 0);
  m.edges_.reserve(edge_faces.size());
  for (const auto& [key, count] : edge_faces) {
    auto [a, b] = key;
    adj[a].push_back(b);
    adj[b].push_back(a);
    m.edges_.push_back({a, b, (m.vertices_[a] - m.vertices_[b]).norm()});
    if (count > 2) m.non_manifold_[a] = m.non_manifold_[b] = 1;
  }

  m.adj_offsets_.assign(n + 1, 0);
  m.isolated_.assign(n, 0);
  for (Index v = 0; v < n; ++v) {
    std::sort(adj[v].begin(), adj[v].end());
    m.adj_offsets_[v + 1] = m.adj_offsets_[v] + static_cast<Index>(adj[v].size());
    m.isolated_[v] = adj[v].empty() ? 1 : 0;
  }
  m.adj_.reserve(m.adj_offsets_[n]);
  m.adj_len_.reserve(m.adj_offsets_[n]);
  for (Index v = 0; v < n; ++v)
    for (Index u : adj[v]) {
      m.adj_.push_back(u);
      m.adj_len_.push_back((m.vertices_[v] - m.vertices_[u]).norm());
    }
  return m;
}

double TriMesh::face_area(Index f) const {
  const Face& t = faces_[f];
  return 0.5 * (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).norm();
}

double TriMesh::surface_area() const {
  double a = 0.0;
  for (Index f = 0; f < face_count(); ++f) a += face_area(f);
  return a;
}

TriMesh parse_off(std::string_view text, const std::string& origin) {
  LineReader reader(text, origin);
  std::vector<std::string_view> tok;
  if (!reader.next(tok)) reader.fail("empty file");
  std::size_t first = 0;
  if (tok[0] == "OFF") {
    first = 1;
  } else if (tok[0].rfind("OFF", 0) == 0) {
    reader.fail("unsupported OFF variant '" + std::string(tok[0]) + "'");
  } else {
    reader.fail("missing OFF header");
  }
  if (tok.size() == first) {
    if (!reader.next(tok)) reader.fail("missing counts line");
    first = 0;
  }
  if (tok.size() - first < 2) reader.fail("counts line needs vertex and face counts");
  const long nv = reader.to_int(tok[first]);
  const long nf = reader.to_int(tok[first + 1]);
  if (nv < 0 || nf < 0) reader.fail("negative element count");

  std::vector<Vec3> vertices;
  vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!reader.next(tok))
      reader.fail("expected " + std::to_string(nv) + " vertices, found " + std::to_string(i));
    if (tok.size() < 3) reader.fail("vertex line needs 3 coordinates");
    vertices.emplace_back(reader.to_double(tok[0]), reader.to_double(tok[1]),
                          reader.to_double(tok[2]));
  }
  std::vector<Face> faces;
  faces.reserve(nf);
  for (long i = 0; i < nf; ++i) {
    if (!reader.next(tok))
      reader.fail("expected " + std::to_string(nf) + " faces, found " + std::to_string(i));
    const long count = reader.to_int(tok[0]);
    if (count != 3) reader.fail("non-triangular face with " + std::to_string(count) + " vertices");
    if (tok.size() < 4) reader.fail("face line needs 3 indices");
    Face f{};
    for (int k = 0; k < 3; ++k) {
      long idx = reader.to_int(tok[k + 1]);
      if (idx < 0 || idx >= nv) reader.fail("vertex index " + std::to_string(idx) + " out of range");
      f[k] = static_cast<Index>(idx);
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) reader.fail("degenerate face");
    faces.push_back(f);
  }
  return TriMesh::build(std::move(vertices), std::move(faces));
}

TriMesh parse_obj(std::string_view text, const std::string& origin) {
  LineReader reader(text, origin);
  std::vector<std::string_view> tok;
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<int> face_lines;
  while (reader.next(tok)) {
    if (tok[0] == "v") {
      if (tok.size() < 4) reader.fail("vertex line needs 3 coordinates");
      vertices.emplace_back(reader.to_double(tok[1]), reader.to_double(tok[2]),
                            reader.to_double(tok[3]));
    } else if (tok[0] == "f") {
      if (tok.size() != 4)
        reader.fail("non-triangular face with " + std::to_string(tok.size() - 1) + " vertices");
      Face f{};
      for (int k = 0; k < 3; ++k) {
        std::string_view t = tok[k + 1];
        t = t.substr(0, t.find('/'));
        long idx = reader.to_int(t);
        long n = static_cast<long>(vertices.size());
        long resolved = idx > 0 ? idx - 1 : n + idx;
        if (idx == 0 || resolved < 0 || resolved >= n)
          reader.fail("vertex index " + std::to_string(idx) + " out of range");
        f[k] = static_cast<Index>(resolved);
      }
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) reader.fail("degenerate face");
      faces.push_back(f);
    }
    // vn, vt, g, o, s, usemtl, ... are ignored.
  }
  return TriMesh::build(std::move(vertices), std::move(faces));
}

TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  const std::string text = read_file(path);
  return format == MeshFormat::Off ? parse_off(text, path.string()) : parse_obj(text, path.string());
}

TriMesh load_mesh(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".off") return load_mesh(path, MeshFormat::Off);
  if (ext == ".obj") return load_mesh(path, MeshFormat::Obj);
  throw ValidationError("unknown mesh extension '" + ext + "' for " + path.string());
}

std::string to_off_string(const TriMesh& mesh) {
  std::string out = "OFF\n" + std::to_string(mesh.vertex_count()) + " " +
                    std::to_string(mesh.face_count()) + " 0\n";
  char buf[128];
  for (const Vec3& p : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  for (const Face& f : mesh.faces()) {
    std::snprintf(buf, sizeof buf, "3 %d %d %d\n", f[0], f[1], f[2]);
    out += buf;
  }
  return out;
}

void save_off(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_off_string(mesh);
  if (!out) throw IoError("write failed for " + path.string());
}

TriMesh estimate_normals(const TriMesh& mesh) {
  TriMesh out = mesh;
  std::vector<Vec3> acc(mesh.vertex_count(), Vec3::Zero());
  for (const Face& f : mesh.faces()) {
    // |cross| = 2 * area, so the sum is area weighted.
    const Vec3 c = (mesh.position(f[1]) - mesh.position(f[0]))
                       .cross(mesh.position(f[2]) - mesh.position(f[0]));
    for (Index v : f) acc[v] += c;
  }
  for (Index v = 0; v < mesh.vertex_count(); ++v) {
    const double len = acc[v].norm();
    acc[v] = (mesh.isolated(v) || len == 0.0) ? Vec3::Zero() : Vec3(acc[v] / len);
  }
  out.normals_ = std::move(acc);
  out.curvature_dirs_.clear();
  out.curvature_reliable_.clear();
  return out;
}

TriMesh estimate_curvature_dirs(const TriMesh& mesh) {
  if (!mesh.has_normals()) throw ValidationError("curvature estimation requires normals");
  TriMesh out = mesh;
  const Index n = mesh.vertex_count();
  out.curvature_dirs_.assign(n, Vec3::Zero());
  out.curvature_reliable_.assign(n, 0);

  for (Index v = 0; v < n; ++v) {
    const Vec3& nrm = mesh.normal(v);
    if (nrm.squaredNorm() == 0.0) continue;
    const Vec3 t1 = any_orthogonal(nrm);
    const Vec3 t2 = nrm.cross(t1);
    const std::vector<Index> ring = k_ring(mesh, v, 2);

    // Fallback direction for unreliable vertices: any unit tangent.
    out.curvature_dirs_[v] = t1;
    if (static_cast<int>(ring.size()) < kMinFitPoints) continue;

    // w = a u^2 + b uv + c v^2 + d u + e v
    Eigen::MatrixXd design(ring.size(), 5);
    Eigen::VectorXd rhs(ring.size());
    for (std::size_t r = 0; r < ring.size(); ++r) {
      const Vec3 d = mesh.position(ring[r]) - mesh.position(v);
      const double u = d.dot(t1), w = d.dot(t2);
      design.row(r) << u * u, u * w, w * w, u, w;
      rhs(r) = d.dot(nrm);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 5) continue;
    const Eigen::VectorXd coef = qr.solve(rhs);

    Eigen::Matrix2d hess;
    hess << 2 * coef(0), coef(1), coef(1), 2 * coef(2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(hess);
    const double k_lo = es.eigenvalues()(0), k_hi = es.eigenvalues()(1);
    const int major = std::abs(k_hi) >= std::abs(k_lo) ? 1 : 0;
    const Eigen::Vector2d e = es.eigenvectors().col(major);
    Vec3 dir = e(0) * t1 + e(1) * t2;
    dir = (dir - dir.dot(nrm) * nrm).normalized();
    out.curvature_dirs_[v] = dir;

    const double gap = k_hi - k_lo;
    const double scale = std::max(std::abs(k_hi), std::abs(k_lo));
    const bool umbilic = gap <= kUmbilicAbs || gap <= kUmbilicRel * scale;
    out.curvature_reliable_[v] = umbilic ? 0 : 1;
  }
  return out;
}

TriMesh with_geometry(const TriMesh& mesh) { return estimate_curvature_dirs(estimate_normals(mesh)); }

TriMesh transformed(const TriMesh& mesh, const Mat3& rotation, const Vec3& translation) {
  std::vector<Vec3> verts;
  verts.reserve(mesh.vertices().size());
  for (const Vec3& p : mesh.vertices()) verts.push_back(rotation * p + translation);
  return TriMesh::build(std::move(verts), mesh.faces());
}

std::vector<Index> k_ring(const TriMesh& mesh, Index v, int rings) {
  std::vector<Index> out;
  std::vector<Index> frontier{v};
  std::vector<Index> seen{v};
  for (int r = 0; r < rings; ++r) {
    std::vector<Index> next;
    for (Index u : frontier)
      for (Index w : mesh.neighbors(u))
        if (std::find(seen.begin(), seen.end(), w) == seen.end()) {
          seen.push_back(w);
          next.push_back(w);
          out.push_back(w);
        }
    frontier = std::move(next);
  }
  return out;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t content_hash(const TriMesh& mesh) {
  std::uint64_t h = fnv1a(std::as_bytes(std::span(mesh.vertices().data(), mesh.vertices().size())));
  return fnv1a(std::as_bytes(std::span(mesh.faces().data(), mesh.faces().size())), h);
}

}  // namespace lsd
