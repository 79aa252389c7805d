#include "lsd/lrf.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "lsd/error.hpp"

namespace lsd {

namespace {

constexpr double kEigenTieRel = 1e-9;

struct Vote {
  int positive = 0;
  int negative = 0;
  Index tie_vertex = -1;  // lowest-index voter with a nonzero projection
  double tie_projection = 0.0;

  void add(Index v, double projection) {
    (projection >= 0.0 ? positive : negative) += 1;
    if (projection != 0.0 && (tie_vertex < 0 || v < tie_vertex)) {
      tie_vertex = v;
      tie_projection = projection;
    }
  }
  int margin() const { return std::abs(positive - negative); }
  bool flip() const {
    if (positive != negative) return negative > positive;
    return tie_projection < 0.0;
  }
};

}  // namespace

Lrf lrf_shot(const TriMesh& mesh, Index center, std::span<const BallMember> support,
             double radius) {
  Lrf out;
  out.variant = LrfVariant::Shot;
  const Vec3& origin = mesh.position(center);

  Mat3 cov = Mat3::Zero();
  double wsum = 0.0;
  int used = 0;
  for (const BallMember& m : support) {
    const double w = radius - m.distance;
    if (m.vertex == center || w <= 0.0) continue;
    const Vec3 d = mesh.position(m.vertex) - origin;
    cov += w * d * d.transpose();
    wsum += w;
    ++used;
  }
  if (used < 3 || wsum <= 0.0) return out;
  cov /= wsum;

  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 lam = es.eigenvalues();  // ascending
  const double tol = kEigenTieRel * std::max(lam.sum(), 1e-300);
  if (lam(1) - lam(0) <= tol || lam(2) - lam(1) <= tol) return out;

  Vec3 x = es.eigenvectors().col(2);
  Vec3 z = es.eigenvectors().col(0);
  Vote vx, vz;
  for (const BallMember& m : support) {
    if (m.vertex == center || radius - m.distance <= 0.0) continue;
    const Vec3 d = mesh.position(m.vertex) - origin;
    vx.add(m.vertex, d.dot(x));
    vz.add(m.vertex, d.dot(z));
  }
  if (vx.flip()) x = -x;
  if (vz.flip()) z = -z;
  const Vec3 y = z.cross(x);
  out.rotation.col(0) = x;
  out.rotation.col(1) = y;
  out.rotation.col(2) = z;
  out.reliable = true;
  out.sign_margin = std::min(vx.margin(), vz.margin());
  return out;
}

Lrf lrf_curvature(const TriMesh& mesh, Index center) {
  if (!mesh.has_normals() || !mesh.has_curvature())
    throw ValidationError("curvature frame requires normals and curvature directions");
  const Vec3& n = mesh.normal(center);
  if (n.squaredNorm() == 0.0) return Lrf{Mat3::Identity(), LrfVariant::Curvature, false, 0};

  if (!mesh.curvature_reliable(center)) {
    const std::vector<Index> ring = k_ring(mesh, center, 2);
    // A 2-ring vertex is at most two edges away, so twice the longest edge
    // around the 1-ring bounds the search.
    double longest = 0.0;
    for (double len : mesh.neighbor_lengths(center)) longest = std::max(longest, len);
    for (Index u : mesh.neighbors(center))
      for (double len : mesh.neighbor_lengths(u)) longest = std::max(longest, len);
    const double bound = 2.0 * longest;
    const GeodesicField field = geodesic_distances(mesh, center, bound * (1.0 + 1e-9));
    std::vector<BallMember> support;
    support.reserve(ring.size());
    double far = 0.0;
    for (Index v : ring) {
      support.push_back({v, field.distances[v]});
      far = std::max(far, field.distances[v]);
    }
    Lrf fb = lrf_shot(mesh, center, support, 1.5 * far);
    fb.reliable = false;
    return fb;
  }

  const Vec3 rx = n;
  const Vec3 c = mesh.curvature_dir(center);
  Vec3 ry = (c - c.dot(rx) * rx).normalized();
  Vote vote;
  for (Index v : mesh.neighbors(center)) vote.add(v, (mesh.position(v) - mesh.position(center)).dot(ry));
  if (vote.flip()) ry = -ry;
  Lrf out;
  out.variant = LrfVariant::Curvature;
  out.rotation.col(0) = rx;
  out.rotation.col(1) = ry;
  out.rotation.col(2) = rx.cross(ry);
  out.reliable = true;
  out.sign_margin = vote.margin();
  return out;
}

Lrf compute_lrf(const TriMesh& mesh, Index center, LrfVariant variant, double tau) {
  if (variant == LrfVariant::Curvature) return lrf_curvature(mesh, center);
  const std::vector<BallMember> ball = geodesic_ball(mesh, center, tau);
  return lrf_shot(mesh, center, ball, tau);
}

}  // namespace lsd
