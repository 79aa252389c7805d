#include "lsd/spectral.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "lsd/error.hpp"

namespace lsd {

using ad::Tensor;
using ad::Var;

namespace {

constexpr double kDegenerateArea = 1e-12;
constexpr double kCotClamp = 1e6;

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

}  // namespace

Eigen::MatrixXd cotangent_stiffness(const TriMesh& mesh, std::size_t* clamped) {
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  std::size_t bad = 0;
  for (Index f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces()[f];
    const bool degenerate = mesh.face_area(f) < kDegenerateArea;
    bad += degenerate;
    for (int corner = 0; corner < 3; ++corner) {
      const Index o = face[corner], a = face[(corner + 1) % 3], b = face[(corner + 2) % 3];
      const Vec3 u = mesh.position(a) - mesh.position(o);
      const Vec3 v = mesh.position(b) - mesh.position(o);
      const double cross = u.cross(v).norm();
      double cot = cross > 0.0 ? u.dot(v) / cross : (u.dot(v) >= 0.0 ? kCotClamp : -kCotClamp);
      if (degenerate) cot = std::clamp(cot, -kCotClamp, kCotClamp);
      const double half = 0.5 * cot;
      w(a, b) -= half;
      w(b, a) -= half;
      w(a, a) += half;
      w(b, b) += half;
    }
  }
  if (clamped) *clamped = bad;
  return w;
}

Eigen::VectorXd lumped_mass(const TriMesh& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.vertex_count());
  for (Index f = 0; f < mesh.face_count(); ++f) {
    const double third = mesh.face_area(f) / 3.0;
    for (Index v : mesh.faces()[f]) m(v) += third;
  }
  return m;
}

SpectralBasis laplacian_basis(const TriMesh& mesh, std::size_t k) {
  const auto n = static_cast<std::size_t>(mesh.vertex_count());
  if (n == 0) throw ValidationError("laplacian basis: empty mesh");
  if (n > kMaxDenseVertices)
    throw ValidationError("laplacian basis: " + std::to_string(n) +
                          " vertices exceed the dense solver limit of " +
                          std::to_string(kMaxDenseVertices));
  if (k == 0 || k > n)
    throw ValidationError("laplacian basis: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");
  SpectralBasis out;
  out.mass = lumped_mass(mesh);
  for (std::size_t v = 0; v < n; ++v)
    if (!(out.mass(static_cast<Eigen::Index>(v)) > 0.0))
      throw ValidationError("laplacian basis: vertex " + std::to_string(v) +
                            " has no incident area");
  const Eigen::MatrixXd w = cotangent_stiffness(mesh, &out.clamped_faces);
  const Eigen::VectorXd inv_sqrt = out.mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd a = inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal();
  a = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw NumericalError("laplacian basis: eigensolver failed");

  const auto kk = static_cast<Eigen::Index>(k);
  out.eigenvalues = es.eigenvalues().head(kk);
  const double scale = std::max(1.0, std::abs(es.eigenvalues()(es.eigenvalues().size() - 1)));
  for (Eigen::Index i = 0; i < kk; ++i) {
    double& lambda = out.eigenvalues(i);
    if (lambda < -1e-8 * scale)
      throw NumericalError("laplacian basis: negative eigenvalue " + std::to_string(lambda));
    lambda = std::max(lambda, 0.0);
  }
  out.phi = inv_sqrt.asDiagonal() * es.eigenvectors().leftCols(kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    const double peak = out.phi.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < out.phi.rows(); ++r) {
      if (std::abs(out.phi(r, c)) >= peak * (1.0 - 1e-9)) {
        if (out.phi(r, c) < 0.0) out.phi.col(c) *= -1.0;
        break;
      }
    }
  }
  return out;
}

FunctionalMap functional_map(Var features_x, Var features_y, const SpectralBasis& x,
                             const SpectralBasis& y, double damping) {
  const auto& sx = features_x.shape();
  const auto& sy = features_y.shape();
  if (sx.size() != 2 || sy.size() != 2 || sx[1] != sy[1] || sx[0] != x.vertex_count() ||
      sy[0] != y.vertex_count())
    throw ValidationError("functional map: features " + ad::shape_string(sx) + " and " +
                          ad::shape_string(sy) + " do not match bases of " +
                          std::to_string(x.vertex_count()) + " and " +
                          std::to_string(y.vertex_count()) + " vertices");
  ad::Tape& tape = *features_x.tape();
  const Eigen::MatrixXd px = x.phi.transpose() * x.mass.asDiagonal();
  const Eigen::MatrixXd py = y.phi.transpose() * y.mass.asDiagonal();
  Var a = ad::matmul(tape.constant(to_tensor(px)), features_x);
  Var b = ad::matmul(tape.constant(to_tensor(py)), features_y);
  Var at = ad::transpose(a);
  const Eigen::MatrixXd damp = damping * Eigen::MatrixXd::Identity(a.value().rows(), a.value().rows());
  Var gram = ad::add(ad::matmul(a, at), tape.constant(to_tensor(damp)));

  FunctionalMap out;
  const Eigen::MatrixXd g = to_matrix(gram.value()) - damp;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff(), lo = es.eigenvalues().minCoeff();
  out.rcond = hi > 0.0 ? std::max(lo, 0.0) / hi : 0.0;
  out.rank_deficient = lo < 1e6 * damping;
  out.c = ad::matmul(ad::matmul(b, at), ad::inverse(gram));
  return out;
}

Var soft_correspondence(Var c, const SpectralBasis& x, const SpectralBasis& y) {
  const auto& s = c.shape();
  if (s.size() != 2 || s[0] != y.k() || s[1] != x.k())
    throw ValidationError("soft correspondence: map " + ad::shape_string(s) + " vs bases with k=" +
                          std::to_string(y.k()) + "," + std::to_string(x.k()));
  ad::Tape& tape = *c.tape();
  Var scores = ad::matmul(ad::matmul(tape.constant(to_tensor(y.phi)), c),
                          tape.constant(to_tensor(x.phi.transpose())));
  return ad::transpose(ad::softmax(ad::transpose(ad::abs(scores))));
}

std::vector<Index> hard_matches(const Tensor& p) {
  std::vector<Index> out(p.cols(), 0);
  for (std::size_t x = 0; x < p.cols(); ++x) {
    std::size_t best = 0;
    for (std::size_t y = 1; y < p.rows(); ++y)
      if (p.at(y, x) > p.at(best, x)) best = y;
    out[x] = static_cast<Index>(best);
  }
  return out;
}

Var fmnet_loss(Var p, const Eigen::MatrixXd& geodesics_y, std::span<const Index> truth) {
  const auto& s = p.shape();
  const auto ny = static_cast<std::size_t>(geodesics_y.rows());
  if (s.size() != 2 || s[0] != ny || static_cast<std::size_t>(geodesics_y.cols()) != ny ||
      s[1] != truth.size())
    throw ValidationError("fmnet loss: P " + ad::shape_string(s) + ", distances " +
                          std::to_string(geodesics_y.rows()) + "x" +
                          std::to_string(geodesics_y.cols()) + ", " +
                          std::to_string(truth.size()) + " ground-truth targets");
  Tensor target({ny, truth.size()});
  for (std::size_t x = 0; x < truth.size(); ++x) {
    if (truth[x] < 0 || static_cast<std::size_t>(truth[x]) >= ny)
      throw ValidationError("fmnet loss: target " + std::to_string(truth[x]) + " out of range");
    for (std::size_t y = 0; y < ny; ++y)
      target.at(y, x) = geodesics_y(static_cast<Eigen::Index>(y), truth[x]);
  }
  Var weighted = ad::mul(p, p.tape()->constant(std::move(target)));
  return ad::scale(ad::frobenius_sq(weighted), 1.0 / static_cast<double>(truth.size()));
}

}  // namespace lsd
