#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lsd/autodiff.hpp"
#include "lsd/mesh.hpp"

namespace lsd {

/// Largest mesh handled by the dense eigensolver.
inline constexpr std::size_t kMaxDenseVertices = 1500;

/// Low end of the Laplace-Beltrami spectrum, mass-orthonormal eigenfunctions.
struct SpectralBasis {
  Eigen::VectorXd eigenvalues;  ///< ascending
  Eigen::MatrixXd phi;          ///< N x k
  Eigen::VectorXd mass;         ///< lumped (one third of incident areas)
  std::size_t clamped_faces = 0;

  std::size_t k() const { return static_cast<std::size_t>(phi.cols()); }
  std::size_t vertex_count() const { return static_cast<std::size_t>(phi.rows()); }
};

/// Symmetric cotangent stiffness with zero row sums (positive semidefinite
/// sign convention). `clamped` counts faces whose cotangents were clamped.
Eigen::MatrixXd cotangent_stiffness(const TriMesh& mesh, std::size_t* clamped = nullptr);
Eigen::VectorXd lumped_mass(const TriMesh& mesh);

/// k smallest eigenpairs of W phi = lambda M phi. Each eigenfunction is
/// signed so that its largest-magnitude entry (lowest index on ties) is
/// positive.
SpectralBasis laplacian_basis(const TriMesh& mesh, std::size_t k);

struct FunctionalMap {
  ad::Var c;  ///< k_Y x k_X
  /// Smallest eigenvalue of A A^T relative to its largest.
  double rcond = 0.0;
  /// True when the damping term is large enough to bias C noticeably.
  bool rank_deficient = false;
};

inline constexpr double kMapDamping = 1e-9;

/// Least-squares C with C A ~ B, A = Phi_X^T M_X F_X and B = Phi_Y^T M_Y F_Y,
/// via C = B A^T (A A^T + damping I)^-1.
FunctionalMap functional_map(ad::Var features_x, ad::Var features_y, const SpectralBasis& x,
                             const SpectralBasis& y, double damping = kMapDamping);

/// P [N_Y x N_X]: column x is softmax over y of |(Phi_Y C Phi_X^T)[y, x]|.
ad::Var soft_correspondence(ad::Var c, const SpectralBasis& x, const SpectralBasis& y);

/// Argmax over each column of P (lowest index on ties).
std::vector<Index> hard_matches(const ad::Tensor& p);

/// (1/N_X) * sum_{y,x} (P[y,x] * D_Y[y, truth[x]])^2.
ad::Var fmnet_loss(ad::Var p, const Eigen::MatrixXd& geodesics_y, std::span<const Index> truth);

}  // namespace lsd
