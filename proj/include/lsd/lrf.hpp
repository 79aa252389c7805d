#pragma once

#include <cstdint>
#include <span>

#include "lsd/geodesy.hpp"
#include "lsd/mesh.hpp"

namespace lsd {

enum class LrfVariant : std::uint8_t { Shot = 0, Curvature = 1 };

/// Local reference frame. Columns of `rotation` are the x, y, z axes.
struct Lrf {
  Mat3 rotation = Mat3::Identity();
  LrfVariant variant = LrfVariant::Shot;
  bool reliable = false;
  /// Smallest |#positive - #negative| vote over the sign-disambiguated axes.
  /// Frames with margin >= 2 are stable under small perturbations.
  int sign_margin = 0;

  bool strict() const { return reliable && sign_margin >= 2; }
};

/// SHOT-style frame: eigenvectors of the (radius - d)-weighted covariance of
/// support offsets about the center, x and z oriented toward the majority of
/// offsets, y = z x x. Degenerate spectra give an unreliable identity frame.
Lrf lrf_shot(const TriMesh& mesh, Index center, std::span<const BallMember> support,
             double radius);

/// Normal / projected maximum-curvature / cross-product frame. Umbilic or
/// unreliable vertices fall back to lrf_shot over the 2-ring, flagged
/// unreliable.
Lrf lrf_curvature(const TriMesh& mesh, Index center);

/// Frame for `center` under `variant`; the SHOT support is the geodesic ball
/// of radius `tau`.
Lrf compute_lrf(const TriMesh& mesh, Index center, LrfVariant variant, double tau);

}  // namespace lsd
