#pragma once

#include <cstddef>
#include <vector>

#include "lsd/geodesy.hpp"
#include "lsd/lrf.hpp"
#include "lsd/mesh.hpp"

namespace lsd {

/// K neighbors of one center expressed in the center's frame.
struct AlignedPatch {
  Index center = 0;
  std::vector<Index> members;
  std::vector<Vec3> coords;   ///< R^T (x_j - x_i)
  std::vector<Vec3> normals;  ///< R^T n_j
  std::vector<double> geodesics;
  bool padded = false;

  std::size_t size() const { return members.size(); }
};

/// Aligns an already sampled neighborhood with `lrf`.
AlignedPatch align_patch(const TriMesh& mesh, const NeighborhoodSample& sample, const Lrf& lrf);

/// Ball query, FPS seeded at the center, de-mean and rotation into the frame.
AlignedPatch build_patch(const TriMesh& mesh, Index center, double tau, std::size_t k,
                         const Lrf& lrf);

struct PatchOptions {
  double tau = 0.0;
  std::size_t k = 16;
  LrfVariant variant = LrfVariant::Curvature;
  /// When false every patch uses the identity frame (world axes).
  bool use_lrf = true;
  int workers = 1;
};

/// Patches for every vertex of a mesh at one (tau, K), stored flat so a
/// layer can consume them as N*K rows.
struct PatchTable {
  double tau = 0.0;
  std::size_t k = 0;
  std::vector<NeighborhoodSample> samples;
  std::vector<Lrf> frames;

  // Derived, N*K rows in center-major order.
  std::vector<Index> members;
  std::vector<double> coords;   ///< N*K x 3
  std::vector<double> normals;  ///< N*K x 3
  std::vector<double> geodesics;

  std::size_t centers() const { return samples.size(); }
  AlignedPatch patch(Index center) const;
};

PatchTable build_patch_table(const TriMesh& mesh, const PatchOptions& options);

/// Rebuilds the derived flat arrays from samples and frames.
void realign(PatchTable& table, const TriMesh& mesh, bool use_lrf);

/// tau = base_radius * scale * sqrt(surface area).
double layer_radius(const TriMesh& mesh, double base_radius, double scale);

}  // namespace lsd
