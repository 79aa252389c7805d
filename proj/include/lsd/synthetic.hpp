#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsd/train.hpp"

/// Procedural stand-in datasets with exact labels.
namespace lsd::synthetic {

/// Cylinder (class 0) capped by a sphere (class 1), optionally rotated.
LabeledShape two_part(const std::string& name, int around, int rings, const Mat3& rotation);

inline constexpr int kArticulatedTube = 0;
inline constexpr int kArticulatedBulb = 1;
inline constexpr int kArticulatedCap = 2;
inline constexpr int kArticulatedClasses = 3;

struct ArticulatedOptions {
  int around = 12;
  int rings = 24;
  /// Segments between the two end caps, alternating tube and bulb.
  int parts = 3;
  /// Randomly rotate every shape as a whole.
  bool rotate = true;
  /// Largest bend at each joint, radians.
  double max_bend = 0.6;
};

/// A bent chain: end cap, tube, bulb, tube, ..., end cap. Labels are the
/// segment kind, so each class has its own local profile. Lengths, radii,
/// joint bends and the global pose are drawn from `seed`.
LabeledShape articulated(const std::string& name, std::uint64_t seed,
                         const ArticulatedOptions& options = {});

/// `train` + `test` articulated shapes.
std::vector<LabeledShape> articulated_set(std::size_t train, std::size_t test, std::uint64_t seed,
                                          const ArticulatedOptions& options = {});

/// Smooth non-rigid deformation plus a random rigid motion; connectivity and
/// vertex order are preserved, so the identity is the ground truth.
TriMesh deformed(const TriMesh& mesh, std::uint64_t seed, double strength = 0.15);

struct MatchingSet {
  LabeledShape reference;
  std::vector<LabeledShape> shapes;  ///< labels hold the reference vertex
};

/// Deformed copies of `reference` with identity correspondence.
MatchingSet matching_set(const TriMesh& reference, std::size_t train, std::size_t test,
                         std::uint64_t seed);

}  // namespace lsd::synthetic
