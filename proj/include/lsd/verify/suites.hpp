#pragma once

#include <cstdint>
#include <string>
#include <vector>

/// Self-contained property suites. Each returns one verdict with a short
/// numeric summary; tolerances are fixed inside each suite.
namespace lsd::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  /// Fewer trials and points, for smoke runs.
  bool quick = false;
};

/// Finite-difference checks of every tape operation and of whole networks.
SuiteResult gradient_suite(const SuiteOptions& options = {});
/// Descriptor agreement under random global rotations of a 200-vertex mesh,
/// measured on vertices whose receptive fields have strict frames.
SuiteResult rotation_suite(const SuiteOptions& options = {});
/// Dijkstra against Bellman-Ford, FPS against a brute-force reference and
/// sphere graph distances against great-circle arcs.
SuiteResult geometry_suite(const SuiteOptions& options = {});
/// Frame orthonormality, rotation equivariance and the cylinder axis.
SuiteResult lrf_suite(const SuiteOptions& options = {});
/// Laplacian basis sanity, a rectangle's analytic spectrum and the
/// self-map functional map.
SuiteResult spectral_suite(const SuiteOptions& options = {});

std::vector<SuiteResult> run_all_suites(const SuiteOptions& options = {});

}  // namespace lsd::verify
