#pragma once

#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "lsd/mesh.hpp"

namespace lsd {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Single-source graph geodesic distances; infinity where unreachable or
/// beyond the cutoff.
struct GeodesicField {
  Index source = 0;
  std::vector<double> distances;
};

struct BallMember {
  Index vertex;
  double distance;
};

/// K vertices sampled from a geodesic ball, in selection order.
struct NeighborhoodSample {
  Index center = 0;
  std::vector<Index> members;
  std::vector<double> geodesics;
  bool padded = false;
};

/// Dijkstra over the edge graph with Euclidean edge weights. Vertices whose
/// distance would reach `cutoff` or more are left at infinity.
GeodesicField geodesic_distances(const TriMesh& mesh, Index source, double cutoff = kUnbounded);

/// All vertices with d(center, v) < tau, sorted by (distance, index).
std::vector<BallMember> geodesic_ball(const TriMesh& mesh, Index center, double tau);

/// Distance between two candidates, addressed by their position in the
/// candidate list.
using PairwiseMetric = std::function<double(std::size_t, std::size_t)>;

/// Greedy farthest point sampling. Returns positions into `candidates`.
/// The first pick is `seed_pos`; each later pick maximises the minimum
/// distance to the picks so far, ties going to the lowest vertex index.
/// With fewer than K candidates the result cycles through the picks.
std::vector<std::size_t> farthest_point_sample(std::span<const Index> candidates,
                                               const PairwiseMetric& metric, std::size_t k,
                                               std::size_t seed_pos);

/// Ball query followed by FPS seeded at the center, using geodesic
/// distances between ball members (computed within the ball radius).
NeighborhoodSample sample_neighborhood(const TriMesh& mesh, Index center, double tau,
                                       std::size_t k);

/// Dense N x N all-pairs graph geodesics (row-major), by repeated Dijkstra.
std::vector<double> all_pairs_geodesics(const TriMesh& mesh);

}  // namespace lsd
