#pragma once

#include <cstddef>
#include <vector>

#include "lsd/geodesy.hpp"
#include "lsd/mesh.hpp"

/// Slow, independent reimplementations used to cross-check the fast paths.
namespace lsd::verify {

/// Edge-relaxation shortest paths: |V| - 1 full sweeps over every edge.
std::vector<double> bellman_ford(const TriMesh& mesh, Index source);

/// Farthest point sampling recomputed from scratch at every step: the next
/// pick maximises the distance to its nearest pick, ties to the lowest
/// vertex index. Picks cycle when k exceeds the candidate count.
std::vector<std::size_t> brute_force_fps(const std::vector<Index>& candidates,
                                         const PairwiseMetric& metric, std::size_t k,
                                         std::size_t seed_pos);

/// Arc length between two points of a sphere centred at the origin.
double great_circle(const Vec3& a, const Vec3& b, double radius);

}  // namespace lsd::verify
