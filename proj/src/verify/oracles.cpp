#include "lsd/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lsd::verify {

std::vector<double> bellman_ford(const TriMesh& mesh, Index source) {
  const auto n = static_cast<std::size_t>(mesh.vertex_count());
  std::vector<double> d(n, std::numeric_limits<double>::infinity());
  d[static_cast<std::size_t>(source)] = 0.0;
  for (std::size_t sweep = 0; sweep + 1 < n; ++sweep) {
    bool changed = false;
    for (const Face& f : mesh.faces())
      for (int e = 0; e < 3; ++e) {
        const Index a = f[e], b = f[(e + 1) % 3];
        const double w = (mesh.position(a) - mesh.position(b)).norm();
        const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
        if (d[ia] + w < d[ib]) d[ib] = d[ia] + w, changed = true;
        if (d[ib] + w < d[ia]) d[ia] = d[ib] + w, changed = true;
      }
    if (!changed) break;
  }
  return d;
}

std::vector<std::size_t> brute_force_fps(const std::vector<Index>& candidates,
                                         const PairwiseMetric& metric, std::size_t k,
                                         std::size_t seed_pos) {
  std::vector<std::size_t> picks{seed_pos};
  const std::size_t n = candidates.size();
  while (picks.size() < std::min(k, n)) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (std::find(picks.begin(), picks.end(), c) != picks.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t p : picks) nearest = std::min(nearest, metric(p, c));
      if (nearest > best_d || (nearest == best_d && candidates[c] < candidates[best])) {
        best = c;
        best_d = nearest;
      }
    }
    picks.push_back(best);
  }
  const std::size_t distinct = picks.size();
  while (picks.size() < k) picks.push_back(picks[picks.size() % distinct]);
  return picks;
}

double great_circle(const Vec3& a, const Vec3& b, double radius) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return radius * std::acos(c);
}

}  // namespace lsd::verify
