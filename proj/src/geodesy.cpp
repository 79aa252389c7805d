#include "lsd/geodesy.hpp"

#include <algorithm>
#include <queue>

#include "lsd/error.hpp"

namespace lsd {

namespace {

/// Dijkstra scratch space reused across queries; only touched entries are
/// reset between runs.
struct DijkstraWorkspace {
  std::vector<double> dist;
  std::vector<Index> touched;

  void prepare(std::size_t n) {
    if (dist.size() != n) {
      dist.assign(n, kUnbounded);
      touched.clear();
    }
    for (Index v : touched) dist[v] = kUnbounded;
    touched.clear();
  }

  void run(const TriMesh& mesh, Index source, double cutoff) {
    prepare(static_cast<std::size_t>(mesh.vertex_count()));
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    touched.push_back(source);
    heap.emplace(0.0, source);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      auto nbrs = mesh.neighbors(u);
      auto lens = mesh.neighbor_lengths(u);
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const double nd = d + lens[k];
        const Index w = nbrs[k];
        if (nd >= cutoff || nd >= dist[w]) continue;
        if (dist[w] == kUnbounded) touched.push_back(w);
        dist[w] = nd;
        heap.emplace(nd, w);
      }
    }
  }
};

DijkstraWorkspace& workspace() {
  thread_local DijkstraWorkspace ws;
  return ws;
}

void check_vertex(const TriMesh& mesh, Index v) {
  if (v < 0 || v >= mesh.vertex_count())
    throw ValidationError("vertex " + std::to_string(v) + " out of range");
}

}  // namespace

GeodesicField geodesic_distances(const TriMesh& mesh, Index source, double cutoff) {
  check_vertex(mesh, source);
  if (!(cutoff > 0.0)) throw ValidationError("geodesic cutoff must be positive");
  auto& ws = workspace();
  ws.run(mesh, source, cutoff);
  return {source, ws.dist};
}

std::vector<BallMember> geodesic_ball(const TriMesh& mesh, Index center, double tau) {
  check_vertex(mesh, center);
  if (!(tau > 0.0)) throw ValidationError("ball radius must be positive");
  auto& ws = workspace();
  ws.run(mesh, center, tau);
  std::vector<BallMember> out;
  out.reserve(ws.touched.size());
  for (Index v : ws.touched) out.push_back({v, ws.dist[v]});
  std::sort(out.begin(), out.end(), [](const BallMember& a, const BallMember& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.vertex < b.vertex;
  });
  return out;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Index> candidates,
                                               const PairwiseMetric& metric, std::size_t k,
                                               std::size_t seed_pos) {
  if (candidates.empty()) throw ValidationError("farthest point sampling needs candidates");
  if (seed_pos >= candidates.size()) throw ValidationError("FPS seed is not a candidate");
  if (k == 0) return {};

  const std::size_t n = candidates.size();
  const std::size_t picks = std::min(k, n);
  std::vector<double> min_dist(n, kUnbounded);
  std::vector<char> chosen(n, 0);
  std::vector<std::size_t> order;
  order.reserve(k);

  std::size_t current = seed_pos;
  for (std::size_t step = 0; step < picks; ++step) {
    order.push_back(current);
    chosen[current] = 1;
    if (step + 1 == picks) break;
    std::size_t best = n;
    for (std::size_t c = 0; c < n; ++c) {
      if (chosen[c]) continue;
      min_dist[c] = std::min(min_dist[c], metric(current, c));
      if (best == n || min_dist[c] > min_dist[best] ||
          (min_dist[c] == min_dist[best] && candidates[c] < candidates[best]))
        best = c;
    }
    current = best;
  }
  for (std::size_t i = picks; i < k; ++i) order.push_back(order[i % picks]);
  return order;
}

NeighborhoodSample sample_neighborhood(const TriMesh& mesh, Index center, double tau,
                                       std::size_t k) {
  const std::vector<BallMember> ball = geodesic_ball(mesh, center, tau);
  std::vector<Index> cand;
  cand.reserve(ball.size());
  for (const auto& m : ball) cand.push_back(m.vertex);

  // Fields from picked vertices, keyed by candidate position. Every pair of
  // ball members is joined through the center by a path shorter than 2 tau.
  std::vector<std::vector<double>> fields(cand.size());
  PairwiseMetric metric = [&](std::size_t from, std::size_t to) {
    if (fields[from].empty()) {
      auto& ws = workspace();
      ws.run(mesh, cand[from], 2.0 * tau);
      fields[from].resize(cand.size());
      for (std::size_t c = 0; c < cand.size(); ++c) fields[from][c] = ws.dist[cand[c]];
    }
    return fields[from][to];
  };

  const auto seed = static_cast<std::size_t>(
      std::find(cand.begin(), cand.end(), center) - cand.begin());
  const std::vector<std::size_t> order = farthest_point_sample(cand, metric, k, seed);
  NeighborhoodSample out;
  out.center = center;
  out.padded = cand.size() < k;
  out.members.reserve(k);
  out.geodesics.reserve(k);
  for (std::size_t pos : order) {
    out.members.push_back(ball[pos].vertex);
    out.geodesics.push_back(ball[pos].distance);
  }
  return out;
}

std::vector<double> all_pairs_geodesics(const TriMesh& mesh) {
  const auto n = static_cast<std::size_t>(mesh.vertex_count());
  std::vector<double> d(n * n);
  auto& ws = workspace();
  for (Index s = 0; s < mesh.vertex_count(); ++s) {
    ws.run(mesh, s, kUnbounded);
    std::copy(ws.dist.begin(), ws.dist.end(), d.begin() + s * n);
  }
  return d;
}

}  // namespace lsd
