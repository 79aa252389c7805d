#include "lsd/patch.hpp"

#include <cmath>

#include "lsd/error.hpp"
#include "lsd/parallel.hpp"

namespace lsd {

AlignedPatch align_patch(const TriMesh& mesh, const NeighborhoodSample& sample, const Lrf& lrf) {
  AlignedPatch p;
  p.center = sample.center;
  p.members = sample.members;
  p.geodesics = sample.geodesics;
  p.padded = sample.padded;
  const Mat3 rt = lrf.rotation.transpose();
  const Vec3& origin = mesh.position(sample.center);
  p.coords.reserve(sample.members.size());
  p.normals.reserve(sample.members.size());
  for (Index v : sample.members) {
    p.coords.push_back(rt * (mesh.position(v) - origin));
    p.normals.push_back(mesh.has_normals() ? Vec3(rt * mesh.normal(v)) : Vec3::Zero());
  }
  // The center is its own offset origin; keep it exactly zero.
  for (std::size_t j = 0; j < p.members.size(); ++j)
    if (p.members[j] == sample.center) p.coords[j].setZero();
  return p;
}

AlignedPatch build_patch(const TriMesh& mesh, Index center, double tau, std::size_t k,
                         const Lrf& lrf) {
  if (k == 0) throw ValidationError("patch size K must be at least 1");
  return align_patch(mesh, sample_neighborhood(mesh, center, tau, k), lrf);
}

AlignedPatch PatchTable::patch(Index center) const {
  AlignedPatch p;
  const NeighborhoodSample& s = samples.at(center);
  p.center = center;
  p.members = s.members;
  p.geodesics = s.geodesics;
  p.padded = s.padded;
  const std::size_t base = static_cast<std::size_t>(center) * k;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t r = (base + j) * 3;
    p.coords.emplace_back(coords[r], coords[r + 1], coords[r + 2]);
    p.normals.emplace_back(normals[r], normals[r + 1], normals[r + 2]);
  }
  return p;
}

void realign(PatchTable& table, const TriMesh& mesh, bool use_lrf) {
  const std::size_t n = table.samples.size(), k = table.k;
  table.members.assign(n * k, 0);
  table.coords.assign(n * k * 3, 0.0);
  table.normals.assign(n * k * 3, 0.0);
  table.geodesics.assign(n * k, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    Lrf frame = use_lrf ? table.frames[c] : Lrf{};
    const AlignedPatch p = align_patch(mesh, table.samples[c], frame);
    if (p.size() != k) throw ValidationError("patch table entry has wrong member count");
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = c * k + j;
      table.members[r] = p.members[j];
      table.geodesics[r] = p.geodesics[j];
      for (int a = 0; a < 3; ++a) {
        table.coords[r * 3 + a] = p.coords[j](a);
        table.normals[r * 3 + a] = p.normals[j](a);
      }
    }
  }
}

PatchTable build_patch_table(const TriMesh& mesh, const PatchOptions& options) {
  if (!(options.tau > 0.0)) throw ValidationError("patch radius must be positive");
  if (options.k == 0) throw ValidationError("patch size K must be at least 1");
  PatchTable t;
  t.tau = options.tau;
  t.k = options.k;
  const auto n = static_cast<std::size_t>(mesh.vertex_count());
  t.samples.resize(n);
  t.frames.resize(n);
  parallel_for(n, options.workers, [&](std::size_t c) {
    const auto v = static_cast<Index>(c);
    t.samples[c] = sample_neighborhood(mesh, v, options.tau, options.k);
    t.frames[c] = compute_lrf(mesh, v, options.variant, options.tau);
  });
  realign(t, mesh, options.use_lrf);
  return t;
}

double layer_radius(const TriMesh& mesh, double base_radius, double scale) {
  return base_radius * scale * std::sqrt(mesh.surface_area());
}

}  // namespace lsd
