#include "lsd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsd/error.hpp"
#include "lsd/shapes.hpp"

namespace lsd::synthetic {

namespace {

constexpr double pi = std::numbers::pi;

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace

LabeledShape two_part(const std::string& name, int around, int rings, const Mat3& rotation) {
  const shapes::Revolved r = shapes::cylinder_sphere(around, rings);
  return {name, transformed(r.mesh, rotation, Vec3::Zero()), r.labels, Split::Train};
}

LabeledShape articulated(const std::string& name, std::uint64_t seed,
                         const ArticulatedOptions& o) {
  if (o.parts < 1 || o.around < 3 || o.rings < o.parts + 2)
    throw ValidationError("articulated shape: need at least one segment, 3 around and a ring per segment");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto inner = static_cast<std::size_t>(o.parts);
  const std::size_t count = inner + 2;

  // Segment kinds: cap, tube, bulb, tube, ..., cap.
  std::vector<int> kind(count);
  std::vector<double> ends(count);
  kind.front() = kind.back() = kArticulatedCap;
  for (std::size_t i = 1; i + 1 < count; ++i) kind[i] = i % 2 == 1 ? kArticulatedTube : kArticulatedBulb;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    total += kind[i] == kArticulatedCap ? 0.35 + 0.1 * u(rng) : 0.8 + 0.5 * u(rng);
    ends[i] = total;
  }
  for (double& e : ends) e /= total;
  const double tube = 0.16 + 0.08 * u(rng);
  const double bulb = 0.45 + 0.15 * u(rng);
  const double cap = 0.3 + 0.1 * u(rng);
  auto part_of = [&](double t) {
    std::size_t i = 0;
    while (i + 1 < count && t >= ends[i]) ++i;
    return i;
  };
  auto radius = [&](double t) {
    const std::size_t i = part_of(t);
    const double a = i == 0 ? 0.0 : ends[i - 1], b = ends[i];
    const double s = std::clamp((t - a) / (b - a), 0.0, 1.0);
    switch (kind[i]) {
      case kArticulatedBulb: return tube + (bulb - tube) * std::sin(pi * s);
      case kArticulatedTube: return tube;
      default: {
        // Rounded end that narrows into the adjacent tube.
        const double x = i == 0 ? s : 1.0 - s;
        const double dome = cap * std::sqrt(std::max(0.0, 1.0 - std::pow(1.0 - 2.0 * x, 2)));
        return x < 0.5 ? std::max(dome, 0.02) : tube + (cap - tube) * std::sin(pi * x);
      }
    }
  };
  auto label = [&](double t) { return kind[part_of(t)]; };
  const double height = 1.0 * static_cast<double>(count);
  shapes::Revolved r = shapes::revolve(radius, label, height, o.around, o.rings);

  // Bend about the x axis at every inner joint, blended over a short span.
  std::vector<Vec3> pts = r.mesh.vertices();
  for (std::size_t j = count - 1; j-- > 0;) {
    const double bend = o.max_bend * (2 * u(rng) - 1);
    const double pivot = ends[j] * height;
    const double blend = 0.15 * height / static_cast<double>(count);
    for (Vec3& p : pts) {
      const double w = smoothstep(pivot - blend, pivot + blend, p.z());
      if (w == 0.0) continue;
      const Eigen::AngleAxisd rot(bend * w, Vec3::UnitX());
      const Vec3 c(0, 0, pivot);
      p = c + rot * (p - c);
    }
  }
  const Mat3 pose = o.rotate ? shapes::random_rotation(rng) : Mat3::Identity();
  for (Vec3& p : pts) p = pose * p;
  return {name, TriMesh::build(std::move(pts), r.mesh.faces()), std::move(r.labels), Split::Train};
}

std::vector<LabeledShape> articulated_set(std::size_t train, std::size_t test, std::uint64_t seed,
                                          const ArticulatedOptions& options) {
  std::vector<LabeledShape> out;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < train + test; ++i) {
    const bool is_test = i >= train;
    LabeledShape s = articulated((is_test ? "test" : "train") + std::to_string(is_test ? i - train : i),
                                 rng(), options);
    s.split = is_test ? Split::Test : Split::Train;
    out.push_back(std::move(s));
  }
  return out;
}

TriMesh deformed(const TriMesh& mesh, std::uint64_t seed, double strength) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 lo = mesh.vertices().front(), hi = lo;
  for (const Vec3& p : mesh.vertices()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  const double extent = (hi - lo).maxCoeff();
  // Low-frequency displacement field plus a twist about z.
  Vec3 amp(u(rng), u(rng), u(rng)), freq(u(rng), u(rng), u(rng)), phase(u(rng), u(rng), u(rng));
  const double twist = strength * u(rng);
  std::vector<Vec3> pts;
  for (const Vec3& p0 : mesh.vertices()) {
    const Vec3 q = (p0 - mid) / extent;
    Vec3 d;
    for (int a = 0; a < 3; ++a)
      d(a) = amp(a) * std::sin(pi * (1.5 * freq(a) * q((a + 1) % 3) + phase(a)));
    Vec3 p = p0 + strength * extent * 0.3 * d;
    const Eigen::AngleAxisd tw(twist * pi * q.z(), Vec3::UnitZ());
    pts.push_back(mid + tw * (p - mid));
  }
  const Mat3 rot = shapes::random_rotation(rng);
  const Vec3 shift(u(rng), u(rng), u(rng));
  for (Vec3& p : pts) p = rot * p + shift;
  return TriMesh::build(std::move(pts), mesh.faces());
}

MatchingSet matching_set(const TriMesh& reference, std::size_t train, std::size_t test,
                         std::uint64_t seed) {
  MatchingSet set;
  const auto n = static_cast<std::size_t>(reference.vertex_count());
  std::vector<int> identity(n);
  for (std::size_t i = 0; i < n; ++i) identity[i] = static_cast<int>(i);
  set.reference = {"reference", reference, identity, Split::Train};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < train + test; ++i) {
    const bool is_test = i >= train;
    set.shapes.push_back({(is_test ? "test" : "train") + std::to_string(is_test ? i - train : i),
                          deformed(reference, rng()), identity,
                          is_test ? Split::Test : Split::Train});
  }
  return set;
}

}  // namespace lsd::synthetic
