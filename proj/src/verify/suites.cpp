#include "lsd/verify/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lsd/cache.hpp"
#include "lsd/geodesy.hpp"
#include "lsd/lrf.hpp"
#include "lsd/netarch.hpp"
#include "lsd/patch.hpp"
#include "lsd/shapes.hpp"
#include "lsd/spectral.hpp"
#include "lsd/synthetic.hpp"
#include "lsd/verify/gradcheck.hpp"
#include "lsd/verify/oracles.hpp"

namespace lsd::verify {

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

double frame_error(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(r.determinant() - 1.0));
}

}  // namespace

SuiteResult gradient_suite(const SuiteOptions& o) {
  Timer timer;
  const std::size_t points = o.quick ? 3 : 20;
  std::vector<GradCheck> checks = primitive_checks(points, o.seed);
  for (GradCheck& c : network_checks(points, o.seed)) checks.push_back(std::move(c));
  SuiteResult r{"gradients", true, "", 0.0};
  double worst_prim = 0.0, worst_net = 0.0;
  std::string failed;
  for (const GradCheck& c : checks) {
    (c.tolerance == kPrimitiveTolerance ? worst_prim : worst_net) =
        std::max(c.tolerance == kPrimitiveTolerance ? worst_prim : worst_net, c.max_error);
    if (!c.passed()) {
      r.passed = false;
      failed += " " + c.name + "=" + sci(c.max_error);
    }
  }
  r.detail = std::to_string(checks.size()) + " checks x " + std::to_string(points) +
             " points, worst primitive " + sci(worst_prim) + ", worst network " + sci(worst_net);
  if (!failed.empty()) r.detail += ", failing:" + failed;
  r.seconds = timer.seconds();
  return r;
}

SuiteResult rotation_suite(const SuiteOptions& o) {
  Timer timer;
  constexpr double kTolerance = 1e-5;
  const std::size_t rotations = o.quick ? 3 : 20;

  // Irregular 200-vertex torus: exact symmetries would make frame signs
  // depend on rounding.
  const TriMesh raw = shapes::jittered(shapes::torus(1.0, 0.3, 20, 10), 0.02, 3);
  ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
  spec.base_radius = 0.1;
  const Model model = Model::create(spec, o.seed);

  const PreparedMesh base = prepare_mesh(with_geometry(raw), spec);
  const std::vector<Index> all = all_vertices(base.vertex_count());
  const std::vector<Index> strict = strict_receptive_centers(base, spec);
  const ad::Tensor ref = compute_descriptors(model, base, all);

  std::mt19937_64 rng(o.seed + 11);
  double worst_strict = 0.0, worst_other = 0.0;
  std::vector<char> is_strict(all.size(), 0);
  for (Index v : strict) is_strict[static_cast<std::size_t>(v)] = 1;
  for (std::size_t t = 0; t < rotations; ++t) {
    const TriMesh moved = with_geometry(transformed(raw, shapes::random_rotation(rng), Vec3::Zero()));
    const ad::Tensor d = compute_descriptors(model, prepare_mesh(moved, spec), all);
    for (std::size_t v = 0; v < all.size(); ++v)
      for (std::size_t c = 0; c < d.cols(); ++c) {
        const double diff = std::abs(d.at(v, c) - ref.at(v, c));
        double& worst = is_strict[v] ? worst_strict : worst_other;
        worst = std::max(worst, diff);
      }
  }
  SuiteResult r{"rotation invariance", !strict.empty() && worst_strict < kTolerance, "", 0.0};
  r.detail = std::to_string(rotations) + " rotations, " + std::to_string(strict.size()) + "/" +
             std::to_string(all.size()) + " strict vertices, max diff " + sci(worst_strict) +
             " (other vertices " + sci(worst_other) + ")";
  r.seconds = timer.seconds();
  return r;
}

SuiteResult geometry_suite(const SuiteOptions& o) {
  Timer timer;
  constexpr double kSphereTolerance = 0.15;
  std::mt19937_64 rng(o.seed + 21);

  // Graph distances.
  const std::vector<TriMesh> small{
      shapes::tetrahedron(),
      shapes::icosphere(1),
      shapes::grid(7, 6, 1.0, 0.8),
      shapes::cylinder(0.5, 1.0, 8, 5),
      shapes::jittered(shapes::torus(1.0, 0.3, 8, 5), 0.05, o.seed + 1),
      shapes::chain(12),
  };
  std::size_t sources = 0, mismatches = 0;
  for (const TriMesh& m : small) {
    for (Index s = 0; s < m.vertex_count(); ++s, ++sources)
      if (geodesic_distances(m, s).distances != bellman_ford(m, s)) ++mismatches;
  }

  // Farthest point sampling on integer lattices, where ties are common.
  const std::size_t trials = o.quick ? 10 : 100;
  std::size_t fps_mismatches = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::uniform_int_distribution<int> coord(0, 4);
    std::vector<Vec3> pts(30);
    for (Vec3& p : pts) p = Vec3(coord(rng), coord(rng), coord(rng));
    std::vector<Index> ids(30);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<Index>(i);
    std::shuffle(ids.begin(), ids.end(), rng);
    const PairwiseMetric metric = [&](std::size_t a, std::size_t b) { return (pts[a] - pts[b]).norm(); };
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const std::size_t seed_pos = std::uniform_int_distribution<std::size_t>(0, 29)(rng);
    if (farthest_point_sample(ids, metric, k, seed_pos) != brute_force_fps(ids, metric, k, seed_pos))
      ++fps_mismatches;
  }

  // Sphere: graph distance between antipodal vertices against pi.
  const TriMesh sphere = shapes::icosphere(3);
  double worst_rel = 0.0;
  for (Index s = 0; s < sphere.vertex_count(); ++s) {
    Index anti = 0;
    for (Index v = 1; v < sphere.vertex_count(); ++v)
      if ((sphere.position(v) + sphere.position(s)).norm() <
          (sphere.position(anti) + sphere.position(s)).norm())
        anti = v;
    const double arc = great_circle(sphere.position(s), sphere.position(anti), 1.0);
    const double d = geodesic_distances(sphere, s).distances[static_cast<std::size_t>(anti)];
    worst_rel = std::max(worst_rel, std::abs(d - arc) / arc);
  }

  SuiteResult r{"geometry oracles",
                mismatches == 0 && fps_mismatches == 0 && worst_rel < kSphereTolerance, "", 0.0};
  r.detail = "dijkstra/bellman-ford mismatches " + std::to_string(mismatches) + "/" +
             std::to_string(sources) + ", fps mismatches " + std::to_string(fps_mismatches) + "/" +
             std::to_string(trials) + ", antipodal worst relative error " + sci(worst_rel);
  r.seconds = timer.seconds();
  return r;
}

SuiteResult lrf_suite(const SuiteOptions& o) {
  Timer timer;
  constexpr double kFrameTolerance = 1e-8;
  constexpr double kEquivarianceTolerance = 1e-6;
  constexpr double kAxisTolerance = 0.1;
  const std::size_t rotations = o.quick ? 5 : 100;

  std::vector<TriMesh> fixtures{
      shapes::icosphere(2),
      shapes::grid(9, 7, 1.0, 0.7),
      shapes::cylinder(0.5, 2.0, 16, 12),
      shapes::jittered(shapes::torus(1.0, 0.3, 20, 10), 0.02, 3),
      synthetic::two_part("two_part", 14, 7, Mat3::Identity()).mesh,
      synthetic::articulated("articulated", o.seed + 5).mesh,
  };
  double worst_frame = 0.0;
  std::size_t frames = 0;
  for (TriMesh& m : fixtures) {
    m = with_geometry(m);
    const double tau = layer_radius(m, 0.1, 1.0);
    for (Index v = 0; v < m.vertex_count(); ++v)
      for (LrfVariant variant : {LrfVariant::Shot, LrfVariant::Curvature}) {
        worst_frame = std::max(worst_frame, frame_error(compute_lrf(m, v, variant, tau).rotation));
        ++frames;
      }
  }

  // Equivariance on the irregular torus: R * frame(v) = frame'(v) for
  // strictly disambiguated frames.
  const TriMesh& torus = fixtures[3];
  const double tau = layer_radius(torus, 0.1, 1.0);
  std::vector<Lrf> ref[2];
  for (Index v = 0; v < torus.vertex_count(); ++v)
    for (int i = 0; i < 2; ++i) ref[i].push_back(compute_lrf(torus, v, LrfVariant(i), tau));
  std::mt19937_64 rng(o.seed + 31);
  double worst_equi = 0.0;
  std::size_t compared = 0;
  for (std::size_t t = 0; t < rotations; ++t) {
    const Mat3 rot = shapes::random_rotation(rng);
    const TriMesh moved = with_geometry(transformed(torus, rot, Vec3::Zero()));
    for (Index v = 0; v < torus.vertex_count(); ++v)
      for (int i = 0; i < 2; ++i) {
        const Lrf& a = ref[i][static_cast<std::size_t>(v)];
        if (!a.strict()) continue;
        const Lrf b = compute_lrf(moved, v, LrfVariant(i), tau);
        worst_equi = std::max(worst_equi, (rot * a.rotation - b.rotation).cwiseAbs().maxCoeff());
        ++compared;
      }
  }

  // Cylinder: the third axis of the curvature frame follows the axis away
  // from the open rims.
  const TriMesh cyl = with_geometry(shapes::cylinder(0.5, 3.0, 24, 24));
  double worst_axis = 0.0;
  for (Index v = 0; v < cyl.vertex_count(); ++v) {
    const double z = cyl.position(v).z();
    if (z < 0.4 || z > 2.6) continue;
    const Lrf f = lrf_curvature(cyl, v);
    const double c = std::clamp(std::abs(f.rotation.col(2).dot(Vec3::UnitZ())), 0.0, 1.0);
    worst_axis = std::max(worst_axis, std::acos(c));
  }

  SuiteResult r{"local reference frames",
                worst_frame < kFrameTolerance && compared > 0 && worst_equi < kEquivarianceTolerance &&
                    worst_axis < kAxisTolerance,
                "", 0.0};
  r.detail = std::to_string(frames) + " frames, orthonormality " + sci(worst_frame) + ", " +
             std::to_string(rotations) + " rotations over " + std::to_string(compared) +
             " strict frames, equivariance " + sci(worst_equi) + ", cylinder axis " +
             sci(worst_axis) + " rad";
  r.seconds = timer.seconds();
  return r;
}

SuiteResult spectral_suite(const SuiteOptions& o) {
  Timer timer;
  constexpr double kBasisTolerance = 1e-8;
  constexpr double kSpectrumTolerance = 0.10;
  constexpr double kMapTolerance = 1e-6;
  constexpr double pi = std::numbers::pi;

  const TriMesh torus = shapes::jittered(shapes::torus(1.0, 0.3, 20, 10), 0.02, 3);
  const SpectralBasis b = laplacian_basis(torus, 20);
  const double lambda0 = std::abs(b.eigenvalues(0));
  const Eigen::VectorXd phi0 = b.phi.col(0);
  const double flat = (phi0.array() - phi0.mean()).abs().maxCoeff();
  const Eigen::MatrixXd gram = b.phi.transpose() * b.mass.asDiagonal() * b.phi;
  const double ortho = (gram - Eigen::MatrixXd::Identity(b.k(), b.k())).cwiseAbs().maxCoeff();

  // Neumann spectrum of a w x h rectangle: pi^2 (m^2 / w^2 + n^2 / h^2).
  const double w = 2.0, h = 1.0;
  const TriMesh rect = shapes::grid(41, 21, w, h);
  constexpr std::size_t kModes = 10;
  const SpectralBasis rb = laplacian_basis(rect, kModes);
  std::vector<double> analytic;
  for (int m = 0; m < 8; ++m)
    for (int n = 0; n < 8; ++n) analytic.push_back(pi * pi * (m * m / (w * w) + n * n / (h * h)));
  std::sort(analytic.begin(), analytic.end());
  double worst_mode = 0.0;
  for (std::size_t i = 1; i < kModes; ++i)
    worst_mode = std::max(worst_mode, std::abs(rb.eigenvalues(static_cast<Eigen::Index>(i)) - analytic[i]) / analytic[i]);

  // Identical features on both sides must give the identity map.
  std::mt19937_64 rng(o.seed + 41);
  ad::Tape tape;
  const ad::Var f = tape.constant(ad::Tensor::uniform({b.vertex_count(), 40}, -1.0, 1.0, rng));
  const FunctionalMap fm = functional_map(f, f, b, b);
  double map_err = 0.0;
  const ad::Tensor& c = fm.c.value();
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < c.cols(); ++j)
      map_err = std::max(map_err, std::abs(c.at(i, j) - (i == j ? 1.0 : 0.0)));

  SuiteResult r{"spectral",
                lambda0 < kBasisTolerance && flat < kBasisTolerance && ortho < kBasisTolerance &&
                    worst_mode < kSpectrumTolerance && map_err < kMapTolerance,
                "", 0.0};
  r.detail = "lambda0 " + sci(lambda0) + ", phi0 spread " + sci(flat) + ", mass-orthonormality " +
             sci(ortho) + ", rectangle worst relative " + sci(worst_mode) + ", self-map " + sci(map_err);
  r.seconds = timer.seconds();
  return r;
}

std::vector<SuiteResult> run_all_suites(const SuiteOptions& options) {
  return {geometry_suite(options), lrf_suite(options), spectral_suite(options),
          rotation_suite(options), gradient_suite(options)};
}

}  // namespace lsd::verify
