#include "lsd/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lsd/netarch.hpp"
#include "lsd/shapes.hpp"
#include "lsd/spectral.hpp"
#include "lsd/train.hpp"

namespace lsd::verify {

using ad::Tensor;
using ad::Var;

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Non-scalar outputs are reduced by a weighted sum so every output entry
// contributes with its own coefficient.
Var reduce(ad::Tape& tape, Var out, const Tensor& weights) {
  if (out.value().size() == 1) return ad::sum_all(out);
  return ad::sum_all(ad::mul(out, tape.constant(weights)));
}

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs, const Tensor& weights) {
  ad::Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return reduce(tape, fn(vars), weights).value().item();
}

Tensor random_tensor(ad::Shape shape, double lo, double hi, std::mt19937_64& rng) {
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

double param_dot(const ad::ParamMap& a, const ad::ParamMap& b) {
  double s = 0.0;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end()) continue;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * it->second[i];
  }
  return s;
}

ad::ParamMap shifted(const ad::ParamMap& p, const ad::ParamMap& dir, double h) {
  ad::ParamMap out = p;
  for (auto& [name, t] : out) {
    const Tensor& d = dir.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += h * d[i];
  }
  return out;
}

// Zero-initialised biases put some pre-activations exactly on a ReLU kink
// (patch centers have zero offset and distance), where finite differences
// are meaningless.
ad::ParamMap with_random_biases(ad::ParamMap params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& [n, t] : params)
    if (n.ends_with(".b") || n.ends_with(".bias") || n.ends_with(".beta"))
      for (double& v : t.storage()) v = u(rng);
  return params;
}

}  // namespace

GradCheck check_gradient(const std::string& name, const ScalarFn& fn, const InputSampler& sample,
                         std::size_t points, std::uint64_t seed, double tolerance, double step) {
  GradCheck out{name, points, 0.0, tolerance};
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < points; ++p) {
    std::vector<Tensor> inputs = sample(rng);

    ad::Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var raw = fn(vars);
    const Tensor weights = random_tensor(raw.shape(), 0.5, 1.5, rng);
    Var root = reduce(tape, raw, weights);
    tape.backward(root);

    double diff2 = 0.0, ana2 = 0.0, num2 = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor g = vars[i].grad();
      for (std::size_t j = 0; j < inputs[i].size(); ++j) {
        std::vector<Tensor> plus = inputs, minus = inputs;
        plus[i][j] += step;
        minus[i][j] -= step;
        const double fd = (evaluate(fn, plus, weights) - evaluate(fn, minus, weights)) / (2 * step);
        diff2 += (g[j] - fd) * (g[j] - fd);
        ana2 += g[j] * g[j];
        num2 += fd * fd;
      }
    }
    const double err = std::sqrt(diff2) / std::max({std::sqrt(ana2), std::sqrt(num2), 1e-12});
    out.max_error = std::max(out.max_error, err);
  }
  return out;
}

GradCheck check_directional(const std::string& name, const ParamLoss& loss,
                            const ParamSampler& sample, std::size_t points, std::uint64_t seed,
                            double tolerance, double step) {
  GradCheck out{name, points, 0.0, tolerance};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t p = 0; p < points; ++p) {
    const ad::ParamMap params = sample(p);
    ad::ParamMap dir = params;
    double norm2 = 0.0;
    for (auto& [n, t] : dir)
      for (double& v : t.storage()) {
        v = normal(rng);
        norm2 += v * v;
      }
    for (auto& [n, t] : dir)
      for (double& v : t.storage()) v /= std::sqrt(norm2);

    ad::Tape tape;
    const Binding bind(tape, params, true);
    tape.backward(loss(bind));
    const double analytic = param_dot(bind.gradients(), dir);

    auto value = [&](const ad::ParamMap& at) {
      ad::Tape t;
      return loss(Binding(t, at, false)).value().item();
    };
    const double fd = (value(shifted(params, dir, step)) - value(shifted(params, dir, -step))) / (2 * step);
    out.max_error = std::max(out.max_error, relative_error(analytic, fd));
  }
  return out;
}

std::vector<GradCheck> primitive_checks(std::size_t points, std::uint64_t seed) {
  struct Case {
    const char* name;
    ScalarFn fn;
    InputSampler sample;
  };
  auto shapes = [](std::vector<ad::Shape> s, double lo = -1.0, double hi = 1.0) {
    return [s, lo, hi](std::mt19937_64& rng) {
      std::vector<Tensor> out;
      for (const auto& sh : s) out.push_back(random_tensor(sh, lo, hi, rng));
      return out;
    };
  };
  using V = std::vector<Var>;
  static const std::vector<int> labels{0, 2, 1, 2};
  static const std::vector<std::int32_t> rows{4, 0, 0, 2, 3, 1};

  const std::vector<Case> cases{
      {"matmul", [](const V& v) { return ad::matmul(v[0], v[1]); }, shapes({{3, 4}, {4, 2}})},
      {"transpose", [](const V& v) { return ad::transpose(v[0]); }, shapes({{3, 4}})},
      {"add", [](const V& v) { return ad::add(v[0], v[1]); }, shapes({{3, 4}, {3, 4}})},
      {"add_broadcast", [](const V& v) { return ad::add(v[0], v[1]); }, shapes({{3, 4}, {4}})},
      {"sub", [](const V& v) { return ad::sub(v[0], v[1]); }, shapes({{3, 4}, {3, 4}})},
      {"sub_broadcast", [](const V& v) { return ad::sub(v[0], v[1]); }, shapes({{3, 4}, {4}})},
      {"mul", [](const V& v) { return ad::mul(v[0], v[1]); }, shapes({{3, 4}, {3, 4}})},
      {"mul_broadcast", [](const V& v) { return ad::mul(v[0], v[1]); }, shapes({{3, 4}, {4}})},
      {"scale", [](const V& v) { return ad::scale(v[0], -1.7); }, shapes({{3, 4}})},
      {"relu", [](const V& v) { return ad::relu(v[0]); }, shapes({{3, 4}})},
      {"abs", [](const V& v) { return ad::abs(v[0]); }, shapes({{3, 4}})},
      {"exp", [](const V& v) { return ad::exp(v[0]); }, shapes({{3, 4}})},
      {"log", [](const V& v) { return ad::log(v[0]); }, shapes({{3, 4}}, 0.5, 2.0)},
      {"square", [](const V& v) { return ad::square(v[0]); }, shapes({{3, 4}})},
      {"reshape", [](const V& v) { return ad::reshape(v[0], {4, 3}); }, shapes({{3, 4}})},
      {"concat_rows", [](const V& v) { return ad::concat({v[0], v[1]}, 0); },
       shapes({{2, 3}, {4, 3}})},
      {"concat_cols", [](const V& v) { return ad::concat({v[0], v[1]}, 1); },
       shapes({{3, 2}, {3, 4}})},
      {"sum_rows", [](const V& v) { return ad::sum(v[0], 0); }, shapes({{3, 4}})},
      {"sum_cols", [](const V& v) { return ad::sum(v[0], 1); }, shapes({{3, 4}})},
      {"sum_all", [](const V& v) { return ad::sum_all(v[0]); }, shapes({{3, 4}})},
      {"mean_all", [](const V& v) { return ad::mean_all(v[0]); }, shapes({{3, 4}})},
      {"softmax", [](const V& v) { return ad::softmax(v[0]); }, shapes({{3, 5}}, -2.0, 2.0)},
      {"cross_entropy", [](const V& v) { return ad::cross_entropy(v[0], labels); },
       shapes({{4, 3}}, -2.0, 2.0)},
      {"nll_of_probs", [](const V& v) { return ad::nll_of_probs(v[0], labels); },
       shapes({{4, 3}}, 0.2, 1.0)},
      {"frobenius_sq", [](const V& v) { return ad::frobenius_sq(v[0]); }, shapes({{3, 4}})},
      {"gather_rows", [](const V& v) { return ad::gather_rows(v[0], rows); }, shapes({{5, 3}})},
      {"group_sum", [](const V& v) { return ad::group_sum(v[0], 3); }, shapes({{6, 2}})},
      {"group_max", [](const V& v) { return ad::group_max(v[0], 3); }, shapes({{6, 2}})},
      {"row_bilinear", [](const V& v) { return ad::row_bilinear(v[0], v[1], 2); },
       shapes({{4, 6}, {4, 3}})},
      {"inverse", [](const V& v) { return ad::inverse(v[0]); },
       [](std::mt19937_64& rng) {
         Tensor a = random_tensor({3, 3}, -0.5, 0.5, rng);
         for (std::size_t i = 0; i < 3; ++i) a.at(i, i) += 2.0;
         return std::vector<Tensor>{a};
       }},
      {"batchnorm_train",
       [](const V& v) {
         ad::BatchNormStats stats(3);
         return ad::batchnorm(v[0], v[1], v[2], stats, ad::BnMode::Train);
       },
       shapes({{6, 3}, {3}, {3}})},
      {"batchnorm_eval",
       [](const V& v) {
         ad::BatchNormStats stats(3);
         stats.running_mean = Tensor::vector({0.1, -0.2, 0.3});
         stats.running_var = Tensor::vector({0.5, 1.5, 2.0});
         return ad::batchnorm(v[0], v[1], v[2], stats, ad::BnMode::Eval);
       },
       shapes({{6, 3}, {3}, {3}})},
  };

  std::vector<GradCheck> out;
  std::uint64_t s = seed;
  for (const Case& c : cases)
    out.push_back(check_gradient(c.name, c.fn, c.sample, points, s++, kPrimitiveTolerance, 1e-5));
  return out;
}

namespace {

// Small irregular closed surface shared by the network checks.
TriMesh check_mesh(std::uint64_t seed) {
  return with_geometry(shapes::jittered(shapes::torus(1.0, 0.35, 9, 5), 0.03, seed));
}

}  // namespace

std::vector<GradCheck> network_checks(std::size_t points, std::uint64_t seed) {
  std::vector<GradCheck> out;
  const TriMesh mesh = check_mesh(seed);

  // Single layers on every patch of the mesh.
  PatchOptions po;
  po.k = 6;
  po.tau = layer_radius(mesh, 0.15, 1.0);
  const PatchGeometry geometry = PatchGeometry::from_table(build_patch_table(mesh, po));
  std::mt19937_64 feat_rng(seed + 1);
  const Tensor feats = Tensor::uniform({geometry.members.size(), 4}, -1.0, 1.0, feat_rng);

  struct LayerCase {
    const char* name;
    LrfConvLayer layer;
    bool with_features;
  };
  const std::vector<LayerCase> layers{
      {"lrfconv_cc_first", LrfConvLayer("c", 0, 5, ConvVariant::CC), false},
      {"lrfconv_cc", LrfConvLayer("c", 4, 5, ConvVariant::CC), true},
      {"lrfconv_pn", LrfConvLayer("c", 4, 5, ConvVariant::PN), true},
  };
  for (const LayerCase& lc : layers) {
    auto sample = [&](std::size_t p) {
      ad::ParamMap params;
      std::mt19937_64 rng(seed + 100 + p);
      lc.layer.init(params, rng);
      params = with_random_biases(std::move(params), rng());
      if (lc.with_features) params["features"] = feats;
      return params;
    };
    auto loss = [&](const Binding& bind) {
      Var f = lc.with_features ? bind("features") : Var();
      Var y = lc.layer.forward(bind, geometry, f);
      Tensor w(y.shape(), 0.0);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + static_cast<double>(i));
      return ad::sum_all(ad::mul(y, bind.tape().constant(w)));
    };
    out.push_back(check_directional(lc.name, loss, sample, points, seed, kNetworkTolerance));
  }

  // Segmentation network end to end, both convolution variants.
  for (ConvVariant conv : {ConvVariant::CC, ConvVariant::PN}) {
    ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
    spec.conv = conv;
    const PreparedMesh prepared = prepare_mesh(mesh, spec);
    std::vector<Index> centers;
    std::vector<int> labels;
    for (Index v = 0; v < mesh.vertex_count(); v += 4) {
      centers.push_back(v);
      labels.push_back(static_cast<int>(v % static_cast<Index>(spec.classes)));
    }
    const Model base = Model::create(spec, seed);
    auto sample = [&](std::size_t p) { return with_random_biases(Model::create(spec, seed + 200 + p).params, p); };
    auto loss = [&](const Binding& bind) {
      Model m = base;
      Var d = backbone_forward(bind, m, prepared, centers, ad::BnMode::Train);
      return segmentation_loss(head_forward(bind, spec, d), labels, spec.classes);
    };
    out.push_back(check_directional(conv == ConvVariant::CC ? "network_segmentation_cc"
                                                            : "network_segmentation_pn",
                                    loss, sample, points, seed, kNetworkTolerance));
  }

  // Siamese matching network through the functional map and soft
  // correspondence.
  {
    const ModelSpec spec = ModelSpec::toy(HeadKind::Correspondence, 2, 8, 6);
    const TriMesh other = with_geometry(transformed(
        shapes::jittered(shapes::torus(1.0, 0.35, 9, 5), 0.03, seed + 7),
        Eigen::AngleAxisd(0.7, Vec3::UnitY()).toRotationMatrix(), Vec3::Zero()));
    const PreparedMesh px = prepare_mesh(mesh, spec), py = prepare_mesh(other, spec);
    const SpectralBasis bx = laplacian_basis(mesh, 6), by = laplacian_basis(other, 6);
    const Eigen::MatrixXd dy = geodesic_matrix(other);
    const std::vector<Index> all = all_vertices(px.vertex_count());
    const Model base = Model::create(spec, seed);
    auto sample = [&](std::size_t p) { return with_random_biases(Model::create(spec, seed + 300 + p).params, p); };
    auto loss = [&](const Binding& bind) {
      Model m = base;
      Var fx = head_forward(bind, spec, backbone_forward(bind, m, px, all, ad::BnMode::Train));
      Var fy = head_forward(bind, spec, backbone_forward(bind, m, py, all, ad::BnMode::Train));
      const FunctionalMap fm = functional_map(fx, fy, bx, by);
      return fmnet_loss(soft_correspondence(fm.c, bx, by), dy, all);
    };
    out.push_back(check_directional("network_matching", loss, sample, points, seed,
                                    kNetworkTolerance));
  }
  return out;
}

}  // namespace lsd::verify
