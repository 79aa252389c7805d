#include "lsd/lrfconv.hpp"

#include "lsd/error.hpp"

namespace lsd {

using ad::Tensor;
using ad::Var;

Binding::Binding(ad::Tape& tape, const ad::ParamMap& params, bool trainable) : tape_(&tape) {
  for (const auto& [name, t] : params)
    vars_.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
}

Var Binding::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ValidationError("missing parameter '" + name + "'");
  return it->second;
}

ad::ParamMap Binding::gradients() const {
  ad::ParamMap out;
  for (const auto& [name, v] : vars_)
    if (tape_->needs_grad(v)) out.emplace(name, tape_->grad(v));
  return out;
}

PatchGeometry PatchGeometry::from_table(const PatchTable& table) {
  PatchGeometry g;
  g.k = table.k;
  g.centers = table.centers();
  const std::size_t rows = g.k * g.centers;
  g.coords = Tensor({rows, 3}, table.coords);
  g.normals = Tensor({rows, 3}, table.normals);
  g.geodesics = Tensor({rows, 1}, table.geodesics);
  g.members = table.members;
  return g;
}

PatchGeometry PatchGeometry::from_patch(const AlignedPatch& patch) {
  PatchGeometry g;
  g.k = patch.size();
  g.centers = 1;
  g.coords = Tensor({g.k, 3});
  g.normals = Tensor({g.k, 3});
  g.geodesics = Tensor({g.k, 1});
  for (std::size_t j = 0; j < g.k; ++j) {
    for (int a = 0; a < 3; ++a) {
      g.coords.at(j, a) = patch.coords[j](a);
      g.normals.at(j, a) = patch.normals[j](a);
    }
    g.geodesics[j] = patch.geodesics[j];
  }
  g.members = patch.members;
  return g;
}

Var linear(const Binding& bind, const std::string& name, Var x, bool bias) {
  Var y = ad::matmul(x, bind(name + ".W"));
  return bias ? ad::add(y, bind(name + ".b")) : y;
}

void init_linear(ad::ParamMap& params, const std::string& name, std::size_t in, std::size_t out,
                 std::mt19937_64& rng, bool bias) {
  params.insert_or_assign(name + ".W", Tensor::glorot(in, out, rng));
  if (bias) params.insert_or_assign(name + ".b", Tensor({out}, 0.0));
}

LrfConvLayer::LrfConvLayer(std::string prefix, std::size_t in, std::size_t out,
                           ConvVariant variant, std::size_t first_expand, bool kernel_mean)
    : prefix_(std::move(prefix)),
      in_(in),
      out_(out),
      expand_(in > 0 ? in : first_expand),
      variant_(variant),
      kernel_mean_(kernel_mean) {
  if (out_ == 0 || expand_ == 0) throw ValidationError(prefix_ + ": layer widths must be positive");
}

void LrfConvLayer::init(ad::ParamMap& params, std::mt19937_64& rng) const {
  const std::size_t d = description_width();
  if (variant_ == ConvVariant::CC) {
    init_linear(params, prefix_ + ".ev", 3, expand_, rng);
    init_linear(params, prefix_ + ".en", 3, expand_, rng);
    init_linear(params, prefix_ + ".eg", 1, expand_, rng);
    init_linear(params, prefix_ + ".w1", d, d, rng);
    init_linear(params, prefix_ + ".w2", d, d, rng);
    init_linear(params, prefix_ + ".w3", d, d * out_, rng);
  } else {
    init_linear(params, prefix_ + ".pn1", 7 + in_, d, rng);
    init_linear(params, prefix_ + ".pn2", d, d, rng);
    init_linear(params, prefix_ + ".pnout", d, out_, rng, false);
  }
  params.insert_or_assign(prefix_ + ".bias", Tensor({out_}, 0.0));
}

Var LrfConvLayer::forward(const Binding& bind, const PatchGeometry& geometry, Var neighbor_features,
                          const ChannelMask& mask) const {
  const std::size_t rows = geometry.k * geometry.centers;
  if (in_ > 0) {
    if (!neighbor_features.valid())
      throw ValidationError(prefix_ + ": layer expects input features of width " +
                            std::to_string(in_));
    const auto& s = neighbor_features.shape();
    if (s.size() != 2 || s[0] != rows || s[1] != in_)
      throw ValidationError(prefix_ + ": neighbor features " + ad::shape_string(s) +
                            " do not match [" + std::to_string(rows) + "x" + std::to_string(in_) +
                            "]");
  }
  return variant_ == ConvVariant::CC ? forward_cc(bind, geometry, neighbor_features, mask)
                                     : forward_pn(bind, geometry, neighbor_features, mask);
}

Var LrfConvLayer::forward_cc(const Binding& bind, const PatchGeometry& g, Var feats,
                             const ChannelMask& mask) const {
  ad::Tape& tape = bind.tape();
  const std::size_t rows = g.k * g.centers;
  auto expand = [&](const char* name, const Tensor& input, bool enabled) {
    if (!enabled) return tape.constant(Tensor({rows, expand_}, 0.0));
    return ad::relu(linear(bind, prefix_ + name, tape.constant(input)));
  };
  std::vector<Var> parts{expand(".ev", g.coords, mask.coords), expand(".en", g.normals, mask.normals),
                         expand(".eg", g.geodesics, mask.geodesic)};
  if (in_ > 0)
    parts.push_back(mask.features ? feats : tape.constant(Tensor({rows, in_}, 0.0)));
  Var x = ad::concat(parts, 1);

  Var h = ad::relu(linear(bind, prefix_ + ".w1", x));
  h = ad::relu(linear(bind, prefix_ + ".w2", h));
  Var kernel = linear(bind, prefix_ + ".w3", h);  // rows x (D * out)
  Var y = ad::group_sum(ad::row_bilinear(kernel, x, out_), g.k);
  if (kernel_mean_) y = ad::scale(y, 1.0 / static_cast<double>(g.k));
  return ad::add(y, bind(prefix_ + ".bias"));
}

Var LrfConvLayer::forward_pn(const Binding& bind, const PatchGeometry& g, Var feats,
                             const ChannelMask& mask) const {
  ad::Tape& tape = bind.tape();
  const std::size_t rows = g.k * g.centers;
  auto channel = [&](const Tensor& t, bool enabled) {
    return tape.constant(enabled ? t : Tensor(t.shape(), 0.0));
  };
  std::vector<Var> parts{channel(g.coords, mask.coords), channel(g.normals, mask.normals),
                         channel(g.geodesics, mask.geodesic)};
  if (in_ > 0)
    parts.push_back(mask.features ? feats : tape.constant(Tensor({rows, in_}, 0.0)));
  Var x = ad::concat(parts, 1);
  Var h = ad::relu(linear(bind, prefix_ + ".pn1", x));
  h = ad::relu(linear(bind, prefix_ + ".pn2", h));
  Var pooled = ad::group_max(h, g.k);
  return ad::add(linear(bind, prefix_ + ".pnout", pooled, false), bind(prefix_ + ".bias"));
}

namespace {

Tensor single_patch(const AlignedPatch& patch, const Tensor* prev, const ad::ParamMap& params,
                    const LrfConvLayer& layer, const ChannelMask& mask) {
  ad::Tape tape;
  Binding bind(tape, params, false);
  const PatchGeometry g = PatchGeometry::from_patch(patch);
  Var feats;
  if (layer.in_width() > 0) {
    if (!prev) throw ValidationError(layer.prefix() + ": previous features required");
    if (prev->rank() != 2 || prev->dim(0) != g.k || prev->dim(1) != layer.in_width())
      throw ValidationError(layer.prefix() + ": previous features " +
                            ad::shape_string(prev->shape()) + " do not match [" +
                            std::to_string(g.k) + "x" + std::to_string(layer.in_width()) + "]");
    feats = tape.constant(*prev);
  }
  Tensor out = layer.forward(bind, g, feats, mask).value();
  return out.reshaped({layer.out_width()});
}

}  // namespace

Tensor lrfconv_forward(const AlignedPatch& patch, const Tensor* prev_features,
                       const ad::ParamMap& params, const LrfConvLayer& layer,
                       const ChannelMask& mask) {
  return single_patch(patch, prev_features, params, layer, mask);
}

Tensor pointnet_forward(const AlignedPatch& patch, const Tensor* prev_features,
                        const ad::ParamMap& params, const LrfConvLayer& layer,
                        const ChannelMask& mask) {
  return single_patch(patch, prev_features, params, layer, mask);
}

}  // namespace lsd
