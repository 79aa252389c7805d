#include "lsd/netarch.hpp"

#include <algorithm>
#include <cmath>

#include "lsd/error.hpp"

namespace lsd {

using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {

const char* head_name(HeadKind h) { return h == HeadKind::Segmentation ? "segmentation" : "correspondence"; }

std::string conv_name(std::size_t l) { return "conv" + std::to_string(l); }
std::string bn_name(std::size_t l) { return conv_name(l) + ".bn"; }
std::string proj_name(std::size_t l) { return conv_name(l) + ".proj"; }
std::string head_block(std::size_t b) { return "head" + std::to_string(b); }

}  // namespace

ModelSpec ModelSpec::standard(HeadKind head) {
  ModelSpec s;
  const double scales[13] = {1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4, 8};
  for (double sc : scales)
    s.layers.push_back({16, sc, static_cast<std::size_t>(sc)});
  s.head = head;
  if (head == HeadKind::Segmentation)
    s.head_widths = {512, 256, 128, 64, 32, 16, 8};
  else
    s.head_widths.assign(7, 352);
  return s;
}

ModelSpec ModelSpec::toy(HeadKind head, std::size_t layers, std::size_t width, std::size_t k) {
  ModelSpec s;
  s.base_width = width;
  s.base_radius = 0.15;
  for (std::size_t l = 0; l < layers; ++l) s.layers.push_back({k, 1.0, 1});
  s.head = head;
  if (head == HeadKind::Segmentation)
    s.head_widths = {16, 8};
  else
    s.head_widths = {width, width};
  return s;
}

ChannelMask ModelSpec::mask() const {
  ChannelMask m;
  m.coords = ablation.use_coords;
  m.normals = ablation.use_normals;
  m.geodesic = ablation.use_geodesic;
  m.features = ablation.propagate_features;
  return m;
}

void ModelSpec::validate() const {
  if (layers.empty()) throw ValidationError("model spec: no backbone layers");
  if (base_width == 0) throw ValidationError("model spec: base width must be positive");
  if (!(base_radius > 0) || !std::isfinite(base_radius))
    throw ValidationError("model spec: base radius must be positive");
  if (first_expand == 0) throw ValidationError("model spec: first expansion width must be positive");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.k == 0 || L.lambda == 0 || !(L.radius_scale > 0) || !std::isfinite(L.radius_scale))
      throw ValidationError("model spec: layer " + std::to_string(l) +
                            " needs positive K, width multiplier and radius scale");
  }
  for (std::size_t w : head_widths)
    if (w == 0) throw ValidationError("model spec: head widths must be positive");
  if (head == HeadKind::Segmentation) {
    if (classes == 0) throw ValidationError("model spec: class count must be positive");
    if (head_widths.empty() || head_widths.back() != classes)
      throw ValidationError("model spec: segmentation head must end at the class count " +
                            std::to_string(classes));
  }
}

json ModelSpec::to_json() const {
  json j;
  j["base_width"] = base_width;
  j["base_radius"] = base_radius;
  j["conv"] = conv == ConvVariant::CC ? "cc" : "pn";
  j["lrf"] = lrf == LrfVariant::Curvature ? "curvature" : "shot";
  j["kernel_mean"] = kernel_mean;
  j["first_expand"] = first_expand;
  j["ablation"] = {{"use_coords", ablation.use_coords},
                   {"use_normals", ablation.use_normals},
                   {"use_geodesic", ablation.use_geodesic},
                   {"use_lrf", ablation.use_lrf},
                   {"propagate_features", ablation.propagate_features}};
  j["head"] = head_name(head);
  j["head_widths"] = head_widths;
  j["classes"] = classes;
  json ls = json::array();
  for (const auto& L : layers)
    ls.push_back({{"k", L.k}, {"radius_scale", L.radius_scale}, {"lambda", L.lambda}});
  j["layers"] = ls;
  return j;
}

ModelSpec ModelSpec::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("model spec: expected a JSON object");
  ModelSpec s;
  try {
    for (const auto& [key, _] : j.items()) {
      static const char* known[] = {"base_width", "base_radius", "conv",     "lrf",
                                    "kernel_mean", "first_expand", "ablation", "head",
                                    "head_widths", "classes",     "layers"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
          std::end(known))
        throw ValidationError("model spec: unknown key '" + key + "'");
    }
    s.base_width = j.value("base_width", s.base_width);
    s.base_radius = j.value("base_radius", s.base_radius);
    const std::string conv = j.value("conv", std::string("cc"));
    if (conv == "cc") s.conv = ConvVariant::CC;
    else if (conv == "pn") s.conv = ConvVariant::PN;
    else throw ValidationError("model spec: conv must be 'cc' or 'pn', got '" + conv + "'");
    const std::string lrf = j.value("lrf", std::string("curvature"));
    if (lrf == "curvature") s.lrf = LrfVariant::Curvature;
    else if (lrf == "shot") s.lrf = LrfVariant::Shot;
    else throw ValidationError("model spec: lrf must be 'curvature' or 'shot', got '" + lrf + "'");
    s.kernel_mean = j.value("kernel_mean", s.kernel_mean);
    s.first_expand = j.value("first_expand", s.first_expand);
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      s.ablation.use_coords = a.value("use_coords", true);
      s.ablation.use_normals = a.value("use_normals", true);
      s.ablation.use_geodesic = a.value("use_geodesic", true);
      s.ablation.use_lrf = a.value("use_lrf", true);
      s.ablation.propagate_features = a.value("propagate_features", true);
    }
    const std::string head = j.value("head", std::string("segmentation"));
    if (head == "segmentation") s.head = HeadKind::Segmentation;
    else if (head == "correspondence") s.head = HeadKind::Correspondence;
    else throw ValidationError("model spec: unknown head '" + head + "'");
    s.classes = j.value("classes", s.classes);
    if (j.contains("head_widths")) s.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
    if (j.contains("layers")) {
      for (const auto& L : j.at("layers"))
        s.layers.push_back({L.at("k").get<std::size_t>(), L.at("radius_scale").get<double>(),
                            L.at("lambda").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::uint64_t ModelSpec::hash() const {
  const std::string text = to_json().dump();
  return fnv1a(std::as_bytes(std::span(text.data(), text.size())));
}

std::vector<Stage> backbone_stages(const ModelSpec& spec) {
  std::vector<Stage> stages{{0, false}};
  std::size_t l = 1;
  for (; l + 1 < spec.layers.size(); l += 2) stages.push_back({l, true});
  if (l < spec.layers.size()) stages.push_back({l, false});
  return stages;
}

std::vector<LrfConvLayer> backbone_layers(const ModelSpec& spec) {
  std::vector<LrfConvLayer> out;
  for (std::size_t l = 0; l < spec.layers.size(); ++l)
    out.emplace_back(conv_name(l), l == 0 ? 0 : spec.width(l - 1), spec.width(l), spec.conv,
                     spec.first_expand, spec.kernel_mean);
  return out;
}

Model Model::create(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  std::mt19937_64 rng(seed);
  for (const auto& layer : backbone_layers(spec)) layer.init(m.params, rng);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const std::size_t w = spec.width(l);
    m.params.insert_or_assign(bn_name(l) + ".gamma", Tensor({w}, 1.0));
    m.params.insert_or_assign(bn_name(l) + ".beta", Tensor({w}, 0.0));
    m.bn.insert_or_assign(bn_name(l), ad::BatchNormStats(w));
  }
  for (const Stage& s : backbone_stages(spec)) {
    if (!s.residual) continue;
    const std::size_t in = s.first == 0 ? 0 : spec.width(s.first - 1);
    const std::size_t out = spec.width(s.first + 1);
    if (in != out) init_linear(m.params, proj_name(s.first), in, out, rng, false);
  }
  std::size_t in = spec.descriptor_width();
  for (std::size_t b = 0; b < spec.head_widths.size(); ++b) {
    const std::size_t w = spec.head_widths[b];
    init_linear(m.params, head_block(b) + ".l1", in, w, rng);
    init_linear(m.params, head_block(b) + ".l2", w, w, rng);
    if (in != w) init_linear(m.params, head_block(b) + ".proj", in, w, rng, false);
    in = w;
  }
  return m;
}

ad::ParamMap Model::state() const {
  ad::ParamMap out = params;
  for (const auto& [name, s] : bn) {
    out.emplace("running:" + name + ".mean", s.running_mean);
    out.emplace("running:" + name + ".var", s.running_var);
  }
  return out;
}

void Model::load_state(const ad::ParamMap& state) {
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = state.find(name);
    if (it == state.end()) throw ValidationError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != dst.shape())
      throw ValidationError("checkpoint tensor '" + name + "' has shape " +
                            ad::shape_string(it->second.shape()) + ", expected " +
                            ad::shape_string(dst.shape()));
    dst = it->second;
  };
  for (auto& [name, t] : params) take(name, t);
  for (auto& [name, s] : bn) {
    take("running:" + name + ".mean", s.running_mean);
    take("running:" + name + ".var", s.running_var);
  }
  const std::size_t expected = params.size() + 2 * bn.size();
  if (state.size() != expected)
    throw ValidationError("checkpoint holds " + std::to_string(state.size()) +
                          " tensors, model expects " + std::to_string(expected));
}

std::vector<std::pair<double, std::size_t>> table_keys(const ModelSpec& spec) {
  std::vector<std::pair<double, std::size_t>> keys;
  for (const auto& L : spec.layers) {
    std::pair<double, std::size_t> key{L.radius_scale, L.k};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  return keys;
}

PatchOptions table_options(const TriMesh& mesh, const ModelSpec& spec, double scale, std::size_t k,
                           int workers) {
  PatchOptions o;
  o.tau = layer_radius(mesh, spec.base_radius, scale);
  o.k = k;
  o.variant = spec.lrf;
  o.use_lrf = spec.ablation.use_lrf;
  o.workers = workers;
  return o;
}

PreparedMesh prepare_mesh_with(const TriMesh& mesh, const ModelSpec& spec, int workers,
                               const std::function<PatchTable(const PatchOptions&)>& provider) {
  spec.validate();
  PreparedMesh p;
  p.mesh = mesh;
  const auto keys = table_keys(spec);
  for (const auto& [scale, k] : keys)
    p.tables.push_back(provider(table_options(p.mesh, spec, scale, k, workers)));
  for (const auto& L : spec.layers) {
    const auto it = std::find(keys.begin(), keys.end(), std::pair{L.radius_scale, L.k});
    p.layer_table.push_back(static_cast<std::size_t>(it - keys.begin()));
  }
  return p;
}

PreparedMesh prepare_mesh(const TriMesh& mesh, const ModelSpec& spec, int workers) {
  return prepare_mesh_with(mesh, spec, workers,
                           [&](const PatchOptions& o) { return build_patch_table(mesh, o); });
}

namespace {

/// Per-layer sorted vertex sets needed to produce the final rows.
std::vector<std::vector<Index>> receptive_sets(const PreparedMesh& prepared, std::size_t layers,
                                               std::span<const Index> centers) {
  const std::size_t n = prepared.vertex_count();
  std::vector<std::vector<Index>> sets(layers);
  std::vector<char> mark(n, 0);
  for (Index c : centers) {
    if (c < 0 || static_cast<std::size_t>(c) >= n)
      throw ValidationError("center " + std::to_string(c) + " out of range for a mesh of " +
                            std::to_string(n) + " vertices");
    mark[static_cast<std::size_t>(c)] = 1;
  }
  for (std::size_t l = layers; l-- > 0;) {
    for (std::size_t v = 0; v < n; ++v)
      if (mark[v]) sets[l].push_back(static_cast<Index>(v));
    if (l == 0) break;
    const PatchTable& t = prepared.table(l);
    for (Index v : sets[l])
      for (std::size_t j = 0; j < t.k; ++j)
        mark[static_cast<std::size_t>(t.members[static_cast<std::size_t>(v) * t.k + j])] = 1;
  }
  return sets;
}

PatchGeometry select_geometry(const PatchTable& t, const std::vector<Index>& rows) {
  PatchGeometry g;
  g.k = t.k;
  g.centers = rows.size();
  const std::size_t n = rows.size() * t.k;
  g.coords = Tensor({n, 3});
  g.normals = Tensor({n, 3});
  g.geodesics = Tensor({n, 1});
  g.members.resize(n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(rows[i]) * t.k;
    for (std::size_t j = 0; j < t.k; ++j) {
      const std::size_t a = src + j, b = i * t.k + j;
      for (std::size_t c = 0; c < 3; ++c) {
        g.coords[b * 3 + c] = t.coords[a * 3 + c];
        g.normals[b * 3 + c] = t.normals[a * 3 + c];
      }
      g.geodesics[b] = t.geodesics[a];
      g.members[b] = t.members[a];
    }
  }
  return g;
}

/// Positions of `vertices` within the sorted set `rows`.
std::vector<std::int32_t> positions(const std::vector<Index>& rows, std::span<const Index> vertices) {
  std::vector<std::int32_t> out(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    auto it = std::lower_bound(rows.begin(), rows.end(), vertices[i]);
    if (it == rows.end() || *it != vertices[i])
      throw Error(ErrorKind::Validation, "receptive field bookkeeping lost vertex " +
                                             std::to_string(vertices[i]));
    out[i] = static_cast<std::int32_t>(it - rows.begin());
  }
  return out;
}

}  // namespace

std::vector<Index> strict_receptive_centers(const PreparedMesh& prepared, const ModelSpec& spec) {
  const std::size_t n = prepared.vertex_count();
  std::vector<Index> out;
  for (std::size_t v = 0; v < n; ++v) {
    const Index c = static_cast<Index>(v);
    const auto sets = receptive_sets(prepared, spec.layers.size(), std::span(&c, 1));
    bool ok = true;
    for (std::size_t l = 0; l < sets.size() && ok; ++l)
      for (Index u : sets[l])
        if (!prepared.table(l).frames[static_cast<std::size_t>(u)].strict()) {
          ok = false;
          break;
        }
    if (ok) out.push_back(c);
  }
  return out;
}

Var backbone_forward(const Binding& bind, Model& model, const PreparedMesh& prepared,
                     std::span<const Index> centers, ad::BnMode mode) {
  const ModelSpec& spec = model.spec;
  if (prepared.layer_table.size() != spec.layers.size())
    throw ValidationError("prepared mesh has patch tables for " +
                          std::to_string(prepared.layer_table.size()) + " layers, spec has " +
                          std::to_string(spec.layers.size()));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const PatchTable& t = prepared.table(l);
    if (t.k != spec.layers[l].k || t.centers() != prepared.vertex_count())
      throw ValidationError("missing patch table for layer " + std::to_string(l) + " (K=" +
                            std::to_string(spec.layers[l].k) + ")");
  }
  const auto layers = backbone_layers(spec);
  const auto sets = receptive_sets(prepared, layers.size(), centers);
  const ChannelMask mask = spec.mask();

  // Output of one conv+BN (no activation) on the rows of sets[l].
  auto conv_bn = [&](std::size_t l, Var input) {
    const PatchGeometry g = select_geometry(prepared.table(l), sets[l]);
    Var feats;
    if (l > 0) feats = ad::gather_rows(input, positions(sets[l - 1], g.members));
    Var y = layers[l].forward(bind, g, feats, mask);
    return ad::batchnorm(y, bind(bn_name(l) + ".gamma"), bind(bn_name(l) + ".beta"),
                         model.bn.at(bn_name(l)), mode);
  };

  Var x;
  for (const Stage& s : backbone_stages(spec)) {
    if (!s.residual) {
      x = ad::relu(conv_bn(s.first, x));
      continue;
    }
    const std::size_t a = s.first, b = s.first + 1;
    Var h = ad::relu(conv_bn(a, x));
    Var y = conv_bn(b, h);
    Var skip = ad::gather_rows(x, positions(sets[a - 1], sets[b]));
    if (spec.width(a - 1) != spec.width(b)) skip = linear(bind, proj_name(a), skip, false);
    x = ad::add(y, skip);
  }
  return ad::gather_rows(x, positions(sets.back(), centers));
}

Var head_forward(const Binding& bind, const ModelSpec& spec, Var descriptors) {
  Var x = descriptors;
  std::size_t in = spec.descriptor_width();
  for (std::size_t b = 0; b < spec.head_widths.size(); ++b) {
    const std::size_t w = spec.head_widths[b];
    if (b > 0) x = ad::relu(x);
    Var h = ad::relu(linear(bind, head_block(b) + ".l1", x));
    Var y = linear(bind, head_block(b) + ".l2", h);
    Var skip = in == w ? x : linear(bind, head_block(b) + ".proj", x, false);
    x = ad::add(y, skip);
    in = w;
  }
  return spec.head == HeadKind::Segmentation ? ad::softmax(x) : x;
}

Var segmentation_loss(Var probs, std::span<const int> labels, std::size_t classes) {
  const auto& s = probs.shape();
  if (s.size() != 2 || s[1] != classes || s[0] != labels.size())
    throw ValidationError("segmentation loss: probabilities " + ad::shape_string(s) + " vs " +
                          std::to_string(labels.size()) + " labels of " + std::to_string(classes) +
                          " classes");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw ValidationError("segmentation loss: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " outside [0," + std::to_string(classes) + ")");
  return ad::nll_of_probs(probs, labels);
}

Tensor compute_descriptors(const Model& model, const PreparedMesh& prepared,
                           std::span<const Index> centers) {
  Model local = model;
  ad::Tape tape;
  Binding bind(tape, local.params, false);
  return backbone_forward(bind, local, prepared, centers, ad::BnMode::Eval).value();
}

Tensor compute_outputs(const Model& model, const PreparedMesh& prepared,
                       std::span<const Index> centers) {
  Model local = model;
  ad::Tape tape;
  Binding bind(tape, local.params, false);
  Var d = backbone_forward(bind, local, prepared, centers, ad::BnMode::Eval);
  return head_forward(bind, local.spec, d).value();
}

std::vector<Index> all_vertices(std::size_t n) {
  std::vector<Index> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<Index>(i);
  return v;
}

}  // namespace lsd
