#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsd/lrfconv.hpp"
#include "lsd/patch.hpp"

namespace lsd {

enum class HeadKind { Segmentation, Correspondence };

struct LayerSpec {
  std::size_t k = 16;
  double radius_scale = 1.0;
  std::size_t lambda = 1;  ///< width multiplier on the base width
};

struct Ablation {
  bool use_coords = true;
  bool use_normals = true;
  bool use_geodesic = true;
  bool use_lrf = true;
  bool propagate_features = true;
};

/// Architecture description. Layer 0 is a plain conv+BN+ReLU; later layers
/// are paired into residual blocks, and an unpaired trailing layer is plain.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  std::size_t base_width = 32;
  double base_radius = 0.003;
  ConvVariant conv = ConvVariant::CC;
  LrfVariant lrf = LrfVariant::Curvature;
  bool kernel_mean = true;
  std::size_t first_expand = 9;
  Ablation ablation;
  HeadKind head = HeadKind::Segmentation;
  /// Output width of each fully connected residual block of the head.
  std::vector<std::size_t> head_widths;
  std::size_t classes = 8;

  /// 13 layers, K = 16, radius and width doubling every four layers.
  static ModelSpec standard(HeadKind head = HeadKind::Segmentation);
  /// Small network for desk-scale experiments and gradient checks.
  static ModelSpec toy(HeadKind head = HeadKind::Segmentation, std::size_t layers = 2,
                       std::size_t width = 8, std::size_t k = 6);

  std::size_t width(std::size_t layer) const { return layers.at(layer).lambda * base_width; }
  std::size_t descriptor_width() const { return width(layers.size() - 1); }
  std::size_t output_width() const { return head_widths.empty() ? descriptor_width() : head_widths.back(); }

  ChannelMask mask() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  /// Stable digest of the canonical JSON form.
  std::uint64_t hash() const;
};

/// A contiguous group of backbone layers sharing one skip connection.
struct Stage {
  std::size_t first = 0;
  bool residual = false;
  std::size_t size() const { return residual ? 2 : 1; }
};
std::vector<Stage> backbone_stages(const ModelSpec& spec);
std::vector<LrfConvLayer> backbone_layers(const ModelSpec& spec);

/// Parameters plus batch-norm running statistics.
struct Model {
  ModelSpec spec;
  ad::ParamMap params;
  std::map<std::string, ad::BatchNormStats> bn;

  static Model create(const ModelSpec& spec, std::uint64_t seed);
  /// Parameters and running statistics as one flat map for checkpoints.
  ad::ParamMap state() const;
  /// Inverse of `state`; every expected tensor must be present with its shape.
  void load_state(const ad::ParamMap& state);
};

/// A mesh with the patch tables every backbone layer reads.
struct PreparedMesh {
  TriMesh mesh;
  std::vector<PatchTable> tables;
  std::vector<std::size_t> layer_table;  ///< layer -> index into `tables`

  const PatchTable& table(std::size_t layer) const { return tables.at(layer_table.at(layer)); }
  std::size_t vertex_count() const { return static_cast<std::size_t>(mesh.vertex_count()); }
};

/// Distinct (radius scale, K) pairs of a spec, in first-use order.
std::vector<std::pair<double, std::size_t>> table_keys(const ModelSpec& spec);
PatchOptions table_options(const TriMesh& mesh, const ModelSpec& spec, double scale, std::size_t k,
                           int workers);
PreparedMesh prepare_mesh(const TriMesh& mesh, const ModelSpec& spec, int workers = 1);
/// Same, with each table obtained from `provider` (e.g. a cache).
PreparedMesh prepare_mesh_with(const TriMesh& mesh, const ModelSpec& spec, int workers,
                               const std::function<PatchTable(const PatchOptions&)>& provider);

/// Vertices whose output at the last layer depends only on strictly
/// disambiguated frames.
std::vector<Index> strict_receptive_centers(const PreparedMesh& prepared, const ModelSpec& spec);

/// Descriptor rows for `centers` (duplicates allowed), computed on the
/// union of their receptive fields only. Train mode updates model.bn.
ad::Var backbone_forward(const Binding& bind, Model& model, const PreparedMesh& prepared,
                         std::span<const Index> centers, ad::BnMode mode);

/// Fully connected residual head; softmax probabilities for segmentation,
/// matching features for correspondence.
ad::Var head_forward(const Binding& bind, const ModelSpec& spec, ad::Var descriptors);

/// Mean negative log-probability of the true class.
ad::Var segmentation_loss(ad::Var probs, std::span<const int> labels, std::size_t classes);

/// Eval-mode descriptors of every listed center.
ad::Tensor compute_descriptors(const Model& model, const PreparedMesh& prepared,
                               std::span<const Index> centers);
/// Eval-mode head output for every listed center.
ad::Tensor compute_outputs(const Model& model, const PreparedMesh& prepared,
                           std::span<const Index> centers);

std::vector<Index> all_vertices(std::size_t n);

}  // namespace lsd
