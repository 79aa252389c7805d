#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "lsd/autodiff.hpp"
#include "lsd/patch.hpp"

namespace lsd {

/// Learnable parameters bound to one tape, looked up by name.
class Binding {
 public:
  Binding() = default;
  Binding(ad::Tape& tape, const ad::ParamMap& params, bool trainable);

  ad::Var operator()(const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  ad::Tape& tape() const { return *tape_; }
  /// Gradients after `tape().backward`, keyed like the parameters.
  ad::ParamMap gradients() const;

 private:
  ad::Tape* tape_ = nullptr;
  std::map<std::string, ad::Var> vars_;
};

enum class ConvVariant { CC, PN };

/// Which of the per-neighbor inputs reach the layer. Disabled channels are
/// replaced by zeros so tensor shapes do not change.
struct ChannelMask {
  bool coords = true;
  bool normals = true;
  bool geodesic = true;
  bool features = true;
};

/// Geometry of N patches of K neighbors as tape-ready constants.
struct PatchGeometry {
  std::size_t k = 0;
  std::size_t centers = 0;
  ad::Tensor coords;     ///< N*K x 3
  ad::Tensor normals;    ///< N*K x 3
  ad::Tensor geodesics;  ///< N*K x 1
  std::vector<std::int32_t> members;

  static PatchGeometry from_table(const PatchTable& table);
  static PatchGeometry from_patch(const AlignedPatch& patch);
};

/// One continuous geodesic convolution layer (or its PointNet stand-in).
///
/// CC: every neighbor's coordinates, normal and geodesic distance go through
/// their own linear+ReLU expander to width E (E = F_in, or `first_expand`
/// when the layer has no input features). The expansions and the neighbor's
/// feature form x_ij of width D = 3E + F_in; a three-layer MLP regresses a
/// D x F_out kernel W_ij from x_ij and the layer emits
///   f_i = s * sum_j W_ij^T x_ij + b,   s = 1/K if kernel_mean else 1.
///
/// PN: a shared two-layer MLP over [v, n, g, f] is max-pooled over the
/// neighbors and mapped linearly to F_out.
class LrfConvLayer {
 public:
  LrfConvLayer(std::string prefix, std::size_t in, std::size_t out, ConvVariant variant,
               std::size_t first_expand = 9, bool kernel_mean = true);

  std::size_t in_width() const { return in_; }
  std::size_t out_width() const { return out_; }
  std::size_t expand_width() const { return expand_; }
  /// Width of the concatenated per-neighbor description.
  std::size_t description_width() const { return 3 * expand_ + in_; }
  const std::string& prefix() const { return prefix_; }

  void init(ad::ParamMap& params, std::mt19937_64& rng) const;

  /// `neighbor_features` is [N*K x F_in] in patch member order, or an
  /// invalid Var when F_in = 0. Returns [N x F_out].
  ad::Var forward(const Binding& bind, const PatchGeometry& geometry, ad::Var neighbor_features,
                  const ChannelMask& mask = {}) const;

 private:
  ad::Var forward_cc(const Binding& bind, const PatchGeometry& g, ad::Var feats,
                     const ChannelMask& mask) const;
  ad::Var forward_pn(const Binding& bind, const PatchGeometry& g, ad::Var feats,
                     const ChannelMask& mask) const;

  std::string prefix_;
  std::size_t in_;
  std::size_t out_;
  std::size_t expand_;
  ConvVariant variant_;
  bool kernel_mean_;
};

/// x W + b for x [N x in].
ad::Var linear(const Binding& bind, const std::string& name, ad::Var x, bool bias = true);
void init_linear(ad::ParamMap& params, const std::string& name, std::size_t in, std::size_t out,
                 std::mt19937_64& rng, bool bias = true);

/// Single-patch convolution: `prev_features` is [K x F_in] in member order
/// (ignored when the layer has F_in = 0). Returns the F_out output row.
ad::Tensor lrfconv_forward(const AlignedPatch& patch, const ad::Tensor* prev_features,
                           const ad::ParamMap& params, const LrfConvLayer& layer,
                           const ChannelMask& mask = {});

/// Same contract for the PointNet variant; `layer` must be built with
/// ConvVariant::PN.
ad::Tensor pointnet_forward(const AlignedPatch& patch, const ad::Tensor* prev_features,
                            const ad::ParamMap& params, const LrfConvLayer& layer,
                            const ChannelMask& mask = {});

}  // namespace lsd
