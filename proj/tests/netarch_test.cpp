#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lsd/error.hpp"
#include "lsd/netarch.hpp"
#include "lsd/shapes.hpp"

using namespace lsd;
using ad::Tensor;

namespace {

// 50 vertices.
TriMesh small_mesh() { return with_geometry(shapes::jittered(shapes::torus(1.0, 0.35, 10, 5), 0.02, 1)); }

}  // namespace

TEST(ModelSpec, StandardLayout) {
  const ModelSpec s = ModelSpec::standard();
  ASSERT_EQ(s.layers.size(), 13u);
  EXPECT_EQ(s.width(0), 32u);
  EXPECT_EQ(s.width(12), 256u);
  EXPECT_EQ(s.layers[4].radius_scale, 2.0);
  EXPECT_EQ(s.output_width(), 8u);
  EXPECT_NO_THROW(s.validate());
  const auto stages = backbone_stages(s);
  ASSERT_EQ(stages.size(), 7u);
  EXPECT_FALSE(stages.front().residual);
  EXPECT_TRUE(stages[1].residual);
}

TEST(ModelSpec, JsonRoundTripKeepsHash) {
  ModelSpec s = ModelSpec::toy(HeadKind::Correspondence, 3, 8, 6);
  s.conv = ConvVariant::PN;
  s.ablation.use_lrf = false;
  const ModelSpec back = ModelSpec::from_json(s.to_json());
  EXPECT_EQ(back.hash(), s.hash());
  EXPECT_EQ(back.to_json(), s.to_json());
  s.base_width = 9;
  EXPECT_NE(back.hash(), s.hash());
}

TEST(ModelSpec, RejectsBadInput) {
  nlohmann::json j = ModelSpec::toy().to_json();
  j["colour"] = 1;
  EXPECT_THROW(ModelSpec::from_json(j), ValidationError);
  ModelSpec s = ModelSpec::toy();
  s.classes = 5;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Network, OutputShapes) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 4, 8, 6);
  const Model model = Model::create(spec, 1);
  const PreparedMesh prepared = prepare_mesh(small_mesh(), spec);
  const auto all = all_vertices(50);
  EXPECT_EQ(compute_descriptors(model, prepared, all).shape(), (ad::Shape{50, 8}));
  const Tensor probs = compute_outputs(model, prepared, all);
  ASSERT_EQ(probs.shape(), (ad::Shape{50, 8}));
  for (std::size_t r = 0; r < 50; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_GE(probs.at(r, c), 0.0);
      sum += probs.at(r, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Network, SubsetMatchesFullEvaluation) {
  for (ConvVariant conv : {ConvVariant::CC, ConvVariant::PN}) {
    ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 3, 8, 6);
    spec.conv = conv;
    const Model model = Model::create(spec, 2);
    const PreparedMesh prepared = prepare_mesh(small_mesh(), spec);
    const Tensor full = compute_descriptors(model, prepared, all_vertices(50));
    const std::vector<Index> subset{7, 31, 7, 0};
    const Tensor part = compute_descriptors(model, prepared, subset);
    for (std::size_t r = 0; r < subset.size(); ++r)
      for (std::size_t c = 0; c < 8; ++c)
        EXPECT_NEAR(part.at(r, c), full.at(subset[r], c), 1e-12);
  }
}

TEST(Network, ZeroedResidualBranchIsIdentity) {
  const TriMesh mesh = small_mesh();
  const ModelSpec deep = ModelSpec::toy(HeadKind::Correspondence, 3, 8, 6);
  const ModelSpec shallow = ModelSpec::toy(HeadKind::Correspondence, 1, 8, 6);
  Model a = Model::create(deep, 3);
  Model b = Model::create(shallow, 4);
  for (auto& [name, t] : b.params)
    if (name.rfind("conv0", 0) == 0) t = a.params.at(name);
  a.params["conv2.bn.gamma"].fill(0.0);
  a.params["conv2.bn.beta"].fill(0.0);
  const auto all = all_vertices(50);
  EXPECT_EQ(compute_descriptors(a, prepare_mesh(mesh, deep), all),
            compute_descriptors(b, prepare_mesh(mesh, shallow), all));
}

TEST(Network, ZeroedHeadBlocksPassDescriptorsThrough) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Correspondence, 1, 8, 6);
  Model model = Model::create(spec, 5);
  for (const char* name : {"head0.l2.W", "head0.l2.b", "head1.l2.W", "head1.l2.b"})
    model.params[name].fill(0.0);
  const PreparedMesh prepared = prepare_mesh(small_mesh(), spec);
  const auto all = all_vertices(50);
  EXPECT_EQ(compute_outputs(model, prepared, all), compute_descriptors(model, prepared, all));
}

TEST(Network, StateRoundTrip) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 3, 8, 6);
  const Model a = Model::create(spec, 6);
  Model b = Model::create(spec, 7);
  b.load_state(a.state());
  EXPECT_EQ(b.state(), a.state());
  auto broken = a.state();
  broken.erase(broken.begin());
  EXPECT_THROW(b.load_state(broken), ValidationError);
}

TEST(Network, CenterOutOfRangeIsRejected) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
  const Model model = Model::create(spec, 1);
  const PreparedMesh prepared = prepare_mesh(small_mesh(), spec);
  const std::vector<Index> bad{50};
  EXPECT_THROW(compute_descriptors(model, prepared, bad), ValidationError);
}

TEST(Network, StrictCentersHaveStrictFrames) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
  const PreparedMesh prepared = prepare_mesh(small_mesh(), spec);
  for (Index c : strict_receptive_centers(prepared, spec))
    EXPECT_TRUE(prepared.table(0).frames[c].strict());
}

TEST(SegmentationLoss, UniformIsLogClasses) {
  ad::Tape t;
  const std::vector<int> labels{0, 3, 7};
  const ad::Var loss = segmentation_loss(t.constant(Tensor({3, 8}, 1.0 / 8)), labels, 8);
  EXPECT_NEAR(loss.value().item(), std::log(8.0), 1e-12);
}

TEST(SegmentationLoss, OneHotIsZero) {
  ad::Tape t;
  Tensor p({2, 3});
  p.at(0, 1) = 1.0;
  p.at(1, 2) = 1.0;
  const std::vector<int> labels{1, 2};
  EXPECT_EQ(segmentation_loss(t.constant(p), labels, 3).value().item(), 0.0);
}

TEST(SegmentationLoss, MatchesDirectSum) {
  std::mt19937_64 rng(8);
  Tensor p = Tensor::uniform({5, 4}, 0.1, 1.0, rng);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += p.at(r, c);
    for (std::size_t c = 0; c < 4; ++c) p.at(r, c) /= s;
  }
  const std::vector<int> labels{0, 1, 2, 3, 1};
  double expected = 0.0;
  for (std::size_t r = 0; r < 5; ++r) expected -= std::log(p.at(r, labels[r])) / 5;
  ad::Tape t;
  EXPECT_NEAR(segmentation_loss(t.constant(p), labels, 4).value().item(), expected, 1e-14);
  const std::vector<int> bad{0, 1, 2, 4, 1};
  EXPECT_THROW(segmentation_loss(t.constant(p), bad, 4), ValidationError);
}
