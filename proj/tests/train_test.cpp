#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "lsd/error.hpp"
#include "lsd/shapes.hpp"
#include "lsd/synthetic.hpp"
#include "lsd/train.hpp"
#include "scratch_dir.hpp"

using namespace lsd;

namespace {

ModelSpec two_class_spec() {
  ModelSpec s = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
  s.classes = 2;
  s.head_widths = {16, 2};
  return s;
}

std::vector<LabeledShape> two_part_pair() {
  std::mt19937_64 rng(3);
  auto a = synthetic::two_part("a", 10, 6, Mat3::Identity());
  auto b = synthetic::two_part("b", 10, 6, shapes::random_rotation(rng));
  b.split = Split::Test;
  return {a, b};
}

}  // namespace

TEST(Dataset, SaveAndLoad) {
  ScratchDir dir;
  const auto shapes = two_part_pair();
  save_dataset(dir.path(), shapes);
  const auto back = load_dataset(dir.path(), "manifest.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].labels, shapes[0].labels);
  EXPECT_EQ(back[1].split, Split::Test);
  EXPECT_EQ(back[1].mesh.vertices(), shapes[1].mesh.vertices());
  EXPECT_FALSE(load_reference(dir.path(), "manifest.json").has_value());
}

TEST(Dataset, LabelCountMismatchNamesFile) {
  ScratchDir dir;
  std::vector<LabeledShape> shapes{two_part_pair()[0]};
  save_dataset(dir.path(), shapes);
  const auto back = load_dataset(dir.path(), "manifest.json");
  std::filesystem::path label_file;
  for (const auto& e : std::filesystem::directory_iterator(dir.path()))
    if (e.path().extension() == ".labels" || e.path().extension() == ".txt") label_file = e.path();
  ASSERT_FALSE(label_file.empty());
  std::vector<int> fewer = shapes[0].labels;
  fewer.pop_back();
  write_labels(label_file, fewer);
  try {
    load_dataset(dir.path(), "manifest.json");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(label_file.filename().string()), std::string::npos);
  }
}

TEST(Dataset, MissingManifestNamesLocation) {
  ScratchDir dir;
  try {
    load_dataset(dir.path(), "manifest.json");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find((dir.path() / "manifest.json").string()), std::string::npos);
  }
}

TEST(Dataset, BadLabelLineIsParseError) {
  ScratchDir dir;
  std::ofstream(dir / "x.labels") << "0\n1\nfoo\n";
  try {
    read_labels(dir / "x.labels");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3);
  }
}

TEST(Segmentation, ZeroEpochsOnlyEvaluates) {
  const ModelSpec spec = two_class_spec();
  const auto data = prepare_segmentation(two_part_pair(), spec, nullptr);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train_segmentation(data, spec, cfg);
  ASSERT_EQ(r.report.epochs.size(), 1u);
  EXPECT_EQ(r.report.epochs[0].steps, 0u);
  EXPECT_EQ(r.model.state(), Model::create(spec, cfg.seed).state());
  // An untrained network is no better than always naming the larger class.
  const auto& labels = data[0].labels;
  const double ones = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / labels.size();
  EXPECT_LE(r.report.epochs[0].train_accuracy, std::max(ones, 1.0 - ones) + 0.05);
  EXPECT_NEAR(r.report.epochs[0].loss, std::log(2.0), 0.5);
}

TEST(Segmentation, TrainingIsDeterministicAndLowersLoss) {
  const ModelSpec spec = two_class_spec();
  const auto data = prepare_segmentation(two_part_pair(), spec, nullptr);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.points_per_mesh = 40;
  cfg.adam.lr = 0.01;
  cfg.seed = 5;
  const TrainResult a = train_segmentation(data, spec, cfg);
  const TrainResult b = train_segmentation(data, spec, cfg);
  EXPECT_EQ(a.model.state(), b.model.state());
  ASSERT_EQ(a.report.epochs.size(), 41u);
  for (std::size_t e = 0; e < 41; ++e) EXPECT_EQ(a.report.epochs[e].loss, b.report.epochs[e].loss);
  EXPECT_LT(a.report.epochs.back().loss, 0.5 * a.report.epochs.front().loss);
  EXPECT_EQ(a.report.epochs.back().steps, 40u);
}

TEST(Segmentation, MaxStepsStopsEarly) {
  const ModelSpec spec = two_class_spec();
  const auto data = prepare_segmentation(two_part_pair(), spec, nullptr);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.points_per_mesh = 20;
  cfg.max_steps = 3;
  EXPECT_EQ(train_segmentation(data, spec, cfg).optimizer.step, 3);
}

TEST(Segmentation, RejectsOutOfRangeLabels) {
  const ModelSpec spec = two_class_spec();
  auto shapes = two_part_pair();
  shapes[0].labels[0] = 2;
  EXPECT_THROW(prepare_segmentation(shapes, spec, nullptr), ValidationError);
}

TEST(Correspondence, UnitAreaScaling) {
  const TriMesh m = unit_area(shapes::icosphere(2, 3.0));
  EXPECT_NEAR(m.surface_area(), 1.0, 1e-12);
}

TEST(Correspondence, ErrorCurveIsMonotone) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> errors(200);
  for (double& e : errors) e = u(rng) < 0.3 ? 0.0 : u(rng);
  const auto curve = geodesic_error_curve(errors, 1.0, 20);
  ASSERT_EQ(curve.size(), 21u);
  EXPECT_EQ(curve.front().radius, 0.0);
  EXPECT_EQ(curve.back().radius, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_GE(curve[i].fraction, curve[i - 1].fraction);
  EXPECT_EQ(curve.back().fraction, 1.0);
  const double zeros = static_cast<double>(std::count(errors.begin(), errors.end(), 0.0)) / 200;
  EXPECT_EQ(curve.front().fraction, zeros);
}

TEST(Correspondence, ShortTrainingRunsAndMatchesEveryVertex) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Correspondence, 2, 8, 6);
  const TriMesh ref = shapes::jittered(shapes::torus(1.0, 0.35, 12, 6), 0.02, 4);
  const auto set = synthetic::matching_set(ref, 1, 1, 9);
  const CorrespondenceData data = prepare_correspondence(set.shapes, set.reference, spec, 8, nullptr);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.spectral_k = 8;
  const TrainResult r = train_correspondence(data, spec, cfg);
  EXPECT_EQ(r.report.epochs.size(), 3u);
  EXPECT_FALSE(r.report.curve.empty());
  const MatchResult m = match_shape(r.model, data, data.shapes.back());
  EXPECT_EQ(m.matches.size(), 72u);
  EXPECT_EQ(m.errors.size(), 72u);
  EXPECT_TRUE(std::isfinite(m.loss));
}

TEST(Correspondence, SegmentationHeadIsRejected) {
  const ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
  const TriMesh ref = shapes::torus(1.0, 0.35, 12, 6);
  const auto set = synthetic::matching_set(ref, 1, 0, 9);
  const CorrespondenceData data = prepare_correspondence(set.shapes, set.reference, spec, 8, nullptr);
  EXPECT_THROW(train_correspondence(data, spec, TrainConfig{}), ValidationError);
}
