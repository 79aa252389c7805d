#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lsd/cache.hpp"
#include "lsd/netarch.hpp"
#include "lsd/optim.hpp"
#include "lsd/spectral.hpp"

namespace lsd {

enum class Split { Train, Test };

/// A mesh with one integer per vertex: a class id for segmentation or the
/// index of the corresponding vertex on the reference shape for matching.
struct LabeledShape {
  std::string name;
  TriMesh mesh;
  std::vector<int> labels;
  Split split = Split::Train;
};

/// Reads a JSON manifest {"shapes": [{"mesh", "labels", "split"}, ...]};
/// relative paths resolve against `root`.
std::vector<LabeledShape> load_dataset(const std::filesystem::path& root,
                                       const std::filesystem::path& manifest);
/// The optional "reference": {"mesh"} entry of a matching manifest, with
/// identity labels.
std::optional<LabeledShape> load_reference(const std::filesystem::path& root,
                                           const std::filesystem::path& manifest);
/// Writes meshes (OFF), label files and manifest.json under `root`.
void save_dataset(const std::filesystem::path& root, const std::vector<LabeledShape>& shapes,
                  const LabeledShape* reference = nullptr);

std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t points_per_mesh = 2000;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  /// Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
  std::size_t spectral_k = 30;
  int workers = 1;
  /// Evaluate after every epoch (otherwise only after the last one).
  bool eval_each_epoch = true;
  /// Written with the last finite parameters if training diverges.
  std::optional<std::filesystem::path> divergence_checkpoint;
};

struct EpochMetrics {
  std::size_t epoch = 0;  ///< 0 is the untrained evaluation
  std::size_t steps = 0;  ///< optimizer steps taken so far
  double loss = 0.0;
  /// Segmentation: fraction of correctly labeled vertices. Matching:
  /// fraction of exact matches.
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct CurvePoint {
  double radius;
  double fraction;
};

struct MetricsReport {
  std::vector<EpochMetrics> epochs;
  /// Fraction of matches within each geodesic radius (matching only).
  std::vector<CurvePoint> curve;
};

struct TrainResult {
  Model model;
  ad::AdamState optimizer;
  MetricsReport report;
};

// ---- Segmentation

struct SegmentationItem {
  std::string name;
  PreparedMesh prepared;
  std::vector<int> labels;
  Split split = Split::Train;
};

std::vector<SegmentationItem> prepare_segmentation(const std::vector<LabeledShape>& shapes,
                                                   const ModelSpec& spec, CacheStore* store,
                                                   int workers = 1);

/// Per-vertex argmax class, evaluated in eval mode.
std::vector<int> predict_labels(const Model& model, const PreparedMesh& prepared);
double segmentation_accuracy(const Model& model, const SegmentationItem& item);

/// Adam on the mean class NLL of `points_per_mesh` fresh random vertices per
/// mesh and epoch; one optimizer step per training mesh.
TrainResult train_segmentation(const std::vector<SegmentationItem>& data, const ModelSpec& spec,
                               const TrainConfig& cfg, const Model* init = nullptr);

// ---- Correspondence

struct CorrespondenceItem {
  std::string name;
  PreparedMesh prepared;
  SpectralBasis basis;
  std::vector<Index> truth;  ///< vertex -> reference vertex
  Split split = Split::Train;
};

struct CorrespondenceData {
  CorrespondenceItem reference;
  Eigen::MatrixXd reference_geodesics;
  std::vector<CorrespondenceItem> shapes;
};

/// Copy scaled about its centroid to unit surface area.
TriMesh unit_area(const TriMesh& mesh);

/// Meshes are rescaled to unit area before patches, bases and distances
/// are computed.
CorrespondenceData prepare_correspondence(const std::vector<LabeledShape>& shapes,
                                          const LabeledShape& reference, const ModelSpec& spec,
                                          std::size_t k, CacheStore* store, int workers = 1);

struct MatchResult {
  double loss = 0.0;
  std::vector<Index> matches;
  std::vector<double> errors;  ///< geodesic distance from match to truth
};

/// Eval-mode matching of one shape against the reference.
MatchResult match_shape(const Model& model, const CorrespondenceData& data,
                        const CorrespondenceItem& item);

/// Fraction of errors <= r for `steps` + 1 radii evenly spanning [0, max_radius].
std::vector<CurvePoint> geodesic_error_curve(const std::vector<double>& errors, double max_radius,
                                             std::size_t steps = 50);

/// Siamese training against the reference shape; the curve in the report is
/// computed over test shapes (all shapes when none is marked test).
TrainResult train_correspondence(const CorrespondenceData& data, const ModelSpec& spec,
                                 const TrainConfig& cfg, const Model* init = nullptr);

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

}  // namespace lsd
