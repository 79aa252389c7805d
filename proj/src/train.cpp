#include "lsd/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lsd/binary_io.hpp"
#include "lsd/error.hpp"

namespace lsd {

namespace fs = std::filesystem;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s, const std::string& origin) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ValidationError(origin + ": split must be 'train' or 'test', got '" + s + "'");
}

[[noreturn]] void diverged(const Model& model, const TrainConfig& cfg, std::int64_t step,
                           const std::string& what) {
  std::string msg = "training diverged at step " + std::to_string(step) + ": " + what;
  if (cfg.divergence_checkpoint) {
    ad::save_checkpoint({model.spec.hash(), step, model.state()}, *cfg.divergence_checkpoint);
    msg += "; last finite parameters saved to " + cfg.divergence_checkpoint->string();
  }
  throw NumericalError(msg);
}

/// Optimizer step that reports divergence with the parameters still intact.
void update(Model& model, const ad::ParamMap& grads, ad::AdamState& opt, const TrainConfig& cfg,
            const std::string& where) {
  try {
    ad::adam_step(model.params, grads, opt);
  } catch (const NumericalError& e) {
    diverged(model, cfg, opt.step, where + ": " + e.what());
  }
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<int> read_labels(const fs::path& path) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    std::istringstream ls(line);
    long long v;
    std::string rest;
    if (!(ls >> v) || (ls >> rest) || v < 0 || v > std::numeric_limits<int>::max())
      throw ParseError(path.string(), static_cast<int>(lineno), "expected one non-negative integer per line");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::string text;
  for (int l : labels) text += std::to_string(l) + "\n";
  io::write_file_atomic(path, text);
}

namespace {

nlohmann::json read_manifest(const fs::path& mpath) {
  if (!fs::exists(mpath))
    throw IoError("dataset manifest not found: expected " + mpath.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(mpath.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("shapes") || !j["shapes"].is_array())
    throw ValidationError(mpath.string() + ": expected an object with a 'shapes' array");
  return j;
}

fs::path manifest_path(const fs::path& root, const fs::path& manifest) {
  return manifest.is_absolute() ? manifest : root / manifest;
}

}  // namespace

std::vector<LabeledShape> load_dataset(const fs::path& root, const fs::path& manifest) {
  const fs::path mpath = manifest_path(root, manifest);
  const nlohmann::json j = read_manifest(mpath);
  std::vector<LabeledShape> out;
  for (const auto& e : j["shapes"]) {
    if (!e.is_object() || !e.contains("mesh") || !e.contains("labels"))
      throw ValidationError(mpath.string() + ": every shape needs 'mesh' and 'labels'");
    LabeledShape s;
    const fs::path mesh_path = root / e["mesh"].get<std::string>();
    const fs::path label_path = root / e["labels"].get<std::string>();
    s.name = e.value("name", mesh_path.stem().string());
    s.split = parse_split(e.value("split", std::string("train")), mpath.string());
    s.mesh = load_mesh(mesh_path);
    s.labels = read_labels(label_path);
    if (s.labels.size() != static_cast<std::size_t>(s.mesh.vertex_count()))
      throw ValidationError(label_path.string() + ": " + std::to_string(s.labels.size()) +
                            " labels for a mesh of " + std::to_string(s.mesh.vertex_count()) +
                            " vertices (" + mesh_path.string() + ")");
    out.push_back(std::move(s));
  }
  return out;
}

std::optional<LabeledShape> load_reference(const fs::path& root, const fs::path& manifest) {
  const fs::path mpath = manifest_path(root, manifest);
  const nlohmann::json j = read_manifest(mpath);
  if (!j.contains("reference")) return std::nullopt;
  const auto& e = j["reference"];
  if (!e.is_object() || !e.contains("mesh"))
    throw ValidationError(mpath.string() + ": 'reference' needs a 'mesh'");
  LabeledShape s;
  const fs::path mesh_path = root / e["mesh"].get<std::string>();
  s.name = e.value("name", mesh_path.stem().string());
  s.mesh = load_mesh(mesh_path);
  s.labels.resize(static_cast<std::size_t>(s.mesh.vertex_count()));
  for (std::size_t i = 0; i < s.labels.size(); ++i) s.labels[i] = static_cast<int>(i);
  return s;
}

void save_dataset(const fs::path& root, const std::vector<LabeledShape>& shapes,
                  const LabeledShape* reference) {
  fs::create_directories(root);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : shapes) {
    const std::string mesh_file = s.name + ".off", label_file = s.name + ".labels";
    save_off(s.mesh, root / mesh_file);
    write_labels(root / label_file, s.labels);
    list.push_back({{"name", s.name}, {"mesh", mesh_file}, {"labels", label_file},
                    {"split", split_name(s.split)}});
  }
  nlohmann::json manifest{{"shapes", list}};
  if (reference) {
    const std::string mesh_file = reference->name + ".off";
    save_off(reference->mesh, root / mesh_file);
    manifest["reference"] = {{"name", reference->name}, {"mesh", mesh_file}};
  }
  io::write_file_atomic(root / "manifest.json", manifest.dump(2) + "\n");
}

// ---- Segmentation

std::vector<SegmentationItem> prepare_segmentation(const std::vector<LabeledShape>& shapes,
                                                   const ModelSpec& spec, CacheStore* store,
                                                   int workers) {
  std::vector<SegmentationItem> out;
  for (const auto& s : shapes) {
    if (s.labels.size() != static_cast<std::size_t>(s.mesh.vertex_count()))
      throw ValidationError(s.name + ": label count differs from vertex count");
    for (int l : s.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= spec.classes)
        throw ValidationError(s.name + ": label " + std::to_string(l) + " outside [0," +
                              std::to_string(spec.classes) + ")");
    SegmentationItem item;
    item.name = s.name;
    item.prepared = prepare_mesh_cached(with_geometry(s.mesh), spec, store, workers);
    item.labels = s.labels;
    item.split = s.split;
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<int> predict_labels(const Model& model, const PreparedMesh& prepared) {
  const auto centers = all_vertices(prepared.vertex_count());
  const Tensor probs = compute_outputs(model, prepared, centers);
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c)
      if (probs.at(r, c) > probs.at(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double segmentation_accuracy(const Model& model, const SegmentationItem& item) {
  const auto pred = predict_labels(model, item.prepared);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == item.labels[i];
  return pred.empty() ? kNaN : static_cast<double>(ok) / static_cast<double>(pred.size());
}

namespace {

double eval_segmentation_loss(const Model& model, const SegmentationItem& item) {
  Model local = model;
  ad::Tape tape;
  Binding bind(tape, local.params, false);
  const auto centers = all_vertices(item.prepared.vertex_count());
  Var probs = head_forward(
      bind, local.spec, backbone_forward(bind, local, item.prepared, centers, ad::BnMode::Eval));
  return segmentation_loss(probs, item.labels, local.spec.classes).value().item();
}

void evaluate_segmentation(const Model& model, const std::vector<SegmentationItem>& data,
                           EpochMetrics& m) {
  std::vector<double> train, test;
  for (const auto& item : data)
    (item.split == Split::Train ? train : test).push_back(segmentation_accuracy(model, item));
  m.train_accuracy = mean(train);
  m.test_accuracy = mean(test);
}

}  // namespace

TrainResult train_segmentation(const std::vector<SegmentationItem>& data, const ModelSpec& spec,
                               const TrainConfig& cfg, const Model* init) {
  spec.validate();
  if (cfg.points_per_mesh == 0) throw ValidationError("points per mesh must be positive");
  for (const auto& item : data) {
    if (item.prepared.layer_table.size() != spec.layers.size())
      throw ValidationError(item.name + ": prepared for a different layer count");
    for (int l : item.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= spec.classes)
        throw ValidationError(item.name + ": label " + std::to_string(l) + " out of range");
  }
  TrainResult res{init ? *init : Model::create(spec, cfg.seed), {}, {}};
  if (res.model.spec.hash() != spec.hash())
    throw ValidationError("initial model was built for a different spec");
  res.optimizer.config = cfg.adam;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].split == Split::Train) train_idx.push_back(i);

  {
    EpochMetrics m;
    std::vector<double> losses;
    for (std::size_t i : train_idx) losses.push_back(eval_segmentation_loss(res.model, data[i]));
    m.loss = mean(losses);
    evaluate_segmentation(res.model, data, m);
    res.report.epochs.push_back(m);
  }

  bool stop = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    for (std::size_t i : order) {
      const SegmentationItem& item = data[i];
      const std::size_t n = item.prepared.vertex_count();
      std::vector<Index> centers = all_vertices(n);
      if (cfg.points_per_mesh < n) {
        std::shuffle(centers.begin(), centers.end(), rng);
        centers.resize(cfg.points_per_mesh);
        std::sort(centers.begin(), centers.end());
      }
      std::vector<int> labels(centers.size());
      for (std::size_t c = 0; c < centers.size(); ++c)
        labels[c] = item.labels[static_cast<std::size_t>(centers[c])];

      ad::Tape tape;
      Binding bind(tape, res.model.params, true);
      Var probs = head_forward(
          bind, spec, backbone_forward(bind, res.model, item.prepared, centers, ad::BnMode::Train));
      Var loss = segmentation_loss(probs, labels, spec.classes);
      const double value = loss.value().item();
      if (!std::isfinite(value))
        diverged(res.model, cfg, res.optimizer.step, item.name + ": loss is " + std::to_string(value));
      tape.backward(loss);
      update(res.model, bind.gradients(), res.optimizer, cfg, item.name);
      losses.push_back(value);
      if (cfg.max_steps && static_cast<std::size_t>(res.optimizer.step) >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.steps = static_cast<std::size_t>(res.optimizer.step);
    m.loss = mean(losses);
    if (cfg.eval_each_epoch || epoch == cfg.epochs || stop) {
      evaluate_segmentation(res.model, data, m);
    } else {
      m.train_accuracy = m.test_accuracy = kNaN;
    }
    res.report.epochs.push_back(m);
  }
  return res;
}

// ---- Correspondence

TriMesh unit_area(const TriMesh& mesh) {
  const double area = mesh.surface_area();
  if (!(area > 0)) throw ValidationError("cannot normalise a mesh with zero area");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : mesh.vertices()) centroid += p;
  centroid /= static_cast<double>(mesh.vertex_count());
  const double s = 1.0 / std::sqrt(area);
  return transformed(mesh, s * Mat3::Identity(), -s * centroid);
}

CorrespondenceData prepare_correspondence(const std::vector<LabeledShape>& shapes,
                                          const LabeledShape& reference, const ModelSpec& spec,
                                          std::size_t k, CacheStore* store, int workers) {
  auto prepare = [&](const LabeledShape& s, bool is_reference) {
    CorrespondenceItem item;
    item.name = s.name;
    item.split = s.split;
    const TriMesh mesh = with_geometry(unit_area(s.mesh));
    item.prepared = prepare_mesh_cached(mesh, spec, store, workers);
    item.basis = store ? store->basis(mesh, k) : laplacian_basis(mesh, k);
    if (is_reference) {
      item.truth = all_vertices(item.prepared.vertex_count());
    } else {
      if (s.labels.size() != static_cast<std::size_t>(s.mesh.vertex_count()))
        throw ValidationError(s.name + ": correspondence count differs from vertex count");
      for (int t : s.labels)
        if (t < 0 || t >= reference.mesh.vertex_count())
          throw ValidationError(s.name + ": target " + std::to_string(t) +
                                " outside the reference shape");
      item.truth.assign(s.labels.begin(), s.labels.end());
    }
    return item;
  };
  CorrespondenceData d;
  d.reference = prepare(reference, true);
  const TriMesh& ref_mesh = d.reference.prepared.mesh;
  d.reference_geodesics = store ? store->geodesics(ref_mesh) : geodesic_matrix(ref_mesh);
  for (const auto& s : shapes) d.shapes.push_back(prepare(s, false));
  return d;
}

namespace {

Var match_loss(const Binding& bind, Model& model, const CorrespondenceData& data,
               const CorrespondenceItem& item, ad::BnMode mode, Var* p_out) {
  const auto& spec = model.spec;
  const auto cx = all_vertices(item.prepared.vertex_count());
  const auto cy = all_vertices(data.reference.prepared.vertex_count());
  Var fx = head_forward(bind, spec, backbone_forward(bind, model, item.prepared, cx, mode));
  Var fy = head_forward(bind, spec, backbone_forward(bind, model, data.reference.prepared, cy, mode));
  const FunctionalMap fm = functional_map(fx, fy, item.basis, data.reference.basis);
  Var p = soft_correspondence(fm.c, item.basis, data.reference.basis);
  if (p_out) *p_out = p;
  return fmnet_loss(p, data.reference_geodesics, item.truth);
}

double exact_rate(const MatchResult& r) {
  if (r.errors.empty()) return kNaN;
  return static_cast<double>(std::count(r.errors.begin(), r.errors.end(), 0.0)) /
         static_cast<double>(r.errors.size());
}

}  // namespace

MatchResult match_shape(const Model& model, const CorrespondenceData& data,
                        const CorrespondenceItem& item) {
  Model local = model;
  ad::Tape tape;
  Binding bind(tape, local.params, false);
  Var p;
  MatchResult r;
  r.loss = match_loss(bind, local, data, item, ad::BnMode::Eval, &p).value().item();
  r.matches = hard_matches(p.value());
  r.errors.resize(r.matches.size());
  for (std::size_t x = 0; x < r.matches.size(); ++x)
    r.errors[x] = data.reference_geodesics(r.matches[x], item.truth[x]);
  return r;
}

std::vector<CurvePoint> geodesic_error_curve(const std::vector<double>& errors, double max_radius,
                                             std::size_t steps) {
  if (steps == 0) throw ValidationError("error curve needs at least one step");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double r = max_radius * static_cast<double>(i) / static_cast<double>(steps);
    const auto within = std::upper_bound(sorted.begin(), sorted.end(), r) - sorted.begin();
    out.push_back({r, sorted.empty() ? 0.0
                                     : static_cast<double>(within) / static_cast<double>(sorted.size())});
  }
  return out;
}

TrainResult train_correspondence(const CorrespondenceData& data, const ModelSpec& spec,
                                 const TrainConfig& cfg, const Model* init) {
  spec.validate();
  if (spec.head != HeadKind::Correspondence)
    throw ValidationError("correspondence training needs a correspondence head");
  TrainResult res{init ? *init : Model::create(spec, cfg.seed), {}, {}};
  if (res.model.spec.hash() != spec.hash())
    throw ValidationError("initial model was built for a different spec");
  res.optimizer.config = cfg.adam;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < data.shapes.size(); ++i)
    (data.shapes[i].split == Split::Train ? train_idx : test_idx).push_back(i);

  auto evaluate = [&](EpochMetrics& m, bool with_loss) {
    std::vector<double> train, test, losses;
    for (std::size_t i : train_idx) {
      const MatchResult r = match_shape(res.model, data, data.shapes[i]);
      train.push_back(exact_rate(r));
      losses.push_back(r.loss);
    }
    for (std::size_t i : test_idx) test.push_back(exact_rate(match_shape(res.model, data, data.shapes[i])));
    m.train_accuracy = mean(train);
    m.test_accuracy = mean(test);
    if (with_loss) m.loss = mean(losses);
  };

  {
    EpochMetrics m;
    evaluate(m, true);
    res.report.epochs.push_back(m);
  }
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    for (std::size_t i : order) {
      const CorrespondenceItem& item = data.shapes[i];
      ad::Tape tape;
      Binding bind(tape, res.model.params, true);
      Var loss = match_loss(bind, res.model, data, item, ad::BnMode::Train, nullptr);
      const double value = loss.value().item();
      if (!std::isfinite(value))
        diverged(res.model, cfg, res.optimizer.step, item.name + ": loss is " + std::to_string(value));
      tape.backward(loss);
      update(res.model, bind.gradients(), res.optimizer, cfg, item.name);
      losses.push_back(value);
      if (cfg.max_steps && static_cast<std::size_t>(res.optimizer.step) >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.steps = static_cast<std::size_t>(res.optimizer.step);
    m.loss = mean(losses);
    if (cfg.eval_each_epoch || epoch == cfg.epochs || stop) evaluate(m, false);
    else m.train_accuracy = m.test_accuracy = kNaN;
    res.report.epochs.push_back(m);
  }

  std::vector<double> errors;
  for (std::size_t i : test_idx.empty() ? train_idx : test_idx) {
    const MatchResult r = match_shape(res.model, data, data.shapes[i]);
    errors.insert(errors.end(), r.errors.begin(), r.errors.end());
  }
  res.report.curve = geodesic_error_curve(errors, data.reference_geodesics.maxCoeff());
  return res;
}

void write_metrics_csv(const fs::path& path, const MetricsReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,steps,loss,train_accuracy,test_accuracy\n";
  for (const auto& m : report.epochs)
    out << m.epoch << ',' << m.steps << ',' << m.loss << ',' << m.train_accuracy << ','
        << m.test_accuracy << '\n';
  io::write_file_atomic(path, out.str());
}

void write_curve_csv(const fs::path& path, const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "radius,fraction\n";
  for (const auto& c : curve) out << c.radius << ',' << c.fraction << '\n';
  io::write_file_atomic(path, out.str());
}

}  // namespace lsd
