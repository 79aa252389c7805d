#include "commands.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "lsd/binary_io.hpp"
#include "lsd/cache.hpp"
#include "lsd/error.hpp"
#include "lsd/optim.hpp"
#include "lsd/parallel.hpp"
#include "lsd/shapes.hpp"
#include "lsd/synthetic.hpp"
#include "lsd/verify/suites.hpp"

namespace lsd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kDescriptorMagic[8] = {'L', 'S', 'D', 'D', 'E', 'S', 'C', '\0'};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

HeadKind head_of(Task t) {
  return t == Task::Segmentation ? HeadKind::Segmentation : HeadKind::Correspondence;
}

std::unique_ptr<CacheStore> open_store(const RunConfig& cfg) {
  if (!cfg.cache) return nullptr;
  return std::make_unique<CacheStore>(*cfg.cache);
}

std::vector<LabeledShape> load_shapes(const RunConfig& cfg) {
  return load_dataset(cfg.data_root, cfg.manifest);
}

LabeledShape load_reference_or_fail(const RunConfig& cfg) {
  auto ref = load_reference(cfg.data_root, cfg.manifest);
  if (!ref)
    throw ValidationError((cfg.data_root / cfg.manifest).string() +
                          ": matching needs a 'reference' entry");
  return std::move(*ref);
}

Model load_model(const RunConfig& cfg, std::int64_t* step = nullptr) {
  const fs::path path = cfg.checkpoint_path();
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const ad::Checkpoint ck = ad::load_checkpoint(path);
  const std::uint64_t want = cfg.spec.hash();
  if (ck.spec_hash != want)
    throw ValidationError("checkpoint " + path.string() + " was written for spec hash " +
                          hex(ck.spec_hash) + " but the configured spec hash is " + hex(want));
  Model m = Model::create(cfg.spec, cfg.seed);
  m.load_state(ck.tensors);
  if (step) *step = ck.step;
  return m;
}

void save_model(const RunConfig& cfg, const Model& model, std::int64_t step) {
  ad::save_checkpoint({cfg.spec.hash(), step, model.state()}, cfg.checkpoint_path());
  io::write_file_atomic(cfg.out / "spec.json", cfg.spec.to_json().dump(2) + "\n");
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void log_cache(std::ostream& log, const CacheStore* store) {
  if (!store) return;
  log << "cache " << store->root().string() << ": " << store->hits() << " hits, "
      << store->misses() << " misses, " << store->rebuilt() << " rebuilt\n";
}

void log_suite(std::ostream& log, const verify::SuiteResult& r) {
  log << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << fixed(r.seconds, 2) << " s): " << r.detail
      << "\n";
}

}  // namespace

int RunConfig::preprocess_workers() const { return workers.value_or(default_workers()); }

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  reject_unknown(j,
                 {"data_root", "manifest", "cache", "checkpoint", "out", "mesh", "seed", "workers",
                  "task", "preset", "quick", "generate", "model", "train"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
    if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
    if (j.contains("cache")) c.cache = fs::path(j["cache"].get<std::string>());
    if (j.contains("checkpoint")) c.checkpoint = fs::path(j["checkpoint"].get<std::string>());
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("mesh")) c.mesh = fs::path(j["mesh"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("workers")) {
      const int w = j["workers"].get<int>();
      if (w < 1) throw ValidationError("config: workers must be at least 1");
      c.workers = w;
    }
    const std::string task = j.value("task", std::string("seg"));
    if (task == "seg") c.task = Task::Segmentation;
    else if (task == "match") c.task = Task::Matching;
    else throw ValidationError("config: task must be 'seg' or 'match', got '" + task + "'");
    c.preset = j.value("preset", c.preset);
    c.quick = j.value("quick", false);

    ModelSpec base;
    if (c.preset == "standard") base = ModelSpec::standard(head_of(c.task));
    else if (c.preset == "toy") base = ModelSpec::toy(head_of(c.task));
    else throw ValidationError("config: preset must be 'standard' or 'toy', got '" + c.preset + "'");
    json model = base.to_json();
    if (j.contains("model")) {
      const json& m = j["model"];
      if (!m.is_object()) throw ValidationError("config: 'model' must be an object");
      model.merge_patch(m);
      // A new class count without explicit head widths resizes the last
      // segmentation block.
      if (c.task == Task::Segmentation && m.contains("classes") && !m.contains("head_widths") &&
          !model["head_widths"].empty())
        model["head_widths"].back() = m["classes"];
    }
    c.spec = ModelSpec::from_json(model);
    c.spec.validate();

    c.train.seed = c.seed;
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown(t, {"epochs", "points_per_mesh", "lr", "max_steps", "spectral_k", "eval_each_epoch"},
                     "config.train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.points_per_mesh = t.value("points_per_mesh", c.train.points_per_mesh);
      c.train.adam.lr = t.value("lr", c.train.adam.lr);
      c.train.max_steps = t.value("max_steps", c.train.max_steps);
      c.train.spectral_k = t.value("spectral_k", c.train.spectral_k);
      c.train.eval_each_epoch = t.value("eval_each_epoch", c.train.eval_each_epoch);
    }
    c.train.workers = c.train_workers();
    if (j.contains("generate")) {
      const json& g = j["generate"];
      reject_unknown(g, {"train", "test"}, "config.generate");
      c.train_count = g.value("train", c.train_count);
      c.test_count = g.value("test", c.test_count);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

json read_config_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---- Descriptor files

void write_descriptors_text(const fs::path& path, const ad::Tensor& d) {
  std::ostringstream out;
  out.precision(17);
  out << d.rows() << ' ' << d.cols() << '\n';
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) out << (c ? " " : "") << d.at(r, c);
    out << '\n';
  }
  io::write_file_atomic(path, out.str());
}

void write_descriptors_binary(const fs::path& path, const ad::Tensor& d) {
  io::Writer w;
  w.put_array(kDescriptorMagic, 8);
  w.put(static_cast<std::uint64_t>(d.rows()));
  w.put(static_cast<std::uint64_t>(d.cols()));
  w.put_array(d.data(), d.size());
  io::write_file_atomic(path, w.bytes());
}

ad::Tensor read_descriptors_binary(const fs::path& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, path.string());
  if (r.get_bytes(8) != std::string_view(kDescriptorMagic, 8))
    throw ValidationError(path.string() + ": not a descriptor file");
  const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
  if (r.remaining() != rows * cols * sizeof(double))
    throw ValidationError(path.string() + ": size does not match " + std::to_string(rows) + " x " +
                          std::to_string(cols));
  ad::Tensor t({rows, cols});
  r.get_array(t.data(), t.size());
  return t;
}

// ---- Commands

ExitCode cmd_generate(const RunConfig& cfg, std::ostream& log) {
  if (cfg.task == Task::Segmentation) {
    const auto shapes = synthetic::articulated_set(cfg.train_count, cfg.test_count, cfg.seed);
    save_dataset(cfg.data_root, shapes);
    log << "wrote " << shapes.size() << " articulated shapes (" << synthetic::kArticulatedClasses
        << " classes) to " << cfg.data_root.string() << "\n";
  } else {
    synthetic::ArticulatedOptions opts;
    opts.rotate = false;
    opts.around = 10;
    opts.rings = 18;
    const TriMesh ref = synthetic::articulated("reference", cfg.seed, opts).mesh;
    const synthetic::MatchingSet set = synthetic::matching_set(ref, cfg.train_count, cfg.test_count, cfg.seed);
    save_dataset(cfg.data_root, set.shapes, &set.reference);
    log << "wrote a reference and " << set.shapes.size() << " deformed copies ("
        << ref.vertex_count() << " vertices) to " << cfg.data_root.string() << "\n";
  }
  return 0;
}

ExitCode cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
  if (!cfg.cache) throw ValidationError("preprocess needs a cache directory (--cache)");
  CacheStore store(*cfg.cache);
  const auto shapes = load_shapes(cfg);
  if (cfg.task == Task::Segmentation) {
    prepare_segmentation(shapes, cfg.spec, &store, cfg.preprocess_workers());
  } else {
    prepare_correspondence(shapes, load_reference_or_fail(cfg), cfg.spec, cfg.train.spectral_k, &store,
                           cfg.preprocess_workers());
  }
  log << "preprocessed " << shapes.size() << " meshes\n";
  log_cache(log, &store);
  return 0;
}

ExitCode cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto store = open_store(cfg);
  const auto shapes = load_shapes(cfg);
  TrainConfig tc = cfg.train;
  tc.divergence_checkpoint = cfg.out / "diverged.ckpt";
  TrainResult res = [&] {
    if (cfg.task == Task::Segmentation) {
      const auto data = prepare_segmentation(shapes, cfg.spec, store.get(), cfg.preprocess_workers());
      log_cache(log, store.get());
      return train_segmentation(data, cfg.spec, tc);
    }
    const auto data = prepare_correspondence(shapes, load_reference_or_fail(cfg), cfg.spec,
                                             tc.spectral_k, store.get(), cfg.preprocess_workers());
    log_cache(log, store.get());
    return train_correspondence(data, cfg.spec, tc);
  }();
  save_model(cfg, res.model, res.optimizer.step);
  write_metrics_csv(cfg.out / "metrics.csv", res.report);
  if (!res.report.curve.empty()) write_curve_csv(cfg.out / "curve.csv", res.report.curve);
  const EpochMetrics& last = res.report.epochs.back();
  log << "trained " << last.steps << " steps: loss " << last.loss << ", train accuracy "
      << fixed(last.train_accuracy) << ", test accuracy " << fixed(last.test_accuracy) << "\n"
      << "checkpoint " << cfg.checkpoint_path().string() << " (spec hash " << hex(cfg.spec.hash())
      << ")\n";
  return 0;
}

ExitCode cmd_eval(const RunConfig& cfg, std::ostream& log) {
  std::int64_t step = 0;
  const Model model = load_model(cfg, &step);
  const auto store = open_store(cfg);
  const auto shapes = load_shapes(cfg);
  std::ostringstream table;
  table.precision(17);
  MetricsReport report;
  EpochMetrics row;
  row.steps = static_cast<std::size_t>(step);
  double correct[2] = {0, 0}, total[2] = {0, 0}, loss_sum = 0.0, loss_n = 0.0;

  if (cfg.task == Task::Segmentation) {
    table << "name,split,accuracy,loss\n";
    const auto data = prepare_segmentation(shapes, cfg.spec, store.get(), cfg.preprocess_workers());
    for (const auto& item : data) {
      const auto all = all_vertices(item.prepared.vertex_count());
      const ad::Tensor probs = compute_outputs(model, item.prepared, all);
      double hits = 0.0, nll = 0.0;
      for (std::size_t v = 0; v < probs.rows(); ++v) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
          if (probs.at(v, c) > probs.at(v, best)) best = c;
        const auto label = static_cast<std::size_t>(item.labels[v]);
        hits += best == label ? 1.0 : 0.0;
        nll -= std::log(std::max(probs.at(v, label), 1e-300));
      }
      const int s = item.split == Split::Test ? 1 : 0;
      correct[s] += hits;
      total[s] += static_cast<double>(probs.rows());
      loss_sum += nll;
      loss_n += static_cast<double>(probs.rows());
      table << item.name << ',' << (s ? "test" : "train") << ',' << hits / static_cast<double>(probs.rows())
            << ',' << nll / static_cast<double>(probs.rows()) << '\n';
    }
  } else {
    table << "name,split,exact,mean_error,loss\n";
    const auto data = prepare_correspondence(shapes, load_reference_or_fail(cfg), cfg.spec,
                                             cfg.train.spectral_k, store.get(), cfg.preprocess_workers());
    bool any_test = false;
    for (const auto& item : data.shapes) any_test = any_test || item.split == Split::Test;
    std::vector<double> curve_errors;
    for (const auto& item : data.shapes) {
      const MatchResult m = match_shape(model, data, item);
      double exact = 0.0, err = 0.0;
      for (std::size_t v = 0; v < m.matches.size(); ++v) {
        exact += m.matches[v] == item.truth[v] ? 1.0 : 0.0;
        err += m.errors[v];
      }
      const int s = item.split == Split::Test ? 1 : 0;
      correct[s] += exact;
      total[s] += static_cast<double>(m.matches.size());
      loss_sum += m.loss;
      loss_n += 1.0;
      if (s == 1 || !any_test) curve_errors.insert(curve_errors.end(), m.errors.begin(), m.errors.end());
      const auto n = static_cast<double>(m.matches.size());
      table << item.name << ',' << (s ? "test" : "train") << ',' << exact / n << ',' << err / n << ','
            << m.loss << '\n';
    }
    report.curve = geodesic_error_curve(curve_errors, data.reference_geodesics.maxCoeff());
    write_curve_csv(cfg.out / "eval_curve.csv", report.curve);
  }
  const double nan = std::nan("");
  row.loss = loss_n > 0 ? loss_sum / loss_n : nan;
  row.train_accuracy = total[0] > 0 ? correct[0] / total[0] : nan;
  row.test_accuracy = total[1] > 0 ? correct[1] / total[1] : nan;
  report.epochs.push_back(row);
  io::write_file_atomic(cfg.out / "eval.csv", table.str());
  write_metrics_csv(cfg.out / "eval_metrics.csv", report);
  log << "evaluated " << shapes.size() << " shapes: loss " << row.loss << ", train accuracy "
      << fixed(row.train_accuracy) << ", test accuracy " << fixed(row.test_accuracy) << "\n";
  return 0;
}

ExitCode cmd_export_descriptors(const RunConfig& cfg, std::ostream& log) {
  const Model model = load_model(cfg);
  std::vector<std::pair<std::string, TriMesh>> meshes;
  if (cfg.mesh) {
    meshes.emplace_back(cfg.mesh->stem().string(), load_mesh(*cfg.mesh));
  } else {
    for (auto& s : load_shapes(cfg)) meshes.emplace_back(s.name, std::move(s.mesh));
  }
  const auto store = open_store(cfg);
  for (auto& [name, mesh] : meshes) {
    // Matching models saw unit-area meshes during training.
    TriMesh m = cfg.task == Task::Matching ? unit_area(mesh) : mesh;
    const PreparedMesh prepared = prepare_mesh_cached(with_geometry(m), cfg.spec, store.get(),
                                                      cfg.preprocess_workers());
    const ad::Tensor d = compute_descriptors(model, prepared, all_vertices(prepared.vertex_count()));
    write_descriptors_text(cfg.out / (name + ".desc.txt"), d);
    write_descriptors_binary(cfg.out / (name + ".desc.bin"), d);
    log << name << ": " << d.rows() << " x " << d.cols() << " descriptors\n";
  }
  return 0;
}

ExitCode cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  verify::SuiteOptions o{cfg.seed, cfg.quick};
  bool ok = true;
  for (const auto& r : {verify::gradient_suite(o), verify::rotation_suite(o), verify::lrf_suite(o)}) {
    log_suite(log, r);
    ok = ok && r.passed;
  }
  return ok ? 0 : 2;
}

namespace {

struct Check {
  std::string name;
  bool passed;
  std::string detail;
};

std::vector<Check> round_trip_checks(std::uint64_t seed) {
  std::vector<Check> out;
  const fs::path dir = fs::temp_directory_path() /
                       ("lsd-selftest-" + hex(std::random_device{}()) + hex(seed));
  fs::create_directories(dir);

  const ModelSpec spec = ModelSpec::toy(HeadKind::Segmentation, 2, 8, 6);
  const Model model = Model::create(spec, seed);
  {
    const std::string a = ad::encode_checkpoint({spec.hash(), 7, model.state()});
    const std::string b = ad::encode_checkpoint(ad::decode_checkpoint(a));
    out.push_back({"checkpoint round trip", a == b, std::to_string(a.size()) + " bytes"});
  }

  const TriMesh mesh = with_geometry(shapes::torus(1.0, 0.3, 10, 5));
  {
    CacheStore first(dir / "cache");
    const PreparedMesh p1 = prepare_mesh_cached(mesh, spec, &first);
    CacheStore second(dir / "cache");
    const PreparedMesh p2 = prepare_mesh_cached(mesh, spec, &second);
    bool same = p1.tables.size() == p2.tables.size();
    for (std::size_t i = 0; same && i < p1.tables.size(); ++i)
      same = p1.tables[i].members == p2.tables[i].members && p1.tables[i].coords == p2.tables[i].coords;
    out.push_back({"cache idempotence", same && second.misses() == 0 && second.hits() == first.misses(),
                   std::to_string(second.hits()) + " hits, " + std::to_string(second.misses()) +
                       " misses on the second run"});
  }
  {
    const ad::Tensor d = compute_descriptors(model, prepare_mesh(mesh, spec),
                                             all_vertices(static_cast<std::size_t>(mesh.vertex_count())));
    write_descriptors_binary(dir / "d.bin", d);
    const ad::Tensor back = read_descriptors_binary(dir / "d.bin");
    out.push_back({"descriptor export shape",
                   d.rows() == 50 && d.cols() == 8 && back == d,
                   std::to_string(d.rows()) + " x " + std::to_string(d.cols())});
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return out;
}

}  // namespace

ExitCode cmd_selftest(const RunConfig& cfg, std::ostream& log) {
  verify::SuiteOptions o{cfg.seed, cfg.quick};
  bool ok = true;
  for (const auto& r : verify::run_all_suites(o)) {
    log_suite(log, r);
    ok = ok && r.passed;
  }
  for (const Check& c : round_trip_checks(cfg.seed)) {
    log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    ok = ok && c.passed;
  }
  return ok ? 0 : 2;
}

ExitCode guarded(const std::function<ExitCode()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Validation);
  }
}

}  // namespace lsd::cli
