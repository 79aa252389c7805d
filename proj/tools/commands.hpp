#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "lsd/netarch.hpp"
#include "lsd/train.hpp"

namespace lsd::cli {

enum class Task { Segmentation, Matching };

/// Everything a command needs. Built from defaults, then the JSON config
/// file, then command-line flags, each layer overriding the previous one.
struct RunConfig {
  std::filesystem::path data_root = ".";
  std::filesystem::path manifest = "manifest.json";
  std::optional<std::filesystem::path> cache;
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  /// Unset: all cores for preprocessing, one for training.
  std::optional<int> workers;
  Task task = Task::Segmentation;
  std::string preset = "standard";
  ModelSpec spec;
  TrainConfig train;
  /// Single mesh for export-descriptors instead of the dataset.
  std::optional<std::filesystem::path> mesh;
  /// Shape counts for `generate`.
  std::size_t train_count = 6;
  std::size_t test_count = 4;
  /// Fewer trials in gradcheck and selftest.
  bool quick = false;

  int preprocess_workers() const;
  int train_workers() const { return workers.value_or(1); }
  std::filesystem::path checkpoint_path() const { return checkpoint.value_or(out / "model.ckpt"); }
};

/// Config keys: data_root, manifest, cache, checkpoint, out, mesh, seed,
/// workers, task ("seg" | "match"), preset ("standard" | "toy"), quick,
/// generate {train, test}, model {ModelSpec keys, merged over the preset},
/// train {epochs, points_per_mesh, lr, max_steps, spectral_k,
/// eval_each_epoch}. Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Result of a command: the process exit code (0 ok, 1 validation,
/// 2 numerical or failed check, 3 I/O).
using ExitCode = int;

ExitCode cmd_generate(const RunConfig& cfg, std::ostream& log);
ExitCode cmd_preprocess(const RunConfig& cfg, std::ostream& log);
ExitCode cmd_train(const RunConfig& cfg, std::ostream& log);
ExitCode cmd_eval(const RunConfig& cfg, std::ostream& log);
ExitCode cmd_export_descriptors(const RunConfig& cfg, std::ostream& log);
ExitCode cmd_gradcheck(const RunConfig& cfg, std::ostream& log);
ExitCode cmd_selftest(const RunConfig& cfg, std::ostream& log);

/// Descriptor files: "N width" then one row per vertex, and a binary twin
/// (magic, u64 N, u64 width, little-endian doubles).
void write_descriptors_text(const std::filesystem::path& path, const ad::Tensor& d);
void write_descriptors_binary(const std::filesystem::path& path, const ad::Tensor& d);
ad::Tensor read_descriptors_binary(const std::filesystem::path& path);

/// Runs `body`, mapping library errors to exit codes and printing them.
ExitCode guarded(const std::function<ExitCode()>& body, std::ostream& err);

}  // namespace lsd::cli
