#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

using lsd::cli::ExitCode;
using lsd::cli::RunConfig;

int main(int argc, char** argv) {
  CLI::App app{"Learned local shape descriptors on triangle meshes"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config, data_root, cache, checkpoint, out, task, conv, preset, mesh;
  std::uint64_t seed = 0;
  int workers = 0;
  std::size_t epochs = 0, train_count = 0, test_count = 0;
  bool quick = false;
  std::map<std::string, bool> ablate{{"use_normals", false}, {"use_geodesic", false},
                                     {"use_lrf", false},     {"propagate_features", false},
                                     {"use_coords", false}};

  app.add_option("--config", config, "JSON config; command-line flags override it");
  app.add_option("--data-root", data_root, "Dataset directory holding manifest.json");
  app.add_option("--cache", cache, "Preprocessing cache directory");
  app.add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/model.ckpt)");
  app.add_option("--out", out, "Output directory");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--task", task, "seg or match")->check(CLI::IsMember({"seg", "match"}));
  app.add_option("--conv", conv, "cc or pn")->check(CLI::IsMember({"cc", "pn"}));
  app.add_option("--preset", preset, "standard or toy")->check(CLI::IsMember({"standard", "toy"}));
  app.add_option("--epochs", epochs, "Training epochs");
  app.add_option("--mesh", mesh, "Single mesh for export-descriptors");
  app.add_option("--train-count", train_count, "Training shapes for generate");
  app.add_option("--test-count", test_count, "Test shapes for generate");
  app.add_flag("--quick", quick, "Fewer trials in gradcheck and selftest");
  app.add_flag("--no-normals", ablate["use_normals"], "Zero the neighbor normal channel");
  app.add_flag("--no-geodesic", ablate["use_geodesic"], "Zero the geodesic distance channel");
  app.add_flag("--no-lrf", ablate["use_lrf"], "Use world axes instead of local frames");
  app.add_flag("--no-feature-prop", ablate["propagate_features"], "Do not feed features between layers");
  app.add_flag("--no-coords", ablate["use_coords"], "Zero the neighbor coordinate channel");

  const std::map<std::string, ExitCode (*)(const RunConfig&, std::ostream&)> commands{
      {"generate", lsd::cli::cmd_generate},
      {"preprocess", lsd::cli::cmd_preprocess},
      {"train", lsd::cli::cmd_train},
      {"eval", lsd::cli::cmd_eval},
      {"export-descriptors", lsd::cli::cmd_export_descriptors},
      {"gradcheck", lsd::cli::cmd_gradcheck},
      {"selftest", lsd::cli::cmd_selftest},
  };
  const std::map<std::string, std::string> help{
      {"generate", "Write a synthetic dataset to --data-root"},
      {"preprocess", "Fill the cache with patch tables, bases and distances"},
      {"train", "Train and write a checkpoint plus metrics CSVs"},
      {"eval", "Evaluate a checkpoint on the dataset"},
      {"export-descriptors", "Write per-vertex descriptors for each mesh"},
      {"gradcheck", "Finite-difference and invariance suites"},
      {"selftest", "Every property suite plus round-trip checks"},
  };
  for (const auto& [name, text] : help) app.add_subcommand(name, text);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  return lsd::cli::guarded(
      [&]() -> ExitCode {
        nlohmann::json j = config.empty() ? nlohmann::json::object() : lsd::cli::read_config_file(config);
        auto set = [&](const char* flag, const char* key, auto value) {
          if (app.count(flag) > 0) j[key] = value;
        };
        set("--data-root", "data_root", data_root);
        set("--cache", "cache", cache);
        set("--checkpoint", "checkpoint", checkpoint);
        set("--out", "out", out);
        set("--seed", "seed", seed);
        set("--workers", "workers", workers);
        set("--task", "task", task);
        set("--preset", "preset", preset);
        set("--mesh", "mesh", mesh);
        set("--quick", "quick", quick);
        if (app.count("--conv") > 0) j["model"]["conv"] = conv;
        if (app.count("--epochs") > 0) j["train"]["epochs"] = epochs;
        if (app.count("--train-count") > 0) j["generate"]["train"] = train_count;
        if (app.count("--test-count") > 0) j["generate"]["test"] = test_count;
        for (const auto& [key, off] : ablate)
          if (off) j["model"]["ablation"][key] = false;

        const RunConfig cfg = lsd::cli::config_from_json(j);
        const std::string name = app.get_subcommands().front()->get_name();
        return commands.at(name)(cfg, std::cout);
      },
      std::cerr);
}
