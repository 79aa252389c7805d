#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "commands.hpp"
#include "lsd/error.hpp"
#include "lsd/shapes.hpp"
#include "scratch_dir.hpp"

using namespace lsd;
using namespace lsd::cli;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json small_config(const ScratchDir& dir) {
  return json{{"data_root", (dir / "data").string()},
              {"cache", (dir / "cache").string()},
              {"out", (dir / "out").string()},
              {"preset", "toy"},
              {"seed", 3},
              {"generate", {{"train", 2}, {"test", 1}}},
              {"train", {{"epochs", 1}, {"points_per_mesh", 20}}}};
}

struct Outcome {
  ExitCode code;
  std::string out;
  std::string err;
};

Outcome run(ExitCode (*cmd)(const RunConfig&, std::ostream&), const json& j) {
  std::ostringstream out, err;
  const ExitCode code = guarded([&] { return cmd(config_from_json(j), out); }, err);
  return {code, out.str(), err.str()};
}

std::size_t count_of(const std::string& log, const std::string& word) {
  std::smatch m;
  if (!std::regex_search(log, m, std::regex("(\\d+) " + word))) return 999;
  return std::stoul(m[1]);
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const RunConfig d = config_from_json(json::object());
  EXPECT_EQ(d.preset, "standard");
  EXPECT_EQ(d.spec.layers.size(), 13u);
  EXPECT_EQ(d.checkpoint_path(), std::filesystem::path("out") / "model.ckpt");
  EXPECT_EQ(d.train_workers(), 1);

  const RunConfig c = config_from_json(
      json{{"preset", "toy"}, {"model", {{"conv", "pn"}, {"classes", 3}}}, {"train", {{"lr", 0.5}}}});
  EXPECT_EQ(c.spec.conv, ConvVariant::PN);
  EXPECT_EQ(c.spec.classes, 3u);
  EXPECT_EQ(c.spec.head_widths.back(), 3u);
  EXPECT_EQ(c.train.adam.lr, 0.5);
}

TEST(Config, RejectsUnknownKeysAndValues) {
  EXPECT_THROW(config_from_json(json{{"epochs", 3}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"train", {{"epoch", 3}}}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"task", "classify"}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"workers", 0}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"seed", "x"}}), ValidationError);
}

TEST(Cli, EmptyRootNamesManifest) {
  ScratchDir dir;
  const Outcome r = run(cmd_preprocess, small_config(dir));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find((dir / "data" / "manifest.json").string()), std::string::npos) << r.err;
}

TEST(Cli, PreprocessTwiceHitsCache) {
  ScratchDir dir;
  const json cfg = small_config(dir);
  ASSERT_EQ(run(cmd_generate, cfg).code, 0);
  const Outcome first = run(cmd_preprocess, cfg);
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_GT(count_of(first.out, "misses"), 0u);
  const Outcome second = run(cmd_preprocess, cfg);
  EXPECT_EQ(count_of(second.out, "misses"), 0u) << second.out;
  EXPECT_EQ(count_of(second.out, "hits"), count_of(first.out, "misses"));
}

TEST(Cli, CorruptCacheFileIsRebuilt) {
  ScratchDir dir;
  const json cfg = small_config(dir);
  ASSERT_EQ(run(cmd_generate, cfg).code, 0);
  ASSERT_EQ(run(cmd_preprocess, cfg).code, 0);
  std::filesystem::path victim;
  for (const auto& e : std::filesystem::directory_iterator(dir / "cache")) victim = e.path();
  std::string bytes = slurp(victim);
  const std::string original = bytes;
  bytes[bytes.size() / 2] ^= 0x40;
  std::ofstream(victim, std::ios::binary | std::ios::trunc) << bytes;
  const Outcome r = run(cmd_preprocess, cfg);
  EXPECT_EQ(count_of(r.out, "misses"), 1u) << r.out;
  EXPECT_EQ(count_of(r.out, "rebuilt"), 1u);
  EXPECT_EQ(slurp(victim), original);
}

TEST(Cli, TrainEvalAndHashMismatch) {
  ScratchDir dir;
  json cfg = small_config(dir);
  ASSERT_EQ(run(cmd_generate, cfg).code, 0);
  const Outcome t = run(cmd_train, cfg);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "model.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "metrics.csv"));
  const Outcome e = run(cmd_eval, cfg);
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "eval.csv"));

  const std::string trained_hash = [&] {
    std::ostringstream os;
    os << std::hex << config_from_json(cfg).spec.hash();
    return os.str();
  }();
  cfg["model"] = {{"base_width", 6}};
  const std::string other_hash = [&] {
    std::ostringstream os;
    os << std::hex << config_from_json(cfg).spec.hash();
    return os.str();
  }();
  const Outcome bad = run(cmd_eval, cfg);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find(trained_hash), std::string::npos) << bad.err;
  EXPECT_NE(bad.err.find(other_hash), std::string::npos) << bad.err;
}

TEST(Cli, ExportSingleMesh) {
  ScratchDir dir;
  json cfg = small_config(dir);
  ASSERT_EQ(run(cmd_generate, cfg).code, 0);
  ASSERT_EQ(run(cmd_train, cfg).code, 0);
  const TriMesh m = shapes::jittered(shapes::torus(1.0, 0.35, 10, 5), 0.02, 1);
  save_off(m, dir / "fifty.off");
  cfg["mesh"] = (dir / "fifty.off").string();
  const Outcome r = run(cmd_export_descriptors, cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  const ad::Tensor d = read_descriptors_binary(dir / "out" / "fifty.desc.bin");
  EXPECT_EQ(d.shape(), (ad::Shape{50, 8}));
  std::istringstream text(slurp(dir / "out" / "fifty.desc.txt"));
  std::size_t rows = 0, cols = 0;
  text >> rows >> cols;
  EXPECT_EQ(rows, 50u);
  EXPECT_EQ(cols, 8u);
  double first = 0.0;
  text >> first;
  EXPECT_EQ(first, d[0]);
}

TEST(Cli, GradcheckPasses) {
  const Outcome r = run(cmd_gradcheck, json{{"quick", true}});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, ErrorKindsMapToExitCodes) {
  std::ostringstream err;
  EXPECT_EQ(guarded([]() -> ExitCode { throw ValidationError("v"); }, err), 1);
  EXPECT_EQ(guarded([]() -> ExitCode { throw NumericalError("n"); }, err), 2);
  EXPECT_EQ(guarded([]() -> ExitCode { throw IoError("i"); }, err), 3);
  EXPECT_EQ(guarded([]() -> ExitCode { return 0; }, err), 0);
}
