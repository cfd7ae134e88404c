#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dhmp/cli.hpp"
#include "dhmp/io.hpp"

using namespace dhmp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dhmp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "dhmp_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    const json config = {
        {"dataset", {{"train", 2}, {"val", 1}, {"test", 1}, {"ood", 1}, {"mesh_min", 4},
                     {"mesh_max", 5}, {"ood_size", 6}, {"steps", 4}}},
        {"model", {{"latent", 4}, {"hidden", 4}, {"flat_passes", 2}}},
        {"train", {{"total_steps", 3}, {"eval_interval", 0}, {"checkpoint_interval", 0}}}};
    io::write_file(config_path(), config.dump());
    auto r = run_cli({"gen-data", "--config", config_path(), "--seed", "4", "--out", data_dir()});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run_cli({"train", "--config", config_path(), "--data", data_dir(), "--out",
                 train_dir(), "--seed", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string config_path() { return (root_ / "config.json").string(); }
  static std::string data_dir() { return (root_ / "data").string(); }
  static std::string train_dir() { return (root_ / "train").string(); }
  static std::string checkpoint() { return (root_ / "train" / "final").string(); }
  static std::string fresh(const std::string& name) {
    fs::remove_all(root_ / name);
    return (root_ / name).string();
  }

  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST(CliBasics, VersionAndUsageErrors) {
  auto v = run_cli({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("dhmp"), std::string::npos);
  EXPECT_EQ(run_cli({}).code, cli::kUserError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUserError);
  EXPECT_EQ(run_cli({"gen-data", "--bogus"}).code, cli::kUserError);
  EXPECT_EQ(cli::kIoError, 3);
  EXPECT_EQ(cli::kNumericError, 4);
}

TEST_F(CliTest, MissingConfigIsAUserError) {
  auto r = run_cli({"gen-data", "--config", (root_ / "nope.json").string(), "--out",
                    fresh("nocfg")});
  EXPECT_EQ(r.code, cli::kUserError);
  EXPECT_NE(r.err.find("config file not found"), std::string::npos);
  io::write_file(root_ / "badsection.json", R"({"optimizer": {}})");
  EXPECT_EQ(run_cli({"gen-data", "--config", (root_ / "badsection.json").string(), "--out",
                     fresh("badsec")}).code,
            cli::kUserError);
}

TEST_F(CliTest, GenDataWritesManifestsAndIsSeedDeterministic) {
  const auto m = read_json(fs::path(data_dir()) / "run_manifest.json");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_TRUE(m["artifacts"].contains("manifest.json"));
  EXPECT_EQ(m["seeds"]["seed"], 4);

  const auto again = fresh("data_again");
  ASSERT_EQ(run_cli({"gen-data", "--config", config_path(), "--seed", "4", "--out", again}).code, 0);
  EXPECT_EQ(io::sha256_file(fs::path(again) / "manifest.json"),
            io::sha256_file(fs::path(data_dir()) / "manifest.json"));
  const auto other = fresh("data_other");
  ASSERT_EQ(run_cli({"gen-data", "--config", config_path(), "--seed", "5", "--out", other}).code, 0);
  EXPECT_NE(io::sha256_file(fs::path(other) / "manifest.json"),
            io::sha256_file(fs::path(data_dir()) / "manifest.json"));
}

TEST_F(CliTest, NonEmptyOutputNeedsForce) {
  const auto dir = fresh("forced");
  ASSERT_EQ(run_cli({"gen-data", "--config", config_path(), "--out", dir}).code, 0);
  io::write_file(fs::path(dir) / "keep.txt", "mine");
  auto r = run_cli({"gen-data", "--config", config_path(), "--out", dir});
  EXPECT_EQ(r.code, cli::kUserError);
  EXPECT_NE(r.err.find("--force"), std::string::npos);
  EXPECT_EQ(run_cli({"gen-data", "--config", config_path(), "--out", dir, "--force"}).code, 0);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "keep.txt"));
}

TEST_F(CliTest, TrainWritesCheckpointAndMetrics) {
  EXPECT_TRUE(fs::exists(checkpoint() + ".json"));
  EXPECT_TRUE(fs::exists(checkpoint() + ".bin"));
  EXPECT_TRUE(fs::exists(fs::path(train_dir()) / "metrics.jsonl"));
  const auto m = read_json(fs::path(train_dir()) / "run_manifest.json");
  EXPECT_EQ(m["config"]["model"]["latent"], 4);
  EXPECT_TRUE(m["artifacts"].contains("final.bin"));
}

TEST_F(CliTest, ResumeRejectsOverrides) {
  auto r = run_cli({"train", "--data", data_dir(), "--resume", checkpoint(), "--steps", "9",
                    "--out", fresh("resume_bad")});
  EXPECT_EQ(r.code, cli::kUserError);
  EXPECT_EQ(run_cli({"train", "--data", data_dir(), "--resume", checkpoint(), "--out",
                     fresh("resume_ok")}).code,
            0);
}

TEST_F(CliTest, EvalReportsFiniteMetrics) {
  const auto dir = fresh("eval");
  auto r = run_cli({"eval", "--checkpoint", checkpoint(), "--data", data_dir(), "--repeats",
                    "2", "--horizon", "3", "--out", dir});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_json(fs::path(dir) / "report.json");
  EXPECT_EQ(rep["summary"]["repeats"], 2);
  EXPECT_TRUE(std::isfinite(rep["summary"]["rmse_1_mean"].get<double>()));
  EXPECT_EQ(rep["horizon"], 3);
  const auto ood = fresh("eval_ood");
  EXPECT_EQ(run_cli({"eval", "--checkpoint", checkpoint(), "--data", data_dir(), "--ood",
                     "--out", ood}).code,
            0);
  EXPECT_EQ(read_json(fs::path(ood) / "report.json")["split"], "ood");
}

TEST_F(CliTest, ErrorsMapToExitCodes) {
  auto r = run_cli({"eval", "--checkpoint", checkpoint(), "--data",
                    (root_ / "missing").string(), "--out", fresh("e1")});
  EXPECT_EQ(r.code, cli::kIoError);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", checkpoint(), "--data", data_dir(), "--split",
                     "nope", "--out", fresh("e2")}).code,
            cli::kUserError);
  EXPECT_EQ(run_cli({"ksweep", "--data", data_dir(), "--ks", "1,5", "--out", fresh("e3")}).code,
            cli::kUserError);
  EXPECT_EQ(run_cli({"train", "--data", data_dir(), "--variant", "M9", "--out", fresh("e4")}).code,
            cli::kUserError);

  // A checkpoint trained on another task cannot evaluate this dataset.
  const json diff = {{"dataset", {{"task", "diffusion"}, {"train", 1}, {"val", 1}, {"test", 1},
                                  {"ood", 1}, {"mesh_min", 4}, {"mesh_max", 4}, {"ood_size", 5},
                                  {"steps", 3}}}};
  io::write_file(root_ / "diff.json", diff.dump());
  const auto ddir = fresh("diffdata");
  ASSERT_EQ(run_cli({"gen-data", "--config", (root_ / "diff.json").string(), "--out", ddir}).code, 0);
  auto mismatch = run_cli({"eval", "--checkpoint", checkpoint(), "--data", ddir, "--out", fresh("e5")});
  EXPECT_EQ(mismatch.code, cli::kUserError);
  // Rejected before any output is written.
  EXPECT_FALSE(fs::exists(root_ / "e5"));
  // A failure after the output directory is prepared is recorded.
  const auto failed = read_json(fs::path(root_ / "e2") / "run_manifest.json");
  EXPECT_EQ(failed["status"], "failed");
}

TEST_F(CliTest, AblateAndExport) {
  const auto dir = fresh("ablate");
  auto r = run_cli({"ablate", "--config", config_path(), "--data", data_dir(), "--variants",
                    "DHMP,FLAT", "--seeds", "2", "--steps", "2", "--horizon", "2", "--out", dir});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = io::read_file(fs::path(dir) / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  const auto ex = fresh("export");
  r = run_cli({"export", "--checkpoint", checkpoint(), "--data", data_dir(), "--trajectory",
               "test_0000", "--steps", "0,2", "--out", ex});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"nodes_t0.csv", "edges_t2.csv", "hierarchy_level3_t0.csv",
                        "challenging_nodes_t2.csv", "export_summary.json", "README.md"}) {
    EXPECT_TRUE(fs::exists(fs::path(ex) / f)) << f;
  }
  EXPECT_EQ(run_cli({"export", "--checkpoint", checkpoint(), "--data", data_dir(),
                     "--trajectory", "test_0099", "--out", fresh("ex_bad")}).code,
            cli::kUserError);
}
