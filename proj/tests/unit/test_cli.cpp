#include <gtest/gtest.h>

#include <filesystem>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "hcd/binary_io.hpp"
#include "hcd/raster.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = hcd::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  const auto b = hcd::read_file(p);
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("hcd_cli_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path synth(const std::string& style = "optical") {
    const auto out = dir_ / ("synth_" + style);
    const auto r = cli({"synth", "--out", out.string(), "--style", style});
    EXPECT_EQ(r.code, 0) << r.err;
    return out;
  }

  fs::path dir_;
};

TEST_F(Cli, SynthWritesArtifactsAndRunConfig) {
  const auto s = synth();
  for (const char* f : {"x.hcdr", "y.hcdr", "change.hcdr", "unchanged.hcdr", "train_mask.hcdr", "run.json",
                        "x.pgm", "change.pgm"}) {
    EXPECT_TRUE(fs::exists(s / f)) << f;
  }
  const auto train = hcd::read_mask(s / "train_mask.hcdr");
  EXPECT_EQ(train.count(), 82u);  // ceil(0.02 * 64 * 64)
}

TEST_F(Cli, RunRandomForestOnSynthDefaults) {
  const auto s = synth();
  const auto out = dir_ / "run";
  const auto r = cli({"run", "--config", (s / "run.json").string(), "--method", "rf", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("AUC: ([0-9.]+)")));
  EXPECT_GE(std::stod(m[1]), 0.90);
  for (const char* f : {"score.hcdr", "change_map.hcdr", "fused.pgm", "distance_x.hcdr", "y_hat.hcdr",
                        "result.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto j = nlohmann::json::parse(slurp(out / "result.json"));
  EXPECT_EQ(j.at("method"), "rf");
  EXPECT_TRUE(j.contains("auc"));
  EXPECT_TRUE(j.at("timings").contains("total_s"));
  EXPECT_EQ(j.at("config").at("method"), "rf");
}

TEST_F(Cli, RunWithoutGroundTruthOmitsAuc) {
  const auto s = synth();
  auto cfg = nlohmann::json::parse(slurp(s / "run.json"));
  cfg.erase("ground_truth");
  hcd::write_file_atomic(s / "nogt.json", cfg.dump());
  const auto out = dir_ / "run";
  const auto r = cli({"run", "--config", (s / "nogt.json").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.find("AUC"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "score.hcdr"));
  EXPECT_FALSE(nlohmann::json::parse(slurp(out / "result.json")).contains("auc"));
}

TEST_F(Cli, FlagsOverrideConfig) {
  const auto s = synth();
  auto cfg = nlohmann::json::parse(slurp(s / "run.json"));
  cfg["threshold"] = 0.9;
  cfg["method"] = "hpt";
  hcd::write_file_atomic(s / "c.json", cfg.dump());
  const auto out = dir_ / "run";
  const auto r = cli({"run", "--config", (s / "c.json").string(), "--method", "rf", "--threshold", "0.25",
                      "--no-median", "--clip-sigma", "3", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out / "result.json"));
  EXPECT_EQ(j.at("method"), "rf");
  EXPECT_EQ(j.at("threshold"), 0.25);
  EXPECT_EQ(j.at("config").at("median_filter"), false);
  EXPECT_EQ(j.at("config").at("clip_sigma"), 3.0);
}

TEST_F(Cli, EvalSingleRunHasZeroStd) {
  const auto s = synth();
  const auto out = dir_ / "eval";
  const auto r = cli({"eval", "--config", (s / "run.json").string(), "--runs", "1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto line = slurp(out / "records.jsonl");
  const auto j = nlohmann::json::parse(line.substr(0, line.find('\n')));
  EXPECT_EQ(j.at("auc_std"), 0.0);
  EXPECT_EQ(j.at("runs"), 1);
  const auto csv = slurp(out / "benchmark.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST_F(Cli, GridWritesTableAndBest) {
  const auto s = synth();
  auto cfg = nlohmann::json::parse(slurp(s / "run.json"));
  cfg["grid"] = {{"trees", {8, 16}}, {"min_leaf", {1, 5}}};
  hcd::write_file_atomic(s / "g.json", cfg.dump());
  const auto out = dir_ / "grid";
  const auto r = cli({"grid", "--config", (s / "g.json").string(), "--method", "rf", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(out / "grid.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto best = nlohmann::json::parse(slurp(out / "best.json"));
  EXPECT_EQ(best.at("method"), "rf");
  EXPECT_EQ(best.at("selection"), "oob");
}

TEST_F(Cli, ErrorsAreOneCategorisedLine) {
  const auto missing = cli({"run", "--config", (dir_ / "absent.json").string()});
  EXPECT_EQ(missing.code, hcd::cli::kExitFailure);
  EXPECT_EQ(missing.err.rfind("error: io: ", 0), 0u) << missing.err;
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);

  hcd::write_file_atomic(dir_ / "bad.json", std::string_view("{not json"));
  const auto bad = cli({"run", "--config", (dir_ / "bad.json").string()});
  EXPECT_EQ(bad.err.rfind("error: format: ", 0), 0u) << bad.err;

  hcd::write_file_atomic(dir_ / "empty.json", std::string_view("{}"));
  const auto incomplete = cli({"run", "--config", (dir_ / "empty.json").string(), "--out", (dir_ / "o").string()});
  EXPECT_EQ(incomplete.err.rfind("error: invalid_argument: ", 0), 0u) << incomplete.err;

  const auto s = synth();
  const auto hpt = cli({"run", "--config", (s / "run.json").string(), "--method", "hpt", "--out",
                        (dir_ / "o").string()});
  EXPECT_EQ(hpt.code, hcd::cli::kExitFailure);
  EXPECT_EQ(hpt.err.rfind("error: invalid_argument: ", 0), 0u) << hpt.err;

  const auto method = cli({"run", "--config", (s / "run.json").string(), "--method", "lasso"});
  EXPECT_EQ(method.err.rfind("error: invalid_argument: ", 0), 0u) << method.err;

  const auto usage = cli({"run", "--bogus"});
  EXPECT_EQ(usage.code, hcd::cli::kExitUsage);
  EXPECT_EQ(usage.err.rfind("error: usage: ", 0), 0u);
  EXPECT_EQ(cli({}).code, hcd::cli::kExitUsage);
}

TEST_F(Cli, RepeatedRunsGiveIdenticalScoreMaps) {
  const auto s = synth("sar_like");
  const auto a = dir_ / "a";
  const auto b = dir_ / "b";
  ASSERT_EQ(cli({"run", "--config", (s / "run.json").string(), "--method", "rf", "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"run", "--config", (s / "run.json").string(), "--method", "rf", "--out", b.string()}).code, 0);
  EXPECT_EQ(slurp(a / "score.hcdr"), slurp(b / "score.hcdr"));
  EXPECT_EQ(nlohmann::json::parse(slurp(a / "result.json")).at("score_hash"),
            nlohmann::json::parse(slurp(b / "result.json")).at("score_hash"));
}

}  // namespace
