// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>

#include "fixtures.hpp"
#include "json.hpp"
#include "modalbridge/checkpoint.hpp"
#include "modalbridge/cli.hpp"

namespace modalbridge::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class DeterministicEnv {
 public:
  DeterministicEnv() { setenv("MODALBRIDGE_DETERMINISTIC", "1", 1); }
  ~DeterministicEnv() { unsetenv("MODALBRIDGE_DETERMINISTIC"); }
};

class CliTest : public ::testing::Test {
 protected:
  CliTest() : dir_("cli") {
    write_file(dir_ / "tiny.cfg", fixtures::tiny_config_text());
    options_.config = dir_ / "tiny.cfg";
  }

  Options run_options(const std::string& out) const {
    Options o = options_;
    o.out = dir_ / out;
    o.generate = true;
    return o;
  }

  int invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "modalbridge");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return main(static_cast<int>(argv.size()), argv.data());
  }

  fixtures::TempDir dir_;
  Options options_;
};

TEST_F(CliTest, RunWritesConsistentArtifacts) {
  ASSERT_EQ(cmd_run(run_options("a")), kExitOk);
  const fs::path out = dir_ / "a";
  for (const char* f : {"metrics.csv", "summary.json", "manifest.json", "config.cfg",
                        "checkpoints/seed1/classifier.ckpt", "checkpoints/seed2/teacher.ckpt",
                        "plots/seed1_loss.svg", "plots/seed2_accuracy.svg", "dataset/manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_TRUE(verify_manifest(out).empty());

  const json summary = json::parse(read_file(out / "summary.json"));
  const auto rows = parse_metrics_csv(read_file(out / "metrics.csv"));
  std::vector<double> finals;
  for (const auto& r : rows) {
    if (r.phase == "eval") finals.push_back(*r.accuracy);
  }
  ASSERT_EQ(finals.size(), 2u);
  EXPECT_DOUBLE_EQ(summary.at("mean").get<double>(), sample_mean(finals));
  EXPECT_DOUBLE_EQ(summary.at("variance").get<double>(), sample_variance(finals));
  EXPECT_EQ(summary.at("finals").size(), 2u);
  EXPECT_EQ(summary.at("finals")[1].at("seed").get<int>(), 2);
  EXPECT_TRUE(summary.contains("dataset_digest"));
  EXPECT_TRUE(summary.contains("checkpoints"));
  EXPECT_EQ(summary.at("config").at("data.seed"), "11");

  // Re-running from the echoed config reproduces the config.
  EXPECT_EQ(config_echo(load_config(out / "config.cfg")), read_file(out / "config.cfg"));
}

TEST_F(CliTest, RefusesToOverwriteWithoutForce) {
  ASSERT_EQ(cmd_run(run_options("a")), kExitOk);
  EXPECT_EQ(cmd_run(run_options("a")), kExitUsage);
  Options forced = run_options("a");
  forced.force = true;
  EXPECT_EQ(cmd_run(forced), kExitOk);
}

TEST_F(CliTest, MissingDatasetNeedsGenerateFlag) {
  Options o = run_options("b");
  o.generate = false;
  EXPECT_EQ(cmd_run(o), kExitUsage);
  EXPECT_FALSE(fs::exists(dir_ / "b" / "manifest.json"));
}

TEST_F(CliTest, GeneratedDatasetIsReusedByRun) {
  Options g = options_;
  g.out = dir_ / "data";
  ASSERT_EQ(cmd_generate(g), kExitOk);
  EXPECT_EQ(cmd_generate(g), kExitUsage);
  Options r = run_options("c");
  r.generate = false;
  r.data = dir_ / "data";
  r.seed = 3;
  ASSERT_EQ(cmd_run(r), kExitOk);
  const json summary = json::parse(read_file(dir_ / "c" / "summary.json"));
  EXPECT_EQ(summary.at("finals").size(), 1u);
  EXPECT_EQ(summary.at("finals")[0].at("seed").get<int>(), 3);
  EXPECT_DOUBLE_EQ(summary.at("variance").get<double>(), 0.0);
}

TEST_F(CliTest, TamperedCheckpointIsDetected) {
  ASSERT_EQ(cmd_run(run_options("a")), kExitOk);
  const fs::path ckpt = dir_ / "a" / "checkpoints/seed1/student.ckpt";
  std::string bytes = read_file(ckpt);
  bytes.back() ^= 0x10;
  write_file(ckpt, bytes);
  const auto problems = verify_manifest(dir_ / "a");
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems[0].find("student.ckpt"), std::string::npos);
}

TEST_F(CliTest, DeterministicModeIsByteReproducible) {
  DeterministicEnv env;
  Options a = run_options("d1");
  Options b = run_options("d2");
  b.jobs = 3;
  ASSERT_EQ(cmd_run(a), kExitOk);
  ASSERT_EQ(cmd_run(b), kExitOk);
  for (const char* f : {"metrics.csv", "summary.json", "manifest.json", "config.cfg"}) {
    EXPECT_EQ(read_file(dir_ / "d1" / f), read_file(dir_ / "d2" / f)) << f;
  }
  for (const auto& r : parse_metrics_csv(read_file(dir_ / "d1" / "metrics.csv"))) EXPECT_EQ(r.ms, 0.0);
}

TEST_F(CliTest, BaselineOverride) {
  Options o = run_options("e");
  o.baseline = "from_scratch";
  ASSERT_EQ(cmd_run(o), kExitOk);
  EXPECT_FALSE(fs::exists(dir_ / "e" / "checkpoints/seed1/teacher.ckpt"));
  Options bad = run_options("f");
  bad.baseline = "imagenet";
  EXPECT_EQ(cmd_run(bad), kExitUsage);
}

TEST_F(CliTest, EvalReproducesRunAccuracy) {
  ASSERT_EQ(cmd_run(run_options("a")), kExitOk);
  Options e;
  e.checkpoint = dir_ / "a" / "checkpoints/seed2/classifier.ckpt";
  e.data = dir_ / "a" / "dataset";
  e.out = dir_ / "eval.json";
  ASSERT_EQ(cmd_eval(e), kExitOk);
  const json result = json::parse(read_file(dir_ / "eval.json"));
  const json summary = json::parse(read_file(dir_ / "a" / "summary.json"));
  EXPECT_DOUBLE_EQ(result.at("accuracy").get<double>(), summary.at("finals")[1].at("accuracy").get<double>());
  EXPECT_EQ(result.at("dataset_digest"), summary.at("dataset_digest"));
  Options teacher = e;
  teacher.checkpoint = dir_ / "a" / "checkpoints/seed2/teacher.ckpt";
  teacher.out = dir_ / "eval2.json";
  EXPECT_EQ(cmd_eval(teacher), kExitUsage);
}

TEST(GridSpec, ParsesAxesInFixedOrder) {
  const auto axes = parse_grid_spec("k = 1,2\nloss = cosine, mse\n");
  ASSERT_EQ(axes.size(), 2u);
  EXPECT_EQ(axes[0].name, "loss");
  EXPECT_EQ(axes[1].name, "k");
  EXPECT_EQ(axes[0].values, (std::vector<std::string>{"cosine", "mse"}));
  EXPECT_THROW(parse_grid_spec("lr = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_grid_spec("loss = mse,mse\n"), ConfigError);
  EXPECT_THROW(parse_grid_spec("loss = mse,\n"), ConfigError);
  EXPECT_THROW(parse_grid_spec("# nothing\n"), ConfigError);
}

TEST(GridSpec, ExpansionIsCartesianWithLastAxisFastest) {
  const auto cells = expand_grid({{"loss", {"cosine", "mse"}}, {"granularity", {"clip_to_clip", "video_to_clip", "combined"}}});
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0][1].second, "clip_to_clip");
  EXPECT_EQ(cells[1][1].second, "video_to_clip");
  EXPECT_EQ(cells[3][0].second, "mse");
  EXPECT_EQ(cells[3][1].second, "clip_to_clip");
}

TEST(GridSpec, CellConfigAppliesAndValidates) {
  const TransferConfig base = fixtures::tiny_config();
  const auto c = cell_config(base, {{"loss", "mse"}, {"k", "1"}});
  EXPECT_EQ(c.loss, FeatureLoss::kMse);
  EXPECT_EQ(c.k, 1u);
  EXPECT_THROW(cell_config(base, {{"granularity", "video_to_video"}}), ConfigError);
  EXPECT_THROW(cell_config(base, {{"k", "9"}}), ConfigError);
}

TEST_F(CliTest, InvalidCellFailsBeforeAnyRun) {
  write_file(dir_ / "grid.cfg", "granularity = combined, video_to_video\n");
  Options o = run_options("g");
  o.grid = dir_ / "grid.cfg";
  EXPECT_EQ(cmd_ablate(o), kExitUsage);
  EXPECT_FALSE(fs::exists(dir_ / "g"));
}

TEST_F(CliTest, AblationCellMatchesStandaloneRun) {
  DeterministicEnv env;
  write_file(dir_ / "grid.cfg", "loss = cosine, mse\n");
  Options o = run_options("abl");
  o.grid = dir_ / "grid.cfg";
  ASSERT_EQ(cmd_ablate(o), kExitOk);
  EXPECT_TRUE(verify_manifest(dir_ / "abl").empty());
  const std::string table = read_file(dir_ / "abl" / "table.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "cell,loss,mean,variance,seeds,status");
  EXPECT_TRUE(fs::exists(dir_ / "abl" / "table.md"));

  write_file(dir_ / "mse.cfg", fixtures::tiny_config_text() + "transfer.loss = mse\n");
  Options standalone = run_options("mse");
  standalone.config = dir_ / "mse.cfg";
  standalone.generate = false;
  standalone.data = dir_ / "abl" / "dataset";
  ASSERT_EQ(cmd_run(standalone), kExitOk);
  EXPECT_EQ(read_file(dir_ / "abl" / "cells/001/metrics.csv"), read_file(dir_ / "mse" / "metrics.csv"));
}

TEST_F(CliTest, ArgumentParsing) {
  EXPECT_EQ(invoke({}), kExitUsage);
  EXPECT_EQ(invoke({"run", "--out", (dir_ / "x").string()}), kExitUsage);
  EXPECT_EQ(invoke({"run", "--config", options_.config.string(), "--out", (dir_ / "x").string(), "--bogus"}),
            kExitUsage);
  EXPECT_EQ(invoke({"run", "--config", options_.config.string(), "--out", (dir_ / "x").string(),
                    "--generate", "--seed", "2", "--jobs", "2"}),
            kExitOk);
  const json summary = json::parse(read_file(dir_ / "x" / "summary.json"));
  EXPECT_EQ(summary.at("finals")[0].at("seed").get<int>(), 2);
}

TEST(Artifacts, MetricsCsvRoundTrip) {
  const std::vector<MetricsRecord> records{{"transfer", 0, 1, 0.123456789, std::nullopt, 1.5},
                                           {"eval", 2, 1, 0.0, 0.75, 0.0}};
  const std::string csv = metrics_csv(records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "phase,epoch,seed,loss,accuracy,ms");
  const auto rows = parse_metrics_csv(csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].loss, 0.123456789);
  EXPECT_FALSE(rows[0].accuracy.has_value());
  EXPECT_DOUBLE_EQ(*rows[1].accuracy, 0.75);
  EXPECT_THROW(parse_metrics_csv("a,b\n"), std::runtime_error);
}

TEST(Artifacts, SvgChartHasOnePolylinePerSeries) {
  const std::string svg = line_chart_svg("t <1>", "epoch", "loss",
                                         {{"a", {{0, 1}, {1, 0.5}}}, {"b", {{0, 2}, {1, 1}}}});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("t &lt;1&gt;"), std::string::npos);
  std::size_t count = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++count;
  EXPECT_EQ(count, 2u);
}

}  // namespace
}  // namespace modalbridge::cli
