#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmgl_cli/cli.hpp"
#include "test_support.hpp"

using mmgl::testing::TempDir;
using mmgl::testing::read_file;
using json = nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mmgl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mmgl::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// Small synthetic dataset plus a fast training config inside `dir`.
struct Fixture {
  TempDir dir{"cli"};
  std::string manifest;
  std::string config;

  Fixture() {
    const std::string spec = dir.write(
        "spec.json", R"({"num_patients": 60, "modality_dims": [3, 4, 3], "num_classes": 3, "seed": 4})");
    config = dir.write("run.cfg", "d_f = 4\nd_h = 8\nd_g = 8\nepochs = 2\n");
    const Outcome o = invoke({"synth", "--spec", spec, "--out", dir.file("data")});
    EXPECT_EQ(o.code, 0) << o.err;
    manifest = dir.file("data/manifest.json");
  }

  Outcome run(const std::string& cmd, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{cmd, "--dataset", manifest, "--config", config, "--out", dir.file(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  }
};

json error_line(const Outcome& o) { return json::parse(o.err); }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  const Outcome missing = invoke({"train"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(error_line(missing)["exit_code"], 1);
}

TEST(Cli, InvalidModeAndConfigAreUsageErrors) {
  Fixture f;
  EXPECT_EQ(f.run("evaluate", "e", {"--mode", "sideways"}).code, 1);
  const std::string bad = f.dir.write("bad.cfg", "lr = -3\n");
  const Outcome o = invoke({"train", "--dataset", f.manifest, "--config", bad, "--out", f.dir.file("t")});
  EXPECT_EQ(o.code, 1);
  const json j = error_line(o);
  EXPECT_EQ(j["error"], "usage");
  EXPECT_NE(j["message"].get<std::string>().find("lr"), std::string::npos);
}

TEST(Cli, MissingDatasetIsDataError) {
  TempDir dir("cli_missing");
  const Outcome o = invoke({"train", "--dataset", dir.file("nope.json"), "--out", dir.file("t")});
  EXPECT_EQ(o.code, 2);
  const json j = error_line(o);
  EXPECT_EQ(j["exit_code"], 2);
  EXPECT_EQ(j["error"], "data");
}

TEST(Cli, SynthThenEvaluateWritesMetrics) {
  Fixture f;
  const Outcome o = f.run("evaluate", "cv", {"--folds", "2"});
  ASSERT_EQ(o.code, 0) << o.err;
  const json m = json::parse(read_file(f.dir.file("cv/metrics.json")));
  EXPECT_EQ(m["folds"], 2);
  EXPECT_EQ(m["mode"], "inductive");
  ASSERT_EQ(m["per_fold"].size(), 2u);
  const double a0 = m["per_fold"][0]["acc"], a1 = m["per_fold"][1]["acc"];
  EXPECT_NEAR(m["acc"]["mean"].get<double>(), (a0 + a1) / 2, 1e-15);
  EXPECT_NEAR(m["acc"]["std"].get<double>(), std::abs(a0 - a1) / std::sqrt(2.0), 1e-12);
  EXPECT_TRUE(m["sen"]["mean"].is_null());  // three classes
  const auto folds = read_csv(f.dir.file("cv/folds.csv"));
  ASSERT_EQ(folds.size(), 3u);
  EXPECT_EQ(folds[0][0], "fold");

  const Outcome holdout = f.run("evaluate", "ho", {"--folds", "1", "--mode", "transductive"});
  ASSERT_EQ(holdout.code, 0) << holdout.err;
  const json h = json::parse(read_file(f.dir.file("ho/metrics.json")));
  EXPECT_EQ(h["mode"], "transductive");
  EXPECT_EQ(h["per_fold"].size(), 1u);
}

TEST(Cli, TrainThenReuseCheckpoint) {
  Fixture f;
  const Outcome t = f.run("train", "model", {"--seed", "8"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto history = read_csv(f.dir.file("model/history.csv"));
  EXPECT_EQ(history.size(), 3u);
  const std::string ck = f.dir.file("model/checkpoint.json");
  const Outcome a = f.run("analyze-graph", "g1", {"--checkpoint", ck});
  const Outcome b = f.run("analyze-graph", "g2", {"--checkpoint", ck});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(read_file(f.dir.file("g1/graph_quality.csv")), read_file(f.dir.file("g2/graph_quality.csv")));
  const auto quality = read_csv(f.dir.file("g1/graph_quality.csv"));
  EXPECT_EQ(quality.size(), 61u);
  EXPECT_EQ(quality[0], (std::vector<std::string>{"patient_id", "label", "learned", "knn_rbf"}));
  const json gq = json::parse(read_file(f.dir.file("g1/graph_quality.json")));
  ASSERT_EQ(gq["methods"].size(), 2u);
  EXPECT_EQ(gq["methods"][0]["method"], "learned");
  EXPECT_EQ(gq["methods"][1]["method"], "knn-rbf");
}

TEST(Cli, CheckpointForOtherSchemaIsDataError) {
  Fixture f;
  ASSERT_EQ(f.run("train", "model").code, 0);
  const std::string spec = f.dir.write("other.json", R"({"num_patients": 30, "modality_dims": [2, 2], "seed": 1})");
  ASSERT_EQ(invoke({"synth", "--spec", spec, "--out", f.dir.file("other")}).code, 0);
  const Outcome o = invoke({"contributions", "--dataset", f.dir.file("other/manifest.json"), "--checkpoint",
                            f.dir.file("model/checkpoint.json"), "--out", f.dir.file("c")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(error_line(o)["message"].get<std::string>().find("dims"), std::string::npos);
}

TEST(Cli, ContributionsSumToOne) {
  Fixture f;
  const Outcome o = f.run("contributions", "c");
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = read_csv(f.dir.file("c/contributions.csv"));
  ASSERT_EQ(rows.size(), 61u);
  ASSERT_EQ(rows[0].size(), 5u);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    double sum = 0.0;
    for (std::size_t m = 2; m < 5; ++m) {
      const double v = std::stod(rows[r][m]);
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6) << "row " << r;
  }
  const auto by_class = read_csv(f.dir.file("c/contributions_by_class.csv"));
  EXPECT_EQ(by_class.size(), 4u);
}

TEST(Cli, ContributionsNeedAttentionFusion) {
  Fixture f;
  const std::string cfg = f.dir.write("concat.cfg", "epochs = 1\nfusion = concat\n");
  const Outcome o = invoke({"contributions", "--dataset", f.manifest, "--config", cfg, "--out", f.dir.file("c")});
  EXPECT_EQ(o.code, 1);
}

TEST(Cli, LabelSweepWritesEightRows) {
  Fixture f;
  const std::string cfg = f.dir.write("sweep.cfg", "d_f = 4\nd_h = 8\nd_g = 8\nepochs = 1\n");
  const Outcome o =
      invoke({"label-sweep", "--dataset", f.manifest, "--config", cfg, "--out", f.dir.file("s")});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = read_csv(f.dir.file("s/label_sweep.csv"));
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0][0], "fraction");
  EXPECT_DOUBLE_EQ(std::stod(rows[1][0]), 0.1);
  EXPECT_DOUBLE_EQ(std::stod(rows[8][0]), 0.8);
}
