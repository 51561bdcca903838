#include <gtest/gtest.h>

#include <cmath>

#include "mmgl/checkpoint.hpp"
#include "mmgl/config.hpp"
#include "mmgl/errors.hpp"
#include "mmgl/graph_io.hpp"
#include "mmgl/synthetic.hpp"
#include "mmgl/trainer.hpp"
#include "test_support.hpp"

using namespace mmgl;
using mmgl::testing::TempDir;

TEST(Config, DefaultsAreValid) {
  const TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.lambda, 1.0);
  EXPECT_EQ(cfg.eta, 1.0);
  EXPECT_EQ(cfg.theta, 0.5);
  EXPECT_EQ(cfg.alpha, 1.0);
  EXPECT_EQ(cfg.epochs, 200u);
  EXPECT_EQ(cfg.lr, 1e-3);
}

TEST(Config, ParseOverridesAndComments) {
  const TrainConfig cfg = parse_config(
      "# comment\n"
      "epochs = 12\n"
      "\n"
      "lr=0.01\n"
      "fusion = concat\n"
      "graph_mode = knn\n"
      "fanout1 = 4\n"
      "theta = 0.6\n");
  EXPECT_EQ(cfg.epochs, 12u);
  EXPECT_EQ(cfg.lr, 0.01);
  EXPECT_EQ(cfg.fusion, FusionMode::kConcat);
  EXPECT_EQ(cfg.graph_mode, GraphMode::kKnn);
  EXPECT_EQ(cfg.fanouts[0], 4u);
  EXPECT_EQ(cfg.theta, 0.6);
}

TEST(Config, ErrorsCarryLineNumbers) {
  try {
    parse_config("epochs = 3\nbogus = 1\n");
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("epochs = many\n"), ParameterError);
  EXPECT_THROW(parse_config("no equals sign\n"), ParameterError);
}

TEST(Config, InvalidRangesRejected) {
  TrainConfig cfg;
  cfg.theta = 1.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.d_f = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.val_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Config, EntriesRoundTripExactly) {
  TrainConfig cfg;
  cfg.lr = 0.1 + 0.2;
  cfg.tau = 1.0 / 3.0;
  cfg.seed = 123456789012345ULL;
  cfg.fusion = FusionMode::kConcat;
  cfg.eval_sampling = SamplingMode::kRandom;
  TrainConfig back;
  for (const auto& [k, v] : config_entries(cfg)) set_config_value(back, k, v);
  EXPECT_EQ(config_entries(back), config_entries(cfg));
  EXPECT_EQ(back.lr, cfg.lr);
  EXPECT_EQ(back.tau, cfg.tau);
}

TEST(Config, InferenceModeParsing) {
  EXPECT_EQ(parse_inference_mode("inductive"), InferenceMode::kInductive);
  EXPECT_EQ(parse_inference_mode("transductive"), InferenceMode::kTransductive);
  EXPECT_THROW(parse_inference_mode("both"), ParameterError);
}

// ---- graph files ----

TEST(GraphIo, RoundTripWithSidecar) {
  Matrix a(3, 3);
  a(0, 1) = a(1, 0) = 0.1 + 0.2;
  a(1, 2) = a(2, 1) = 1.0 / 7.0;
  LearnedGraph g{a, {"x", "y", "z"}, 0.55, "learned"};
  TempDir dir("graph");
  save_graph(g, dir.file("g.csv"));
  EXPECT_EQ(graph_sidecar_path(dir.file("g.csv")), dir.file("g.json"));
  const LearnedGraph back = load_graph(dir.file("g.csv"));
  EXPECT_EQ(back.adjacency, a);
  EXPECT_EQ(back.node_ids, g.node_ids);
  EXPECT_EQ(back.theta, 0.55);
  EXPECT_EQ(back.method, "learned");
}

TEST(GraphIo, MalformedEdgeListIsParseError) {
  TempDir dir("badgraph");
  LearnedGraph g{Matrix(2, 2), {"a", "b"}, 0.5, "learned"};
  save_graph(g, dir.file("g.csv"));
  dir.write("g.csv", "0,1,zero\n");
  EXPECT_THROW(load_graph(dir.file("g.csv")), ParseError);
  dir.write("g.csv", "0,7,0.5\n");
  EXPECT_THROW(load_graph(dir.file("g.csv")), DataError);
}

// ---- checkpoints ----

namespace {

struct SmallRun {
  MultiModalDataset data;
  TrainConfig cfg;
  FitResult fit;
};

SmallRun small_run(FusionMode fusion = FusionMode::kMarl) {
  SyntheticSpec spec;
  spec.num_patients = 45;
  spec.modality_dims = {3, 4, 2};
  SmallRun r;
  r.data = preprocess(synthetic_generate(spec), all_rows(45));
  r.cfg.epochs = 3;
  r.cfg.d_f = 4;
  r.cfg.d_h = 5;
  r.cfg.d_g = 6;
  r.cfg.fusion = fusion;
  r.cfg.seed = 17;
  std::vector<std::size_t> train(all_rows(35));
  std::vector<std::size_t> val;
  for (std::size_t i = 35; i < 40; ++i) val.push_back(i);
  r.fit = fit(r.data, {train, val}, r.cfg);
  return r;
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesPredictionsBitExactly) {
  for (FusionMode fusion : {FusionMode::kMarl, FusionMode::kConcat}) {
    const SmallRun r = small_run(fusion);
    const std::string text = checkpoint_to_json(r.fit.state, r.cfg);
    const Checkpoint ck = checkpoint_from_json(text);
    EXPECT_EQ(checkpoint_to_json(ck.state, ck.config), text);
    std::vector<std::size_t> test;
    for (std::size_t i = 40; i < 45; ++i) test.push_back(i);
    const auto graph = all_rows(35);
    EXPECT_EQ(inductive_predict(ck.state, ck.config, r.data, graph, test),
              inductive_predict(r.fit.state, r.cfg, r.data, graph, test));
    EXPECT_EQ(transductive_predict(ck.state, ck.config, r.data, test),
              transductive_predict(r.fit.state, r.cfg, r.data, test));
    for (std::size_t i = 0; i < ck.state.all_parameters().size(); ++i)
      EXPECT_EQ(ck.state.all_parameters()[i]->value, r.fit.state.all_parameters()[i]->value);
  }
}

TEST(Checkpoint, FileRoundTripAndFingerprintMismatch) {
  const SmallRun r = small_run();
  TempDir dir("ckpt");
  save_checkpoint(dir.file("c.json"), r.fit.state, r.cfg);
  EXPECT_NO_THROW(load_checkpoint(dir.file("c.json"), shape_of(r.data)));
  DatasetShape other = shape_of(r.data);
  other.modality_dims[1] = 9;
  try {
    load_checkpoint(dir.file("c.json"), other);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("dims"), std::string::npos) << e.what();
  }
  other = shape_of(r.data);
  other.num_classes = 2;
  EXPECT_THROW(load_checkpoint(dir.file("c.json"), other), DataError);
}

TEST(Checkpoint, CorruptInputsRejected) {
  EXPECT_THROW(checkpoint_from_json("{"), ParseError);
  EXPECT_THROW(checkpoint_from_json(R"({"format_version": 99})"), DataError);
  const SmallRun r = small_run();
  const std::string text = checkpoint_to_json(r.fit.state, r.cfg);
  // Optimizer slot and parameter entry both carry the name; corrupt each in turn.
  for (const auto pos : {text.find("\"gcn.W1\""), text.rfind("\"gcn.W1\"")}) {
    ASSERT_NE(pos, std::string::npos);
    std::string bad = text;
    bad.replace(pos, 8, "\"gcn.WX\"");
    EXPECT_THROW(checkpoint_from_json(bad), DataError);
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/c.json"), DataError);
}
