#pragma once

// Joint training of fusion, graph learner and predictor.
//
// Every epoch runs two passes over the labeled training nodes in shuffled
// mini-batches. Pass one updates the fusion parameters and W_A with the
// predictor frozen; pass two updates W_A, the GCN and the auxiliary head with
// the fusion parameters frozen. For each mini-batch the embeddings of all
// context nodes are recomputed, the graph over them is rebuilt, 2-hop
// neighborhoods of the batch are sampled and the joint loss
//
//   L = CE(gcn) + lambda * L_g(A_batch, H_batch) + eta * CE(aux)
//
// is minimized with Adam. L_g sees the batch's submatrix of A. In the
// inductive setting the context is the training nodes only; in the
// transductive setting it is every node and only the labels are hidden.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mmgl/adam.hpp"
#include "mmgl/agl.hpp"
#include "mmgl/config.hpp"
#include "mmgl/data.hpp"
#include "mmgl/gnn.hpp"
#include "mmgl/marl.hpp"

namespace mmgl {

struct ModelState {
  FusionMode fusion = FusionMode::kMarl;
  GraphMode graph_mode = GraphMode::kLearned;
  MarlParams marl;
  GraphLearnerParams agl;
  GcnParams gnn;
  AuxClassifierParams aux;
  AdamState optimizer;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  DatasetShape shape;

  static ModelState init(const DatasetShape& shape, const TrainConfig& cfg);

  std::size_t embedding_dim() const;
  bool uses_aux() const { return fusion == FusionMode::kMarl; }

  /// Parameters the fusion mode actually uses.
  std::vector<Parameter*> fusion_parameters();
  /// Fusion parameters plus W_A.
  std::vector<Parameter*> phase1_parameters();
  /// W_A, GCN and (when used) the auxiliary head.
  std::vector<Parameter*> phase2_parameters();
  std::vector<Parameter*> all_parameters();
  std::vector<const Parameter*> all_parameters() const;

  void validate() const;
};

// ---- Forward helpers (no gradients) ----

/// Node embeddings H for per-modality feature blocks (B x d_m each).
Matrix embed(const ModelState& state, std::span<const Matrix> modalities);

/// Graph over the rows of H as the state's graph mode builds it.
LearnedGraph build_graph(const ModelState& state, const TrainConfig& cfg, const Matrix& embeddings,
                         std::vector<std::string> node_ids = {});

/// Bandwidth used by the kNN/RBF graph: median pairwise distance, 1 when it is 0.
double knn_bandwidth(const Matrix& embeddings);

// ---- Joint loss ----

struct LossComponents {
  double gnn = 0.0;
  double graph = 0.0;  // L_g, unweighted
  double aux = 0.0;    // 0 when the fusion mode has no auxiliary head
  double smoothness = 0.0;
  double connectivity = 0.0;
  double frobenius = 0.0;
  double total = 0.0;  // gnn + lambda * graph + eta * aux
};

enum class TrainPhase {
  kAll,             // every parameter receives gradients
  kFusionGraph,     // pass one
  kGraphPredictor,  // pass two
};

struct BatchSpec {
  std::vector<std::size_t> context;    // dataset rows that form the graph
  std::vector<std::size_t> positions;  // labeled targets, as positions within `context`
  SamplingMode sampling = SamplingMode::kRandom;
  std::uint64_t sample_seed = 0;
};

/// Records the joint loss for one batch on `tape`, binding the parameters of
/// `state` with gradients enabled for `phase`.
Var joint_loss(Tape& tape, ModelState& state, const MultiModalDataset& ds, const BatchSpec& batch,
               const TrainConfig& cfg, TrainPhase phase, LossComponents* components = nullptr);

/// Evaluates the joint loss without keeping gradients.
LossComponents evaluate_joint_loss(const ModelState& state, const MultiModalDataset& ds,
                                   const BatchSpec& batch, const TrainConfig& cfg);

// ---- Training ----

struct TrainSplit {
  std::vector<std::size_t> train;  // labeled rows used for the losses
  std::vector<std::size_t> val;    // rows for model selection; may be empty
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossComponents phase1;  // batch means
  LossComponents phase2;
  double val_acc = 0.0;   // NaN when validation was not run this epoch
  double val_loss = 0.0;
};

EpochRecord train_epoch(ModelState& state, const MultiModalDataset& ds, const TrainSplit& split,
                        const TrainConfig& cfg, InferenceMode mode);

struct FitResult {
  ModelState state;  // best by validation accuracy (lower loss on ties); last when no validation
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double best_val_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

FitResult fit(const MultiModalDataset& ds, const TrainSplit& split, const TrainConfig& cfg,
              InferenceMode mode = InferenceMode::kInductive, const EpochCallback& on_epoch = {});

// ---- Prediction ----

/// Logits for `targets` with the graph built over every row of `ds`.
Matrix transductive_predict(const ModelState& state, const TrainConfig& cfg,
                            const MultiModalDataset& ds, std::span<const std::size_t> targets);

/// Logits for unseen patients. The graph is built over `graph_rows` of `ds`;
/// each unseen patient is linked to those nodes with the learned metric (no
/// links between unseen patients and none from graph nodes back to them) and
/// dropped afterwards. An unseen patient whose link weight to a graph node is
/// 1 (identical projected embedding) takes that node's place instead of
/// linking to it. `unseen[m]` holds one row per patient for modality m.
Matrix inductive_predict(const ModelState& state, const TrainConfig& cfg, const MultiModalDataset& ds,
                         std::span<const std::size_t> graph_rows, std::span<const Matrix> unseen);

/// Convenience overload: the unseen patients are rows of `ds`.
Matrix inductive_predict(const ModelState& state, const TrainConfig& cfg, const MultiModalDataset& ds,
                         std::span<const std::size_t> graph_rows,
                         std::span<const std::size_t> unseen_rows);

/// Training batch size for `num_train` labeled nodes.
std::size_t effective_batch_size(const TrainConfig& cfg, std::size_t num_train);

}  // namespace mmgl
