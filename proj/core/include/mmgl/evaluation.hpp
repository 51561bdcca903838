#pragma once

// Experiment protocols: stratified cross-validation, single hold-out runs,
// the transductive label-fraction sweep and the learned-vs-kNN graph
// comparison. Preprocessing (imputation and standardization) is refitted on
// the training rows of every split.

#include <cstddef>
#include <span>
#include <vector>

#include "mmgl/config.hpp"
#include "mmgl/data.hpp"
#include "mmgl/graph_quality.hpp"
#include "mmgl/metrics.hpp"
#include "mmgl/trainer.hpp"

namespace mmgl {

struct FoldOutcome {
  std::size_t fold = 0;
  Metrics metrics;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t test_size = 0;
};

struct CvResult {
  MetricsReport report;
  std::vector<FoldOutcome> folds;
};

struct CvOptions {
  std::size_t folds = 10;
  InferenceMode mode = InferenceMode::kInductive;
  double missing_threshold = 0.05;
};

/// A dataset split into preprocessed training data and held-out rows.
struct PreparedSplit {
  MultiModalDataset data;  // all rows, preprocessed with training-row statistics
  TrainSplit split;
  std::vector<std::size_t> test;
};

/// Carves a stratified validation share (cfg.val_fraction) out of `fit_rows`
/// and preprocesses `ds` with statistics of `fit_rows`.
PreparedSplit prepare_split(const MultiModalDataset& ds, std::span<const std::size_t> fit_rows,
                            std::span<const std::size_t> test_rows, const TrainConfig& cfg,
                            std::uint64_t seed);

/// Fits on a prepared split and scores the held-out rows.
struct SplitRun {
  FitResult fit;
  Metrics metrics;
  Matrix test_logits;
};
SplitRun run_split(const PreparedSplit& prepared, const TrainConfig& cfg, InferenceMode mode);

/// K-fold stratified cross-validation. Fold k uses seed derive_seed(cfg.seed, k).
CvResult run_cv(const MultiModalDataset& ds, const TrainConfig& cfg, const CvOptions& options);

/// One stratified hold-out split with `test_fraction` of the rows held out.
CvResult run_holdout(const MultiModalDataset& ds, const TrainConfig& cfg, double test_fraction,
                     InferenceMode mode, double missing_threshold = 0.05);

struct SweepRow {
  double fraction = 0.0;
  std::size_t labeled = 0;
  Summary acc;
  Summary auc;
  std::vector<double> acc_per_repeat;
};

/// Transductive protocol: for each fraction, label that stratified share of
/// patients, train on them with every patient in the graph and score the
/// rest. Repeats use seeds derive_seed(cfg.seed, 1000 + r).
std::vector<SweepRow> label_sweep(const MultiModalDataset& ds, const TrainConfig& cfg,
                                  std::span<const double> fractions, std::size_t repeats,
                                  double missing_threshold = 0.05);

/// The default sweep: 0.1, 0.2, ..., 0.8.
std::vector<double> default_label_fractions();

struct GraphComparison {
  LearnedGraph learned;
  LearnedGraph knn;
  GraphQualityReport learned_quality;
  GraphQualityReport knn_quality;
};

/// Learned graph of `state` and the kNN/RBF graph (k = cfg.knn_k, sigma =
/// median pairwise distance) over the embeddings of `rows`.
GraphComparison compare_graphs(const ModelState& state, const TrainConfig& cfg,
                               const MultiModalDataset& ds, std::span<const std::size_t> rows);

}  // namespace mmgl
