#include "mmgl/evaluation.hpp"

#include <cmath>

#include "mmgl/errors.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

namespace {

constexpr std::uint64_t kFoldStream = 11;
constexpr std::uint64_t kHoldoutStream = 12;

}  // namespace

PreparedSplit prepare_split(const MultiModalDataset& ds, std::span<const std::size_t> fit_rows,
                            std::span<const std::size_t> test_rows, const TrainConfig& cfg,
                            std::uint64_t seed) {
  PreparedSplit p;
  const RowPartition parts = stratified_partition(ds.labels, fit_rows, cfg.val_fraction, seed);
  p.split.val = parts.first;
  p.split.train = parts.second;
  if (p.split.train.empty()) throw DataError("no training rows left after the validation split");
  p.test.assign(test_rows.begin(), test_rows.end());
  p.data = preprocess(ds, fit_rows);
  return p;
}

SplitRun run_split(const PreparedSplit& prepared, const TrainConfig& cfg, InferenceMode mode) {
  SplitRun run;
  run.fit = fit(prepared.data, prepared.split, cfg, mode);
  run.test_logits = mode == InferenceMode::kInductive
                        ? inductive_predict(run.fit.state, cfg, prepared.data, prepared.split.train,
                                            prepared.test)
                        : transductive_predict(run.fit.state, cfg, prepared.data, prepared.test);
  run.metrics = compute_metrics(run.test_logits, prepared.data.labels_of(prepared.test),
                                prepared.data.num_classes());
  return run;
}

namespace {

FoldOutcome outcome(std::size_t fold, const PreparedSplit& p, const SplitRun& run) {
  FoldOutcome o;
  o.fold = fold;
  o.metrics = run.metrics;
  o.best_epoch = run.fit.best_epoch;
  o.best_val_acc = run.fit.best_val_acc;
  o.train_size = p.split.train.size();
  o.val_size = p.split.val.size();
  o.test_size = p.test.size();
  return o;
}

}  // namespace

CvResult run_cv(const MultiModalDataset& raw, const TrainConfig& cfg, const CvOptions& options) {
  cfg.validate();
  const MultiModalDataset ds = drop_high_missing(raw, options.missing_threshold);
  const FoldSplit folds =
      stratified_kfold(ds.labels, options.folds, derive_seed(cfg.seed, kFoldStream));
  CvResult result;
  std::vector<Metrics> metrics;
  for (std::size_t k = 0; k < options.folds; ++k) {
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, k);
    const auto test = folds.members(k);
    const auto rest = folds.complement(k);
    const PreparedSplit p = prepare_split(ds, rest, test, fold_cfg, derive_seed(fold_cfg.seed, kFoldStream));
    const SplitRun run = run_split(p, fold_cfg, options.mode);
    result.folds.push_back(outcome(k, p, run));
    metrics.push_back(run.metrics);
  }
  result.report = aggregate(std::move(metrics));
  return result;
}

CvResult run_holdout(const MultiModalDataset& raw, const TrainConfig& cfg, double test_fraction,
                     InferenceMode mode, double missing_threshold) {
  cfg.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ParameterError("test fraction must lie in (0, 1)");
  }
  const MultiModalDataset ds = drop_high_missing(raw, missing_threshold);
  const RowPartition parts = stratified_partition(ds.labels, all_rows(ds.size()), test_fraction,
                                                  derive_seed(cfg.seed, kHoldoutStream));
  const PreparedSplit p = prepare_split(ds, parts.second, parts.first, cfg,
                                        derive_seed(cfg.seed, kFoldStream));
  const SplitRun run = run_split(p, cfg, mode);
  CvResult result;
  result.folds.push_back(outcome(0, p, run));
  result.report = aggregate({run.metrics});
  return result;
}

std::vector<double> default_label_fractions() {
  std::vector<double> f;
  for (int i = 1; i <= 8; ++i) f.push_back(i / 10.0);
  return f;
}

std::vector<SweepRow> label_sweep(const MultiModalDataset& raw, const TrainConfig& cfg,
                                  std::span<const double> fractions, std::size_t repeats,
                                  double missing_threshold) {
  cfg.validate();
  if (repeats == 0) throw ParameterError("label_sweep needs at least one repeat");
  const MultiModalDataset ds = drop_high_missing(raw, missing_threshold);
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ParameterError("label fractions must lie in (0, 1)");
    SweepRow row;
    row.fraction = f;
    std::vector<double> acc, auc;
    for (std::size_t r = 0; r < repeats; ++r) {
      TrainConfig run_cfg = cfg;
      run_cfg.seed = derive_seed(cfg.seed, 1000 + r);
      const RowPartition parts = stratified_partition(
          ds.labels, all_rows(ds.size()), f,
          derive_seed(run_cfg.seed, static_cast<std::uint64_t>(std::llround(f * 1000.0))));
      const MultiModalDataset data = preprocess(ds, parts.first);
      const TrainSplit split{parts.first, {}};
      const FitResult fr = fit(data, split, run_cfg, InferenceMode::kTransductive);
      const Matrix logits = transductive_predict(fr.state, run_cfg, data, parts.second);
      const Metrics m = compute_metrics(logits, data.labels_of(parts.second), data.num_classes());
      acc.push_back(m.acc);
      auc.push_back(m.auc);
      row.labeled = parts.first.size();
    }
    row.acc = summarize(acc);
    row.auc = summarize(auc);
    row.acc_per_repeat = acc;
    rows.push_back(std::move(row));
  }
  return rows;
}

GraphComparison compare_graphs(const ModelState& state, const TrainConfig& cfg,
                               const MultiModalDataset& ds, std::span<const std::size_t> rows) {
  if (rows.size() < 2) throw DataError("graph comparison needs at least two patients");
  std::vector<std::string> ids;
  for (std::size_t r : rows) ids.push_back(ds.patient_ids.at(r));
  const Matrix h = embed(state, ds.features(rows));
  const std::vector<int> labels = ds.labels_of(rows);
  GraphComparison c;
  c.learned = learn_graph(h, state.agl, ids);
  c.knn = knn_rbf_graph(h, std::min(cfg.knn_k, rows.size() - 1), knn_bandwidth(h), ids);
  c.knn.method = "knn-rbf";
  c.learned_quality = incorrect_link_proportion(c.learned.adjacency, labels, c.learned.method);
  c.knn_quality = incorrect_link_proportion(c.knn.adjacency, labels, c.knn.method);
  return c;
}

}  // namespace mmgl
