#include "mmgl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mmgl/errors.hpp"
#include "mmgl/metrics.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

namespace {

// Seed streams derived from the master seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kEpochStream = 2;
constexpr std::uint64_t kEvalStream = 3;

// A link weight at least this large marks an unseen patient that coincides
// with a graph node.
constexpr double kCoincidentWeight = 1.0 - 1e-12;

struct Bound {
  MarlVars marl;
  Var metric;
  Var layer1, layer2;
  Var aux_weights, aux_bias;
};

Bound bind_state(Tape& tape, ModelState& s, TrainPhase phase) {
  const bool fusion = phase != TrainPhase::kGraphPredictor;
  const bool predictor = phase != TrainPhase::kFusionGraph;
  Bound b;
  b.marl = bind(tape, s.marl, fusion);
  b.metric = tape.parameter(s.agl.metric, true);
  b.layer1 = tape.parameter(s.gnn.layer1, predictor);
  b.layer2 = tape.parameter(s.gnn.layer2, predictor);
  b.aux_weights = tape.parameter(s.aux.weights, predictor);
  b.aux_bias = tape.parameter(s.aux.bias, predictor);
  return b;
}

Bound bind_constants(Tape& tape, const ModelState& s) {
  Bound b;
  for (const auto& w : s.marl.projections) b.marl.projections.push_back(tape.constant(w.value));
  for (const auto& w : s.marl.projection_biases) b.marl.projection_biases.push_back(tape.constant(w.value));
  b.marl.query = tape.constant(s.marl.query.value);
  b.marl.key = tape.constant(s.marl.key.value);
  b.marl.value = tape.constant(s.marl.value.value);
  b.marl.output = tape.constant(s.marl.output.value);
  b.marl.alpha = s.marl.alpha;
  b.marl.tau = s.marl.tau;
  b.metric = tape.constant(s.agl.metric.value);
  b.layer1 = tape.constant(s.gnn.layer1.value);
  b.layer2 = tape.constant(s.gnn.layer2.value);
  b.aux_weights = tape.constant(s.aux.weights.value);
  b.aux_bias = tape.constant(s.aux.bias.value);
  return b;
}

struct Encoded {
  Var h;
  Var specified;  // invalid in concat mode
};

Encoded encode(FusionMode fusion, const MarlVars& vars, std::span<const Var> modalities) {
  if (fusion == FusionMode::kMarl) {
    MarlOutput out = marl_forward(vars, modalities);
    return Encoded{out.combined, out.specified};
  }
  const std::size_t M = vars.projections.size();
  if (modalities.size() != M) {
    throw DataError("expected " + std::to_string(M) + " modalities, got " +
                    std::to_string(modalities.size()));
  }
  std::vector<Var> parts;
  for (std::size_t m = 0; m < M; ++m) {
    if (modalities[m].cols() != vars.projections[m].cols()) {
      throw DataError("modality " + std::to_string(m) + " has " +
                      std::to_string(modalities[m].cols()) + " features, expected " +
                      std::to_string(vars.projections[m].cols()));
    }
    Var x = ad::matmul_nt(modalities[m], vars.projections[m]);
    if (!vars.projection_biases.empty()) x = ad::add_row(x, vars.projection_biases[m]);
    parts.push_back(x);
  }
  return Encoded{ad::matmul_nt(ad::hconcat(parts), vars.output), Var{}};
}

std::vector<Var> feature_vars(Tape& tape, std::span<const Matrix> blocks) {
  std::vector<Var> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(tape.constant(b));
  return out;
}

Matrix knn_graph_matrix(const Matrix& h, std::size_t k) {
  if (h.rows() < 2) return Matrix(h.rows(), h.rows());
  return knn_rbf_graph(h, std::min(k, h.rows() - 1), knn_bandwidth(h)).adjacency;
}

/// Links from new embeddings to graph nodes for the kNN graph mode.
Matrix knn_extend(const Matrix& h_graph, const Matrix& h_new, std::size_t k) {
  const std::size_t n = h_graph.rows();
  Matrix w(h_new.rows(), n);
  if (n == 0) return w;
  k = std::min(k, n);
  const double sigma = knn_bandwidth(h_graph);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t u = 0; u < h_new.rows(); ++u) {
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < h_graph.cols(); ++c) {
        const double diff = h_new(u, c) - h_graph(j, c);
        d2 += diff * diff;
      }
      dist[j] = {d2, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t r = 0; r < k; ++r)
      w(u, dist[r].second) = std::exp(-dist[r].first / (2.0 * sigma * sigma));
  }
  return w;
}

/// Graph over the context as a tape value; differentiable in learned mode.
Var graph_var(Tape& tape, const ModelState& s, const TrainConfig& cfg, const Bound& b, const Var& h) {
  if (s.graph_mode == GraphMode::kLearned) return ad::learn_adjacency(h, b.metric, s.agl.theta);
  return tape.constant(knn_graph_matrix(h.value(), cfg.knn_k));
}

Var weighted_total(const Var& gnn, const Var& graph, const Var& aux, const TrainConfig& cfg) {
  Var total = ad::add(gnn, ad::scale(graph, cfg.lambda));
  if (aux.valid()) total = ad::add(total, ad::scale(aux, cfg.eta));
  return total;
}

Var record_joint_loss(Tape& tape, const ModelState& s, const Bound& b, const MultiModalDataset& ds,
                      const BatchSpec& batch, const TrainConfig& cfg, LossComponents* components) {
  if (batch.positions.empty()) throw ContractError("joint_loss: empty batch");
  for (std::size_t p : batch.positions) {
    if (p >= batch.context.size()) throw ContractError("joint_loss: batch position outside context");
  }
  const std::vector<Matrix> blocks = ds.features(batch.context);
  const std::vector<Var> inputs = feature_vars(tape, blocks);
  const Encoded enc = encode(s.fusion, b.marl, inputs);
  const Var adjacency = graph_var(tape, s, cfg, b, enc.h);

  std::vector<int> labels;
  labels.reserve(batch.positions.size());
  for (std::size_t p : batch.positions) labels.push_back(ds.labels.at(batch.context[p]));

  Rng rng(batch.sample_seed);
  const SampledNeighborhood nb =
      sample_neighbors(adjacency.value(), batch.positions, cfg.fanouts, batch.sampling, rng);
  const Var logits = ad::gcn_sampled(enc.h, adjacency, nb, b.layer1, b.layer2);
  const Var l_gnn = ad::cross_entropy(logits, labels);

  const auto reg = ad::graph_regularizer(ad::submatrix(adjacency, batch.positions),
                                         ad::gather_rows(enc.h, batch.positions), s.agl.beta,
                                         s.agl.gamma);
  Var l_aux;
  if (s.uses_aux()) {
    const Var aux_logits =
        ad::aux_forward(ad::gather_rows(enc.specified, batch.positions), b.aux_weights, b.aux_bias);
    l_aux = ad::cross_entropy(aux_logits, labels);
  }
  const Var total = weighted_total(l_gnn, reg.total, l_aux, cfg);
  if (components != nullptr) {
    components->gnn = l_gnn.scalar();
    components->graph = reg.total.scalar();
    components->aux = l_aux.valid() ? l_aux.scalar() : 0.0;
    components->smoothness = reg.smoothness.scalar();
    components->connectivity = reg.connectivity.scalar();
    components->frobenius = reg.frobenius.scalar();
    components->total = total.scalar();
  }
  return total;
}

void accumulate(LossComponents& acc, const LossComponents& c) {
  acc.gnn += c.gnn;
  acc.graph += c.graph;
  acc.aux += c.aux;
  acc.smoothness += c.smoothness;
  acc.connectivity += c.connectivity;
  acc.frobenius += c.frobenius;
  acc.total += c.total;
}

void divide(LossComponents& acc, double n) {
  acc.gnn /= n;
  acc.graph /= n;
  acc.aux /= n;
  acc.smoothness /= n;
  acc.connectivity /= n;
  acc.frobenius /= n;
  acc.total /= n;
}

std::string describe(const LossComponents& c) {
  std::ostringstream os;
  os << "gnn=" << c.gnn << " graph=" << c.graph << " aux=" << c.aux
     << " (smoothness=" << c.smoothness << " connectivity=" << c.connectivity
     << " frobenius=" << c.frobenius << ") total=" << c.total;
  return os.str();
}

LossComponents run_phase(ModelState& s, const MultiModalDataset& ds, const TrainSplit& split,
                         const TrainConfig& cfg, InferenceMode mode, TrainPhase phase,
                         std::uint64_t phase_seed) {
  std::vector<std::size_t> context;
  std::vector<std::size_t> train_pos;  // positions of the training rows within the context
  if (mode == InferenceMode::kInductive) {
    context = split.train;
    train_pos = all_rows(context.size());
  } else {
    context = all_rows(ds.size());
    train_pos = split.train;
  }
  Rng shuffle(phase_seed);
  std::shuffle(train_pos.begin(), train_pos.end(), shuffle);
  const std::size_t bs = effective_batch_size(cfg, train_pos.size());
  const std::vector<Parameter*> params =
      phase == TrainPhase::kFusionGraph ? s.phase1_parameters() : s.phase2_parameters();

  LossComponents mean;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < train_pos.size(); start += bs) {
    BatchSpec batch;
    batch.context = context;
    batch.positions.assign(train_pos.begin() + static_cast<std::ptrdiff_t>(start),
                           train_pos.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, train_pos.size())));
    batch.sampling = SamplingMode::kRandom;
    batch.sample_seed = derive_seed(phase_seed, batches + 1);
    LossComponents c;
    try {
      Tape tape;
      Var loss = joint_loss(tape, s, ds, batch, cfg, phase, &c);
      if (!std::isfinite(c.total)) throw NumericError("non-finite joint loss");
      tape.backward(loss);
      adam_step(s.optimizer, params);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(s.epoch) + ", phase " +
                         (phase == TrainPhase::kFusionGraph ? "1" : "2") + ", batch " +
                         std::to_string(batches) + ": " + e.what() + " [" + describe(c) + "]");
    }
    accumulate(mean, c);
    ++batches;
  }
  if (batches > 0) divide(mean, static_cast<double>(batches));
  return mean;
}

/// Graph plus embeddings over graph rows followed by unseen rows, with unseen
/// rows linked one way into the graph.
struct ExtendedGraph {
  Matrix embeddings;
  Matrix adjacency;
};

ExtendedGraph extend(const ModelState& s, const TrainConfig& cfg, const Matrix& h_graph,
                     const Matrix& h_new) {
  const std::size_t n = h_graph.rows();
  const std::size_t u = h_new.rows();
  const Matrix base = build_graph(s, cfg, h_graph).adjacency;
  const Matrix links = s.graph_mode == GraphMode::kLearned ? extend_graph(h_graph, h_new, s.agl)
                                                           : knn_extend(h_graph, h_new, cfg.knn_k);
  ExtendedGraph g;
  g.embeddings = Matrix(n + u, h_graph.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy(h_graph.row(i).begin(), h_graph.row(i).end(), g.embeddings.row(i).begin());
  for (std::size_t i = 0; i < u; ++i) std::copy(h_new.row(i).begin(), h_new.row(i).end(), g.embeddings.row(n + i).begin());
  g.adjacency = Matrix(n + u, n + u);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(base.row(i).begin(), base.row(i).end(), g.adjacency.row(i).begin());
  for (std::size_t i = 0; i < u; ++i) {
    auto row = g.adjacency.row(n + i);
    std::copy(links.row(i).begin(), links.row(i).end(), row.begin());
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] >= kCoincidentWeight) {
        row[j] = 0.0;
        break;
      }
    }
  }
  return g;
}

Matrix predict_on_graph(const ModelState& s, const TrainConfig& cfg, const Matrix& embeddings,
                        const Matrix& adjacency, std::span<const std::size_t> targets) {
  if (targets.empty()) return Matrix(0, s.gnn.num_classes());
  const SampledNeighborhood nb = sample_neighbors(adjacency, targets, cfg.fanouts, cfg.eval_sampling,
                                                  derive_seed(s.seed, kEvalStream));
  return gcn_forward(embeddings, adjacency, nb, s.gnn);
}

}  // namespace

// ---- ModelState ----

ModelState ModelState::init(const DatasetShape& shape, const TrainConfig& cfg) {
  cfg.validate();
  if (shape.modality_dims.empty()) throw DataError("dataset has no modalities");
  if (shape.num_classes < 2) throw DataError("at least two classes are required");
  ModelState s;
  s.fusion = cfg.fusion;
  s.graph_mode = cfg.graph_mode;
  s.seed = cfg.seed;
  s.shape = shape;
  Rng rng(derive_seed(cfg.seed, kInitStream));
  s.marl = MarlParams::init(shape.modality_dims, cfg.d_f, cfg.d_h, cfg.alpha, cfg.tau, cfg.marl_bias, rng);
  const std::size_t d_in = s.embedding_dim();
  s.agl = GraphLearnerParams::init(d_in, cfg.d_A, cfg.theta, cfg.beta, cfg.gamma, rng);
  s.gnn = GcnParams::init(d_in, cfg.d_g, shape.num_classes, rng);
  s.aux = AuxClassifierParams::init(shape.modality_dims.size(), shape.num_classes, rng);
  s.optimizer.options = AdamOptions{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  return s;
}

std::size_t ModelState::embedding_dim() const {
  return fusion == FusionMode::kMarl ? marl.embedding_dim() : marl.hidden_dim();
}

std::vector<Parameter*> ModelState::fusion_parameters() {
  if (fusion == FusionMode::kMarl) return marl.parameters();
  std::vector<Parameter*> out;
  for (auto& w : marl.projections) out.push_back(&w);
  for (auto& b : marl.projection_biases) out.push_back(&b);
  out.push_back(&marl.output);
  return out;
}

std::vector<Parameter*> ModelState::phase1_parameters() {
  auto out = fusion_parameters();
  if (graph_mode == GraphMode::kLearned) out.push_back(&agl.metric);
  return out;
}

std::vector<Parameter*> ModelState::phase2_parameters() {
  std::vector<Parameter*> out;
  if (graph_mode == GraphMode::kLearned) out.push_back(&agl.metric);
  for (auto* p : gnn.parameters()) out.push_back(p);
  if (uses_aux())
    for (auto* p : aux.parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> ModelState::all_parameters() {
  std::vector<Parameter*> out = marl.parameters();
  out.push_back(&agl.metric);
  for (auto* p : gnn.parameters()) out.push_back(p);
  for (auto* p : aux.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ModelState::all_parameters() const {
  const auto params = const_cast<ModelState*>(this)->all_parameters();
  return {params.begin(), params.end()};
}

void ModelState::validate() const {
  marl.validate();
  agl.validate();
  gnn.validate();
  aux.validate();
  if (marl.num_modalities() != shape.modality_dims.size()) {
    throw DimensionError("model has " + std::to_string(marl.num_modalities()) +
                         " modality projections for a dataset with " +
                         std::to_string(shape.modality_dims.size()));
  }
  for (std::size_t m = 0; m < marl.num_modalities(); ++m) {
    if (marl.modality_dim(m) != shape.modality_dims[m]) {
      throw DimensionError("projection " + std::to_string(m) + " expects " +
                           std::to_string(marl.modality_dim(m)) + " features, dataset has " +
                           std::to_string(shape.modality_dims[m]));
    }
  }
  if (agl.input_dim() != embedding_dim() || gnn.input_dim() != embedding_dim()) {
    throw DimensionError("graph learner or GCN input width differs from the embedding width " +
                         std::to_string(embedding_dim()));
  }
  if (gnn.num_classes() != shape.num_classes || aux.weights.value.cols() != shape.num_classes) {
    throw DimensionError("classifier width differs from the class count");
  }
}

// ---- Forward helpers ----

Matrix embed(const ModelState& state, std::span<const Matrix> modalities) {
  Tape tape;
  const Bound b = bind_constants(tape, state);
  const std::vector<Var> inputs = feature_vars(tape, modalities);
  return encode(state.fusion, b.marl, inputs).h.value();
}

double knn_bandwidth(const Matrix& embeddings) {
  const double sigma = median_pairwise_distance(embeddings);
  return sigma > 0.0 ? sigma : 1.0;
}

LearnedGraph build_graph(const ModelState& state, const TrainConfig& cfg, const Matrix& embeddings,
                         std::vector<std::string> node_ids) {
  if (state.graph_mode == GraphMode::kLearned) {
    return learn_graph(embeddings, state.agl, std::move(node_ids));
  }
  LearnedGraph g;
  g.adjacency = knn_graph_matrix(embeddings, cfg.knn_k);
  g.node_ids = std::move(node_ids);
  g.theta = state.agl.theta;
  g.method = "knn-rbf";
  return g;
}

std::size_t effective_batch_size(const TrainConfig& cfg, std::size_t num_train) {
  const std::size_t bs = cfg.batch_size == 0 ? std::min<std::size_t>(64, num_train) : cfg.batch_size;
  return std::max<std::size_t>(1, bs);
}

// ---- Joint loss ----

Var joint_loss(Tape& tape, ModelState& state, const MultiModalDataset& ds, const BatchSpec& batch,
               const TrainConfig& cfg, TrainPhase phase, LossComponents* components) {
  const Bound b = bind_state(tape, state, phase);
  return record_joint_loss(tape, state, b, ds, batch, cfg, components);
}

LossComponents evaluate_joint_loss(const ModelState& state, const MultiModalDataset& ds,
                                   const BatchSpec& batch, const TrainConfig& cfg) {
  Tape tape;
  const Bound b = bind_constants(tape, state);
  LossComponents c;
  record_joint_loss(tape, state, b, ds, batch, cfg, &c);
  return c;
}

// ---- Training ----

EpochRecord train_epoch(ModelState& state, const MultiModalDataset& ds, const TrainSplit& split,
                        const TrainConfig& cfg, InferenceMode mode) {
  if (split.train.empty()) throw DataError("training split is empty");
  const std::uint64_t epoch_seed = derive_seed(derive_seed(state.seed, kEpochStream), state.epoch);
  EpochRecord rec;
  rec.epoch = state.epoch;
  rec.phase1 = run_phase(state, ds, split, cfg, mode, TrainPhase::kFusionGraph,
                         derive_seed(epoch_seed, 1));
  rec.phase2 = run_phase(state, ds, split, cfg, mode, TrainPhase::kGraphPredictor,
                         derive_seed(epoch_seed, 2));
  rec.val_acc = std::numeric_limits<double>::quiet_NaN();
  rec.val_loss = std::numeric_limits<double>::quiet_NaN();
  ++state.epoch;
  return rec;
}

FitResult fit(const MultiModalDataset& ds, const TrainSplit& split, const TrainConfig& cfg,
              InferenceMode mode, const EpochCallback& on_epoch) {
  ds.validate();
  if (ds.has_missing()) throw DataError("fit requires a dataset without missing values");
  ModelState state = ModelState::init(shape_of(ds), cfg);
  FitResult result;
  result.best_val_acc = std::numeric_limits<double>::quiet_NaN();
  result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  bool have_best = false;
  const std::vector<int> val_labels = ds.labels_of(split.val);

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochRecord rec = train_epoch(state, ds, split, cfg, mode);
    const bool last = e + 1 == cfg.epochs;
    if (!split.val.empty() && ((e + 1) % cfg.eval_every == 0 || last)) {
      const Matrix logits = mode == InferenceMode::kInductive
                                ? inductive_predict(state, cfg, ds, split.train, split.val)
                                : transductive_predict(state, cfg, ds, split.val);
      const std::vector<int> pred = argmax_rows(logits);
      std::size_t hit = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == val_labels[i] ? 1 : 0;
      rec.val_acc = static_cast<double>(hit) / static_cast<double>(pred.size());
      rec.val_loss = cross_entropy(logits, val_labels);
      if (!have_best || rec.val_acc > result.best_val_acc ||
          (rec.val_acc == result.best_val_acc && rec.val_loss < result.best_val_loss)) {
        have_best = true;
        result.best_val_acc = rec.val_acc;
        result.best_val_loss = rec.val_loss;
        result.best_epoch = rec.epoch;
        result.state = state;
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!have_best) {
    result.state = std::move(state);
    result.best_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
  }
  return result;
}

// ---- Prediction ----

Matrix transductive_predict(const ModelState& state, const TrainConfig& cfg,
                            const MultiModalDataset& ds, std::span<const std::size_t> targets) {
  const std::vector<std::size_t> rows = all_rows(ds.size());
  const Matrix h = embed(state, ds.features(rows));
  const Matrix a = build_graph(state, cfg, h).adjacency;
  return predict_on_graph(state, cfg, h, a, targets);
}

Matrix inductive_predict(const ModelState& state, const TrainConfig& cfg, const MultiModalDataset& ds,
                         std::span<const std::size_t> graph_rows, std::span<const Matrix> unseen) {
  if (unseen.size() != ds.num_modalities()) {
    throw DataError("unseen patients have " + std::to_string(unseen.size()) +
                    " modalities, expected " + std::to_string(ds.num_modalities()));
  }
  for (std::size_t m = 0; m < unseen.size(); ++m) {
    if (unseen[m].cols() != ds.modalities[m].dim() || unseen[m].rows() != unseen[0].rows()) {
      throw DataError("unseen modality " + std::to_string(m) + " has shape " +
                      unseen[m].shape_string() + ", expected " + std::to_string(ds.modalities[m].dim()) +
                      " columns and one row per patient");
    }
  }
  const std::size_t u = unseen.empty() ? 0 : unseen[0].rows();
  if (u == 0) return Matrix(0, state.gnn.num_classes());
  if (graph_rows.empty()) throw DataError("inductive prediction needs a nonempty graph");
  const Matrix h_graph = embed(state, ds.features(graph_rows));
  const Matrix h_new = embed(state, unseen);
  const ExtendedGraph g = extend(state, cfg, h_graph, h_new);
  std::vector<std::size_t> targets(u);
  std::iota(targets.begin(), targets.end(), graph_rows.size());
  return predict_on_graph(state, cfg, g.embeddings, g.adjacency, targets);
}

Matrix inductive_predict(const ModelState& state, const TrainConfig& cfg, const MultiModalDataset& ds,
                         std::span<const std::size_t> graph_rows,
                         std::span<const std::size_t> unseen_rows) {
  const std::vector<Matrix> unseen = ds.features(unseen_rows);
  return inductive_predict(state, cfg, ds, graph_rows, unseen);
}

}  // namespace mmgl
