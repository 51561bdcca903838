#include "mmgl_cli/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "mmgl/checkpoint.hpp"
#include "mmgl/config.hpp"
#include "mmgl/data.hpp"
#include "mmgl/errors.hpp"
#include "mmgl/evaluation.hpp"
#include "mmgl/graph_io.hpp"
#include "mmgl/marl.hpp"
#include "mmgl/synthetic.hpp"
#include "mmgl/trainer.hpp"

namespace mmgl::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kMetricsFormatVersion = 1;

struct Options {
  std::string config_path;
  std::string dataset;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t folds = 10;
  std::string mode = "inductive";
  std::string spec_path;
  std::string checkpoint;
  std::size_t repeats = 1;
  double missing_threshold = 0.05;
};

TrainConfig load_train_config(const Options& o) {
  TrainConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const Options& o, const std::string& name) {
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / name;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f.precision(17);
  return f;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : ""; }

MultiModalDataset load_clean(const Options& o) {
  if (o.dataset.empty()) throw ParameterError("--dataset is required");
  return drop_high_missing(load_dataset(o.dataset), o.missing_threshold);
}

/// A model for `ds`: loaded from --checkpoint or fitted on every row.
struct Trained {
  ModelState state;
  TrainConfig cfg;
  MultiModalDataset data;  // preprocessed
  std::vector<EpochRecord> history;
};

Trained obtain_model(const Options& o, const MultiModalDataset& ds) {
  Trained t;
  const std::vector<std::size_t> rows = all_rows(ds.size());
  if (!o.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(o.checkpoint, shape_of(ds));
    t.state = std::move(ck.state);
    t.cfg = ck.config;
    t.data = preprocess(ds, rows);
    return t;
  }
  t.cfg = load_train_config(o);
  const PreparedSplit p = prepare_split(ds, rows, {}, t.cfg, derive_seed(t.cfg.seed, 12));
  FitResult fr = fit(p.data, p.split, t.cfg, parse_inference_mode(o.mode));
  t.state = std::move(fr.state);
  t.history = std::move(fr.history);
  t.data = p.data;
  return t;
}

void write_history(const Options& o, const std::vector<EpochRecord>& history) {
  auto f = open_out(o, "history.csv");
  f << "epoch,phase1_total,phase1_gnn,phase1_graph,phase1_aux,phase2_total,phase2_gnn,"
       "phase2_graph,phase2_aux,smoothness,connectivity,frobenius,val_acc,val_loss\n";
  for (const auto& r : history) {
    f << r.epoch << ',' << cell(r.phase1.total) << ',' << cell(r.phase1.gnn) << ','
      << cell(r.phase1.graph) << ',' << cell(r.phase1.aux) << ',' << cell(r.phase2.total) << ','
      << cell(r.phase2.gnn) << ',' << cell(r.phase2.graph) << ',' << cell(r.phase2.aux) << ','
      << cell(r.phase2.smoothness) << ',' << cell(r.phase2.connectivity) << ','
      << cell(r.phase2.frobenius) << ',' << cell(r.val_acc) << ',' << cell(r.val_loss) << '\n';
  }
}

// ---- Subcommands ----

int cmd_synth(const Options& o, std::ostream& out) {
  SyntheticSpec spec;
  if (!o.spec_path.empty()) spec = load_synthetic_spec(o.spec_path);
  if (o.seed) spec.seed = *o.seed;
  const MultiModalDataset ds = synthetic_generate(spec);
  const std::string manifest = save_dataset(ds, o.out);
  out << "wrote " << ds.size() << " patients, " << ds.num_modalities() << " modalities to "
      << manifest << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const MultiModalDataset ds = load_clean(o);
  Options fresh = o;
  fresh.checkpoint.clear();
  Trained t = obtain_model(fresh, ds);
  fs::create_directories(o.out);
  save_checkpoint((fs::path(o.out) / "checkpoint.json").string(), t.state, t.cfg);
  write_history(o, t.history);
  out << "trained " << t.history.size() << " epochs; checkpoint at "
      << (fs::path(o.out) / "checkpoint.json").string() << '\n';
  return kOk;
}

void fold_json(json& j, const FoldOutcome& f) {
  j = {{"fold", f.fold},
       {"acc", f.metrics.acc},
       {"auc", f.metrics.auc},
       {"sen", number_or_null(f.metrics.sen)},
       {"spe", number_or_null(f.metrics.spe)},
       {"confusion", f.metrics.confusion},
       {"best_epoch", f.best_epoch},
       {"train_size", f.train_size},
       {"val_size", f.val_size},
       {"test_size", f.test_size}};
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const MultiModalDataset ds = load_clean(o);
  const TrainConfig cfg = load_train_config(o);
  const InferenceMode mode = parse_inference_mode(o.mode);
  if (o.folds == 0) throw ParameterError("--folds must be >= 1");
  const CvResult r = o.folds == 1 ? run_holdout(ds, cfg, 0.2, mode, 1.0)
                                  : run_cv(ds, cfg, CvOptions{o.folds, mode, 1.0});
  auto summary = [](const Summary& s) {
    return json{{"mean", number_or_null(s.mean)}, {"std", number_or_null(s.stddev)}};
  };
  json j;
  j["format_version"] = kMetricsFormatVersion;
  j["mode"] = to_string(mode);
  j["folds"] = r.folds.size();
  j["std_kind"] = "sample standard deviation across folds (n - 1)";
  j["acc"] = summary(r.report.acc);
  j["auc"] = summary(r.report.auc);
  j["sen"] = summary(r.report.sen);
  j["spe"] = summary(r.report.spe);
  j["per_fold"] = json::array();
  for (const auto& f : r.folds) {
    json fj;
    fold_json(fj, f);
    j["per_fold"].push_back(fj);
  }
  open_out(o, "metrics.json") << j.dump(2) << '\n';
  auto csv = open_out(o, "folds.csv");
  csv << "fold,acc,auc,sen,spe,best_epoch,train_size,val_size,test_size\n";
  for (const auto& f : r.folds) {
    csv << f.fold << ',' << cell(f.metrics.acc) << ',' << cell(f.metrics.auc) << ','
        << cell(f.metrics.sen) << ',' << cell(f.metrics.spe) << ',' << f.best_epoch << ','
        << f.train_size << ',' << f.val_size << ',' << f.test_size << '\n';
  }
  out << "ACC " << r.report.acc.mean << " (std " << r.report.acc.stddev << "), AUC "
      << r.report.auc.mean << " (std " << r.report.auc.stddev << ") over " << r.folds.size()
      << " fold(s)\n";
  return kOk;
}

json quality_json(const GraphQualityReport& q) {
  return {{"method", q.method},
          {"median", number_or_null(q.median)},
          {"mean", number_or_null(q.mean)},
          {"isolated_count", q.isolated_count},
          {"edge_count", q.edge_count},
          {"histogram", q.histogram}};
}

int cmd_analyze_graph(const Options& o, std::ostream& out) {
  const MultiModalDataset ds = load_clean(o);
  const Trained t = obtain_model(o, ds);
  const GraphComparison c = compare_graphs(t.state, t.cfg, t.data, all_rows(t.data.size()));
  fs::create_directories(o.out);
  save_graph(c.learned, (fs::path(o.out) / "learned_graph.csv").string());
  save_graph(c.knn, (fs::path(o.out) / "knn_graph.csv").string());
  json j;
  j["format_version"] = kMetricsFormatVersion;
  j["methods"] = {quality_json(c.learned_quality), quality_json(c.knn_quality)};
  open_out(o, "graph_quality.json") << j.dump(2) << '\n';
  auto csv = open_out(o, "graph_quality.csv");
  csv << "patient_id,label,learned,knn_rbf\n";
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    csv << t.data.patient_ids[i] << ',' << t.data.labels[i] << ','
        << cell(c.learned_quality.proportion[i]) << ',' << cell(c.knn_quality.proportion[i]) << '\n';
  }
  out << "median incorrect-link proportion: learned " << c.learned_quality.median << ", knn-rbf "
      << c.knn_quality.median << '\n';
  return kOk;
}

int cmd_contributions(const Options& o, std::ostream& out) {
  const MultiModalDataset ds = load_clean(o);
  const Trained t = obtain_model(o, ds);
  if (t.state.fusion != FusionMode::kMarl) {
    throw ParameterError("contribution scores need the attention fusion (fusion = marl)");
  }
  const std::size_t M = t.data.num_modalities();
  const ModalityAwareEmbedding emb = marl_forward(t.state.marl, t.data.features(all_rows(t.data.size())));
  auto csv = open_out(o, "contributions.csv");
  csv << "patient_id,label";
  for (const auto& m : t.data.modalities) csv << ',' << m.name;
  csv << '\n';
  const std::size_t C = t.data.num_classes();
  std::vector<std::vector<double>> class_sum(C, std::vector<double>(M, 0.0));
  std::vector<std::size_t> class_count(C, 0);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const std::vector<double> score = contribution_scores(emb.attention(i));
    const auto y = static_cast<std::size_t>(t.data.labels[i]);
    csv << t.data.patient_ids[i] << ',' << t.data.labels[i];
    for (std::size_t m = 0; m < M; ++m) {
      csv << ',' << format_double(score[m]);
      class_sum[y][m] += score[m];
    }
    csv << '\n';
    ++class_count[y];
  }
  auto by_class = open_out(o, "contributions_by_class.csv");
  by_class << "class,count";
  for (const auto& m : t.data.modalities) by_class << ',' << m.name;
  by_class << '\n';
  for (std::size_t c = 0; c < C; ++c) {
    by_class << (t.data.class_names.empty() ? std::to_string(c) : t.data.class_names[c]) << ','
             << class_count[c];
    for (std::size_t m = 0; m < M; ++m) {
      by_class << ','
               << (class_count[c] == 0 ? std::string()
                                       : format_double(class_sum[c][m] / static_cast<double>(class_count[c])));
    }
    by_class << '\n';
  }
  out << "wrote contribution scores for " << t.data.size() << " patients\n";
  return kOk;
}

int cmd_label_sweep(const Options& o, std::ostream& out) {
  const MultiModalDataset ds = load_clean(o);
  const TrainConfig cfg = load_train_config(o);
  const std::vector<double> fractions = default_label_fractions();
  const std::vector<SweepRow> rows = label_sweep(ds, cfg, fractions, o.repeats, 1.0);
  auto csv = open_out(o, "label_sweep.csv");
  csv << "fraction,labeled,acc_mean,acc_std,auc_mean,auc_std\n";
  for (const auto& r : rows) {
    csv << format_double(r.fraction) << ',' << r.labeled << ',' << cell(r.acc.mean) << ','
        << cell(r.acc.stddev) << ',' << cell(r.auc.mean) << ',' << cell(r.auc.stddev) << '\n';
  }
  out << "wrote " << rows.size() << " sweep rows\n";
  return kOk;
}

int fail(std::ostream& err, int code, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal graph learning: training, evaluation and analysis"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  };
  auto add_training = [&o, &add_common](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--dataset", o.dataset, "Dataset manifest (JSON)")->required();
    sub->add_option("--config", o.config_path, "key = value file overriding training defaults");
    sub->add_option("--mode", o.mode, "inductive or transductive")
        ->check(CLI::IsMember({"inductive", "transductive"}))
        ->capture_default_str();
    sub->add_option("--missing-threshold", o.missing_threshold,
                    "Drop patients missing more than this share of features")
        ->capture_default_str();
  };

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  add_common(synth);
  synth->add_option("--spec", o.spec_path, "Synthetic spec (JSON)");

  CLI::App* train = app.add_subcommand("train", "Fit a model; write checkpoint and history");
  add_training(train);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Cross-validate; write metrics");
  add_training(evaluate);
  evaluate->add_option("--folds", o.folds, "Number of folds (1 = single 80/20 split)")
      ->capture_default_str();

  CLI::App* analyze = app.add_subcommand("analyze-graph", "Compare learned and kNN graphs");
  add_training(analyze);
  analyze->add_option("--checkpoint", o.checkpoint, "Use a trained checkpoint instead of fitting");

  CLI::App* contrib = app.add_subcommand("contributions", "Per-patient modality contributions");
  add_training(contrib);
  contrib->add_option("--checkpoint", o.checkpoint, "Use a trained checkpoint instead of fitting");

  CLI::App* sweep = app.add_subcommand("label-sweep", "Transductive label-fraction sweep");
  add_training(sweep);
  sweep->add_option("--repeats", o.repeats, "Seeds per fraction")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kUsage, "usage", e.what());
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*train) return cmd_train(o, out);
    if (*evaluate) return cmd_evaluate(o, out);
    if (*analyze) return cmd_analyze_graph(o, out);
    if (*contrib) return cmd_contributions(o, out);
    if (*sweep) return cmd_label_sweep(o, out);
    return fail(err, kUsage, "usage", "no subcommand given");
  } catch (const ParameterError& e) {
    return fail(err, kUsage, "usage", e.what());
  } catch (const DataError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const DimensionError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const NumericError& e) {
    return fail(err, kNumericFailure, "numeric", e.what());
  } catch (const std::exception& e) {
    return fail(err, kNumericFailure, "internal", e.what());
  }
}

}  // namespace mmgl::cli
