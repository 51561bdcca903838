#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmgl/gnn.hpp"

namespace mmgl {

/// How per-modality features become the node embedding H.
enum class FusionMode {
  kMarl,    // attention fusion, H = [h_sh, h_sp]
  kConcat,  // W_h applied to the concatenated projections; no h_sp, no auxiliary head
};

/// How the patient graph is built from H.
enum class GraphMode {
  kLearned,  // thresholded learned cosine metric
  kKnn,      // fixed kNN graph with RBF weights (sigma = median pairwise distance)
};

enum class InferenceMode { kInductive, kTransductive };

struct TrainConfig {
  std::size_t d_f = 16;
  std::size_t d_h = 16;
  std::size_t d_g = 16;
  std::size_t d_A = 0;  // 0: square metric over the embedding width

  double alpha = 1.0;
  double tau = 0.0;  // 0: sqrt(d_f)
  double theta = 0.5;
  double beta = 1.0;
  double gamma = 1.0;
  double lambda = 1.0;
  double eta = 1.0;

  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::size_t epochs = 200;
  std::size_t batch_size = 0;  // 0: min(64, number of training nodes)
  std::array<std::size_t, 2> fanouts{10, 10};
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  double val_fraction = 0.1;  // share of training rows held out for model selection

  bool marl_bias = false;
  FusionMode fusion = FusionMode::kMarl;
  GraphMode graph_mode = GraphMode::kLearned;
  std::size_t knn_k = 10;
  SamplingMode eval_sampling = SamplingMode::kFull;

  /// Throws ParameterError on an out-of-range field.
  void validate() const;
};

/// Sets one field from its textual form. Throws ParameterError for an unknown
/// key or an unparsable value.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Every field as (key, value) text, in a fixed order. Doubles use the
/// shortest representation that round-trips exactly.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);

/// Parses `key = value` lines over `base`. Blank lines and lines starting
/// with '#' are skipped. Throws ParameterError with the line number.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});

std::string to_string(FusionMode mode);
std::string to_string(GraphMode mode);
std::string to_string(InferenceMode mode);
std::string to_string(SamplingMode mode);
InferenceMode parse_inference_mode(std::string_view text);

/// Shortest round-trip text for a double.
std::string format_double(double value);

}  // namespace mmgl
