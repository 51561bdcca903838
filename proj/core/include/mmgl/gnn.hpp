#pragma once

// Two-layer graph convolutional predictor and the auxiliary classifier.
//
// Dense mode propagates with A_hat = D^-1/2 (A + I) D^-1/2 over the whole
// graph. Sampled mode runs the same two layers over a 2-hop sampled
// neighborhood of a set of targets. Sampled aggregation for node i is
//
//   out_i = x_i / D_i + (n_i / s_i) * sum_{j in S_i} A_ij x_j / sqrt(D_i D_j)
//
// where D is the degree of A + I on the full graph, n_i the number of nonzero
// neighbors of i and S_i the s_i sampled ones. With every neighbor kept this
// is exactly row i of A_hat X; with a random sample it is an unbiased estimate.
// A node left with no sampled neighbors (fanout 0) aggregates only itself,
// out_i = x_i, so a zero fanout turns the predictor into a row-wise MLP.
//
// Weights use row orientation (in x out): a layer maps X to X W.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmgl/autodiff.hpp"
#include "mmgl/matrix.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

struct GcnParams {
  Parameter layer1;  // d_in x d_g
  Parameter layer2;  // d_g x C

  static GcnParams init(std::size_t d_in, std::size_t d_g, std::size_t num_classes, Rng& rng);
  void validate() const;
  std::size_t input_dim() const { return layer1.value.rows(); }
  std::size_t num_classes() const { return layer2.value.cols(); }
  std::vector<Parameter*> parameters() { return {&layer1, &layer2}; }
};

/// Single affine layer on the modality-specified embedding H_sp.
struct AuxClassifierParams {
  Parameter weights;  // M^2 x C
  Parameter bias;     // 1 x C

  static AuxClassifierParams init(std::size_t num_modalities, std::size_t num_classes, Rng& rng);
  void validate() const;
  std::vector<Parameter*> parameters() { return {&weights, &bias}; }
};

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
Matrix normalize_adjacency(const Matrix& adjacency);

enum class SamplingMode { kRandom, kFull };

/// One aggregation layer: each dst node with the neighbors it aggregates.
struct NeighborBlock {
  std::vector<std::size_t> dst;
  std::vector<std::vector<std::size_t>> neighbors;  // graph node ids, self excluded
  std::vector<std::vector<double>> weights;         // A_ij for each kept neighbor
  std::vector<std::size_t> population;              // number of nonzero neighbors of dst

  std::size_t size() const { return dst.size(); }
};

struct SampledNeighborhood {
  std::vector<std::size_t> targets;
  NeighborBlock hop1;  // neighbors of the targets (output layer)
  NeighborBlock hop2;  // neighbors of targets and hop-1 nodes (first layer)
};

/// Draws up to fanouts[0] neighbors per target and fanouts[1] per first-layer
/// node, uniformly without replacement among nonzero-weight neighbors.
/// kFull keeps every neighbor. Row i of `adjacency` lists the neighbors of i.
/// Throws DataError for a target outside the graph.
SampledNeighborhood sample_neighbors(const Matrix& adjacency, std::span<const std::size_t> targets,
                                     std::array<std::size_t, 2> fanouts, SamplingMode mode,
                                     Rng& rng);
SampledNeighborhood sample_neighbors(const Matrix& adjacency, std::span<const std::size_t> targets,
                                     std::array<std::size_t, 2> fanouts, SamplingMode mode,
                                     std::uint64_t seed);

/// Dense forward: A_hat relu(A_hat H W1) W2.
Matrix gcn_forward(const Matrix& embeddings, const Matrix& normalized_adjacency,
                   const GcnParams& params);
/// Sampled forward; one logit row per target, in target order.
Matrix gcn_forward(const Matrix& embeddings, const Matrix& adjacency,
                   const SampledNeighborhood& neighborhood, const GcnParams& params);

Matrix aux_forward(const Matrix& specified, const AuxClassifierParams& params);

namespace ad {

Var normalize_adjacency(const Var& adjacency);

/// Sampled aggregation of `block`. Row r of `features` belongs to the graph
/// node k with row_of[k] == r; every dst and neighbor must be mapped.
Var block_aggregate(const Var& features, std::span<const std::ptrdiff_t> row_of,
                    const Var& adjacency, const Var& degree, const NeighborBlock& block);

Var gcn_dense(const Var& embeddings, const Var& normalized_adjacency, const Var& layer1,
              const Var& layer2);
Var gcn_sampled(const Var& embeddings, const Var& adjacency,
                const SampledNeighborhood& neighborhood, const Var& layer1, const Var& layer2);
Var aux_forward(const Var& specified, const Var& weights, const Var& bias);

}  // namespace ad
}  // namespace mmgl
