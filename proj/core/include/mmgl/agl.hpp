#pragma once

// Adaptive graph learning: a patient graph built from embeddings with a
// learnable weighted cosine metric, thresholded into a sparse nonnegative
// adjacency, plus the regularizers that keep it smooth, connected and sparse.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmgl/autodiff.hpp"
#include "mmgl/matrix.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

/// Rows of a projected embedding with norm below this are rejected.
inline constexpr double kMinProjectedNorm = 1e-12;
/// Row sums of A are clamped here inside the log barrier.
inline constexpr double kMinDegree = 1e-12;

struct GraphLearnerParams {
  Parameter metric;  // W_A: d_A x d_in (column-vector orientation)
  double theta = 0.5;
  double beta = 1.0;
  double gamma = 1.0;

  /// d_A == 0 selects a square metric (d_A = d_in).
  static GraphLearnerParams init(std::size_t d_in, std::size_t d_A, double theta, double beta,
                                 double gamma, Rng& rng);
  void validate() const;
  std::size_t input_dim() const { return metric.value.cols(); }
};

struct LearnedGraph {
  Matrix adjacency;
  std::vector<std::string> node_ids;
  double theta = 0.5;
  std::string method = "learned";

  std::size_t size() const { return adjacency.rows(); }
  std::size_t edge_count() const;
};

// ---- Plain routes ----

/// S_ij = cos(W_A h_i, W_A h_j), clamped to [-1, 1], with S_ii = 1. Throws
/// NumericError naming the patient (by id when given) whose projection has a
/// near-zero norm.
Matrix similarity_matrix(const Matrix& embeddings, const GraphLearnerParams& params,
                         std::span<const std::string> node_ids = {});

/// One entry of the threshold map: (s + 1) / 2 zeroed below theta, survivors
/// rescaled from [theta, 1] to [0, 1]. Evaluated as (s - (2 theta - 1)) / (2 - 2 theta)
/// so that theta = 0.5 reproduces max(0, s) bit for bit.
double sparsify_value(double s, double theta);

/// Applies sparsify_value entry-wise and zeroes the diagonal.
LearnedGraph sparsify(const Matrix& similarity, double theta);

LearnedGraph learn_graph(const Matrix& embeddings, const GraphLearnerParams& params,
                         std::vector<std::string> node_ids = {});

/// (1 / 2N^2) sum_ij A_ij ||h_i - h_j||^2
double smoothness_loss(const Matrix& adjacency, const Matrix& embeddings);

struct ConnectivityDiagnostics {
  std::size_t clamped_rows = 0;
};

/// -(1/N) sum_i log(max(rowsum_i, kMinDegree))
double connectivity_loss(const Matrix& adjacency, ConnectivityDiagnostics* diagnostics = nullptr);

/// ||A||_F^2 / N^2
double frobenius_term(const Matrix& adjacency);

struct GraphRegularizerTerms {
  double smoothness = 0.0;
  double connectivity = 0.0;
  double frobenius = 0.0;  // already divided by N^2, not yet weighted
  double total = 0.0;      // smoothness + beta * connectivity + gamma * frobenius
};

GraphRegularizerTerms graph_regularizer(const Matrix& adjacency, const Matrix& embeddings,
                                        const GraphLearnerParams& params);

/// kNN graph with RBF weights exp(-d^2 / 2 sigma^2), symmetrized by max.
LearnedGraph knn_rbf_graph(const Matrix& embeddings, std::size_t k, double sigma,
                           std::vector<std::string> node_ids = {});

/// Median Euclidean distance over all unordered pairs.
double median_pairwise_distance(const Matrix& embeddings);

/// Weights from each new node (rows) to each training node (columns), using
/// the same metric and threshold as the training graph. No new-new edges.
Matrix extend_graph(const Matrix& train_embeddings, const Matrix& new_embeddings,
                    const GraphLearnerParams& params);

// ---- Differentiable routes ----
namespace ad {

/// Cosine similarity between all rows of `z`, clamped to [-1, 1], unit diagonal.
Var cosine_similarity(const Var& z);
/// Entry-wise threshold map with zero diagonal; gradient of the exact
/// piecewise-linear map (zero below the threshold).
Var sparsify(const Var& similarity, double theta);
Var smoothness_loss(const Var& adjacency, const Var& embeddings);
Var connectivity_loss(const Var& adjacency);
/// ||A||_F^2 / N^2
Var frobenius_term(const Var& adjacency);

struct GraphRegularizerVars {
  Var smoothness, connectivity, frobenius, total;
};
GraphRegularizerVars graph_regularizer(const Var& adjacency, const Var& embeddings, double beta,
                                       double gamma);

/// sparsify(cosine_similarity(H W_A^T), theta)
Var learn_adjacency(const Var& embeddings, const Var& metric, double theta);

}  // namespace ad
}  // namespace mmgl
