#pragma once

// Modality-aware representation learning.
//
// Each patient's modalities are projected to a common width d_f and treated as
// M tokens. Scaled dot-product attention between the tokens yields an M x M
// row-stochastic matrix P_u. The shared embedding h_sh aggregates value vectors
// through (alpha I + P_u); the specified embedding h_sp is P_u itself, flattened
// row by row. The patient embedding is h = [h_sh, h_sp] of width d_h + M^2.
//
// Weights follow column-vector orientation (out x in): a projection W maps a
// column x to W x. Batched routes therefore multiply row blocks by W^T.

#include <cstdint>
#include <span>
#include <vector>

#include "mmgl/autodiff.hpp"
#include "mmgl/matrix.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

struct MarlParams {
  std::vector<Parameter> projections;       // W^m: d_f x d_m
  std::vector<Parameter> projection_biases;  // 1 x d_f each; empty unless biases are on
  Parameter query;                          // W_q: d_f x d_f
  Parameter key;                            // W_k: d_f x d_f
  Parameter value;                          // W_v: d_f x d_f
  Parameter output;                         // W_h: d_h x (d_f * M)
  double alpha = 1.0;
  double tau = 1.0;

  /// Fan-in uniform initialization. tau <= 0 selects the default sqrt(d_f).
  static MarlParams init(std::span<const std::size_t> modality_dims, std::size_t d_f,
                         std::size_t d_h, double alpha, double tau, bool use_bias, Rng& rng);

  std::size_t num_modalities() const { return projections.size(); }
  std::size_t shared_dim() const { return feature_dim() * num_modalities(); }
  std::size_t feature_dim() const { return query.value.rows(); }
  std::size_t hidden_dim() const { return output.value.rows(); }
  std::size_t embedding_dim() const { return hidden_dim() + num_modalities() * num_modalities(); }
  std::size_t modality_dim(std::size_t m) const { return projections[m].value.cols(); }
  bool has_bias() const { return !projection_biases.empty(); }

  /// Throws ParameterError / DimensionError when the invariants do not hold.
  void validate() const;

  std::vector<Parameter*> parameters();
};

// ---- Per-patient route (plain matrices) ----

/// Columns are W^m x^m_u; result is d_f x M.
Matrix project_modalities(std::span<const std::vector<double>> features, const MarlParams& params);

/// P_u with P_ij = softmax_j(q_i . k_j / tau).
Matrix inter_modal_attention(const Matrix& x_u, const MarlParams& params);

/// V_hat (d_f x M) with V_hat^T = (alpha I + P_u) V_u^T and V_u = W_v x_u.
Matrix aggregate_values(const Matrix& x_u, const Matrix& attention, const MarlParams& params);

/// W_h Vec(V_hat^T), where Vec concatenates rows.
std::vector<double> shared_representation(const Matrix& aggregated, const MarlParams& params);

/// Row-wise flattening of P_u.
std::vector<double> specified_representation(const Matrix& attention);

/// Inverse of specified_representation.
Matrix attention_from_specified(std::span<const double> h_sp, std::size_t num_modalities);

/// Column means of P_u; sums to 1 for a row-stochastic input.
std::vector<double> contribution_scores(const Matrix& attention);

// ---- Batched route ----

struct ModalityAwareEmbedding {
  Matrix shared;     // B x d_h
  Matrix specified;  // B x M^2
  Matrix combined;   // B x (d_h + M^2)

  std::size_t size() const { return combined.rows(); }
  std::size_t num_modalities() const;
  Matrix attention(std::size_t patient) const;
};

/// Vars of MarlParams bound to one tape.
struct MarlVars {
  std::vector<Var> projections;
  std::vector<Var> projection_biases;
  Var query, key, value, output;
  double alpha = 1.0;
  double tau = 1.0;
};

MarlVars bind(Tape& tape, MarlParams& params, bool trainable);

struct MarlOutput {
  Var shared;
  Var specified;
  Var combined;
};

/// Differentiable forward over a batch. `modalities[m]` is B x d_m.
MarlOutput marl_forward(const MarlVars& vars, std::span<const Var> modalities);

/// Non-differentiable convenience wrapper. `modalities[m]` is B x d_m.
ModalityAwareEmbedding marl_forward(const MarlParams& params, std::span<const Matrix> modalities);

}  // namespace mmgl
