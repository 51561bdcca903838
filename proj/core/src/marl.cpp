#include "mmgl/marl.hpp"

#include <cmath>
#include <string>

#include "mmgl/errors.hpp"

namespace mmgl {

MarlParams MarlParams::init(std::span<const std::size_t> modality_dims, std::size_t d_f,
                            std::size_t d_h, double alpha, double tau, bool use_bias, Rng& rng) {
  if (modality_dims.empty()) throw ParameterError("MARL needs at least one modality");
  if (d_f == 0 || d_h == 0) throw ParameterError("MARL dimensions d_f and d_h must be >= 1");
  MarlParams p;
  const std::size_t M = modality_dims.size();
  for (std::size_t m = 0; m < M; ++m) {
    if (modality_dims[m] == 0) {
      throw ParameterError("modality " + std::to_string(m) + " has zero features");
    }
    p.projections.emplace_back("marl.W" + std::to_string(m),
                               fan_in_uniform(modality_dims[m], d_f, rng));
    // fan_in_uniform draws in (in x out); store transposed as (out x in).
    p.projections.back().value = transpose(p.projections.back().value);
    p.projections.back().zero_grad();
  }
  if (use_bias) {
    for (std::size_t m = 0; m < M; ++m) {
      p.projection_biases.emplace_back("marl.b" + std::to_string(m), Matrix(1, d_f));
    }
  }
  p.query = Parameter("marl.Wq", glorot_uniform(d_f, d_f, rng));
  p.key = Parameter("marl.Wk", glorot_uniform(d_f, d_f, rng));
  p.value = Parameter("marl.Wv", glorot_uniform(d_f, d_f, rng));
  p.output = Parameter("marl.Wh", glorot_uniform(d_h, d_f * M, rng));
  p.alpha = alpha;
  p.tau = tau > 0.0 ? tau : std::sqrt(static_cast<double>(d_f));
  p.validate();
  return p;
}

void MarlParams::validate() const {
  const std::size_t M = num_modalities();
  if (M == 0) throw ParameterError("MARL has no modality projections");
  if (!(alpha >= 0.0)) throw ParameterError("MARL alpha must be >= 0");
  if (!(tau > 0.0)) throw ParameterError("MARL tau must be > 0");
  const std::size_t d_f = feature_dim();
  for (std::size_t m = 0; m < M; ++m) {
    if (projections[m].value.rows() != d_f) {
      throw DimensionError("projection " + std::to_string(m) + " has shape " +
                           projections[m].value.shape_string() + ", expected " +
                           std::to_string(d_f) + " rows");
    }
  }
  if (!projection_biases.empty()) {
    if (projection_biases.size() != M) throw DimensionError("MARL bias count != modality count");
    for (const auto& b : projection_biases) {
      if (b.value.rows() != 1 || b.value.cols() != d_f) {
        throw DimensionError("MARL bias has shape " + b.value.shape_string());
      }
    }
  }
  for (const Parameter* w : {&query, &key, &value}) {
    if (w->value.rows() != d_f || w->value.cols() != d_f) {
      throw DimensionError(w->name + " has shape " + w->value.shape_string());
    }
  }
  if (output.value.cols() != d_f * M || output.value.rows() == 0) {
    throw DimensionError("W_h has shape " + output.value.shape_string() + ", expected (d_h x " +
                         std::to_string(d_f * M) + ")");
  }
}

std::vector<Parameter*> MarlParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& w : projections) out.push_back(&w);
  for (auto& b : projection_biases) out.push_back(&b);
  out.push_back(&query);
  out.push_back(&key);
  out.push_back(&value);
  out.push_back(&output);
  return out;
}

Matrix project_modalities(std::span<const std::vector<double>> features, const MarlParams& params) {
  const std::size_t M = params.num_modalities();
  if (features.size() != M) {
    throw DataError("expected " + std::to_string(M) + " modalities, got " +
                    std::to_string(features.size()));
  }
  const std::size_t d_f = params.feature_dim();
  Matrix x(d_f, M);
  for (std::size_t m = 0; m < M; ++m) {
    const Matrix& w = params.projections[m].value;
    if (features[m].size() != w.cols()) {
      throw DataError("modality " + std::to_string(m) + " has " +
                      std::to_string(features[m].size()) + " features, expected " +
                      std::to_string(w.cols()));
    }
    for (std::size_t r = 0; r < d_f; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c) * features[m][c];
      if (params.has_bias()) s += params.projection_biases[m].value(0, r);
      x(r, m) = s;
    }
  }
  return x;
}

Matrix inter_modal_attention(const Matrix& x_u, const MarlParams& params) {
  const Matrix q = matmul(params.query.value, x_u);
  const Matrix k = matmul(params.key.value, x_u);
  return softmax_rows(matmul_tn(q, k), params.tau);
}

Matrix aggregate_values(const Matrix& x_u, const Matrix& attention, const MarlParams& params) {
  const Matrix v = matmul(params.value.value, x_u);
  if (attention.rows() != v.cols() || attention.cols() != v.cols()) {
    throw DimensionError("aggregate_values: attention " + attention.shape_string() +
                         " does not match " + std::to_string(v.cols()) + " modalities");
  }
  Matrix mix = attention;
  for (std::size_t i = 0; i < mix.rows(); ++i) mix(i, i) += params.alpha;
  // V_hat = V (alpha I + P)^T
  return matmul_nt(v, mix);
}

std::vector<double> shared_representation(const Matrix& aggregated, const MarlParams& params) {
  const Matrix& w = params.output.value;
  if (aggregated.size() != w.cols()) {
    throw DimensionError("shared_representation: W_h " + w.shape_string() +
                         " cannot act on aggregated values " + aggregated.shape_string());
  }
  // Vec(V_hat^T): rows of V_hat^T are the columns of V_hat.
  std::vector<double> flat;
  flat.reserve(aggregated.size());
  for (std::size_t m = 0; m < aggregated.cols(); ++m)
    for (std::size_t r = 0; r < aggregated.rows(); ++r) flat.push_back(aggregated(r, m));
  std::vector<double> h(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * flat[j];
    h[i] = s;
  }
  return h;
}

std::vector<double> specified_representation(const Matrix& attention) {
  return std::vector<double>(attention.data().begin(), attention.data().end());
}

Matrix attention_from_specified(std::span<const double> h_sp, std::size_t num_modalities) {
  if (h_sp.size() != num_modalities * num_modalities) {
    throw DimensionError("h_sp of length " + std::to_string(h_sp.size()) + " is not " +
                         std::to_string(num_modalities) + "^2");
  }
  return Matrix(num_modalities, num_modalities, std::vector<double>(h_sp.begin(), h_sp.end()));
}

std::vector<double> contribution_scores(const Matrix& attention) {
  const std::size_t M = attention.rows();
  std::vector<double> c(attention.cols(), 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < attention.cols(); ++j) c[j] += attention(i, j);
  for (double& v : c) v /= static_cast<double>(M);
  return c;
}

std::size_t ModalityAwareEmbedding::num_modalities() const {
  return static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(specified.cols()))));
}

Matrix ModalityAwareEmbedding::attention(std::size_t patient) const {
  return attention_from_specified(specified.row(patient), num_modalities());
}

MarlVars bind(Tape& tape, MarlParams& params, bool trainable) {
  MarlVars v;
  for (auto& w : params.projections) v.projections.push_back(tape.parameter(w, trainable));
  for (auto& b : params.projection_biases) v.projection_biases.push_back(tape.parameter(b, trainable));
  v.query = tape.parameter(params.query, trainable);
  v.key = tape.parameter(params.key, trainable);
  v.value = tape.parameter(params.value, trainable);
  v.output = tape.parameter(params.output, trainable);
  v.alpha = params.alpha;
  v.tau = params.tau;
  return v;
}

MarlOutput marl_forward(const MarlVars& vars, std::span<const Var> modalities) {
  const std::size_t M = vars.projections.size();
  if (modalities.size() != M) {
    throw DataError("marl_forward: expected " + std::to_string(M) + " modalities, got " +
                    std::to_string(modalities.size()));
  }
  std::vector<Var> q(M), k(M), v(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (modalities[m].cols() != vars.projections[m].cols()) {
      throw DataError("marl_forward: modality " + std::to_string(m) + " has " +
                      std::to_string(modalities[m].cols()) + " features, expected " +
                      std::to_string(vars.projections[m].cols()));
    }
    Var x = ad::matmul_nt(modalities[m], vars.projections[m]);
    if (!vars.projection_biases.empty()) x = ad::add_row(x, vars.projection_biases[m]);
    q[m] = ad::matmul_nt(x, vars.query);
    k[m] = ad::matmul_nt(x, vars.key);
    v[m] = ad::matmul_nt(x, vars.value);
  }

  std::vector<Var> logits;
  logits.reserve(M * M);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < M; ++j) logits.push_back(ad::rowwise_dot(q[i], k[j]));
  Var attention = ad::group_softmax(ad::hconcat(logits), M, vars.tau);

  std::vector<Var> aggregated;
  aggregated.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    Var acc = ad::scale(v[i], vars.alpha);
    for (std::size_t j = 0; j < M; ++j) {
      Var w = ad::col_slice(attention, i * M + j, i * M + j + 1);
      acc = ad::add(acc, ad::scale_rows(w, v[j]));
    }
    aggregated.push_back(acc);
  }
  Var shared = ad::matmul_nt(ad::hconcat(aggregated), vars.output);
  const Var parts[] = {shared, attention};
  return MarlOutput{shared, attention, ad::hconcat(parts)};
}

ModalityAwareEmbedding marl_forward(const MarlParams& params, std::span<const Matrix> modalities) {
  Tape tape;
  MarlVars vars;
  for (const auto& w : params.projections) vars.projections.push_back(tape.constant(w.value));
  for (const auto& b : params.projection_biases) vars.projection_biases.push_back(tape.constant(b.value));
  vars.query = tape.constant(params.query.value);
  vars.key = tape.constant(params.key.value);
  vars.value = tape.constant(params.value.value);
  vars.output = tape.constant(params.output.value);
  vars.alpha = params.alpha;
  vars.tau = params.tau;
  std::vector<Var> inputs;
  inputs.reserve(modalities.size());
  for (const auto& m : modalities) inputs.push_back(tape.constant(m));
  MarlOutput out = marl_forward(vars, inputs);
  return ModalityAwareEmbedding{out.shared.value(), out.specified.value(), out.combined.value()};
}

}  // namespace mmgl
