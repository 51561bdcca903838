#include "mmgl/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmgl/errors.hpp"

namespace mmgl {

GcnParams GcnParams::init(std::size_t d_in, std::size_t d_g, std::size_t num_classes, Rng& rng) {
  if (d_in == 0 || d_g == 0 || num_classes == 0) {
    throw ParameterError("GCN dimensions must be >= 1");
  }
  GcnParams p;
  p.layer1 = Parameter("gcn.W1", glorot_uniform(d_in, d_g, rng));
  p.layer2 = Parameter("gcn.W2", glorot_uniform(d_g, num_classes, rng));
  return p;
}

void GcnParams::validate() const {
  if (layer1.value.cols() != layer2.value.rows()) {
    throw DimensionError("GCN layers do not chain: " + layer1.value.shape_string() + " then " +
                         layer2.value.shape_string());
  }
}

AuxClassifierParams AuxClassifierParams::init(std::size_t num_modalities, std::size_t num_classes,
                                              Rng& rng) {
  const std::size_t in = num_modalities * num_modalities;
  AuxClassifierParams p;
  p.weights = Parameter("aux.W", glorot_uniform(in, num_classes, rng));
  p.bias = Parameter("aux.b", Matrix(1, num_classes));
  return p;
}

void AuxClassifierParams::validate() const {
  if (bias.value.rows() != 1 || bias.value.cols() != weights.value.cols()) {
    throw DimensionError("auxiliary bias " + bias.value.shape_string() + " does not match weights " +
                         weights.value.shape_string());
  }
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(double(weights.value.rows()))));
  if (m * m != weights.value.rows()) {
    throw DimensionError("auxiliary classifier input width must be M^2, got " +
                         std::to_string(weights.value.rows()));
  }
}

Matrix normalize_adjacency(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) {
    throw DimensionError("normalize_adjacency: adjacency must be square, got " +
                         adjacency.shape_string());
  }
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (double v : adjacency.row(i)) d += v;
    r[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = (adjacency(i, j) + (i == j ? 1.0 : 0.0)) * (r[i] * r[j]);
  return out;
}

namespace {

void fill_block(const Matrix& adjacency, std::span<const std::size_t> dst, std::size_t fanout,
                SamplingMode mode, Rng& rng, NeighborBlock& block) {
  const std::size_t n = adjacency.rows();
  block.dst.assign(dst.begin(), dst.end());
  block.neighbors.assign(dst.size(), {});
  block.weights.assign(dst.size(), {});
  block.population.assign(dst.size(), 0);
  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < dst.size(); ++t) {
    const std::size_t i = dst[t];
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && adjacency(i, j) > 0.0) candidates.push_back(j);
    block.population[t] = candidates.size();
    if (mode == SamplingMode::kRandom && candidates.size() > fanout) {
      for (std::size_t k = 0; k < fanout; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
        std::swap(candidates[k], candidates[pick(rng)]);
      }
      candidates.resize(fanout);
      std::sort(candidates.begin(), candidates.end());
    }
    block.neighbors[t] = candidates;
    for (std::size_t j : candidates) block.weights[t].push_back(adjacency(i, j));
  }
}

}  // namespace

SampledNeighborhood sample_neighbors(const Matrix& adjacency, std::span<const std::size_t> targets,
                                     std::array<std::size_t, 2> fanouts, SamplingMode mode,
                                     Rng& rng) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) {
    throw DimensionError("sample_neighbors: adjacency must be square, got " +
                         adjacency.shape_string());
  }
  for (std::size_t t : targets) {
    if (t >= n) {
      throw DataError("sample_neighbors: unknown target node " + std::to_string(t) +
                      " (graph has " + std::to_string(n) + " nodes)");
    }
  }
  SampledNeighborhood s;
  s.targets.assign(targets.begin(), targets.end());
  fill_block(adjacency, targets, fanouts[0], mode, rng, s.hop1);

  std::vector<std::size_t> layer1(targets.begin(), targets.end());
  std::vector<char> seen(n, 0);
  for (std::size_t t : targets) seen[t] = 1;
  for (const auto& nbrs : s.hop1.neighbors) {
    for (std::size_t j : nbrs) {
      if (!seen[j]) {
        seen[j] = 1;
        layer1.push_back(j);
      }
    }
  }
  fill_block(adjacency, layer1, fanouts[1], mode, rng, s.hop2);
  return s;
}

SampledNeighborhood sample_neighbors(const Matrix& adjacency, std::span<const std::size_t> targets,
                                     std::array<std::size_t, 2> fanouts, SamplingMode mode,
                                     std::uint64_t seed) {
  Rng rng(seed);
  return sample_neighbors(adjacency, targets, fanouts, mode, rng);
}

Matrix gcn_forward(const Matrix& embeddings, const Matrix& normalized_adjacency,
                   const GcnParams& params) {
  Tape t;
  return ad::gcn_dense(t.constant(embeddings), t.constant(normalized_adjacency),
                       t.constant(params.layer1.value), t.constant(params.layer2.value))
      .value();
}

Matrix gcn_forward(const Matrix& embeddings, const Matrix& adjacency,
                   const SampledNeighborhood& neighborhood, const GcnParams& params) {
  Tape t;
  return ad::gcn_sampled(t.constant(embeddings), t.constant(adjacency), neighborhood,
                         t.constant(params.layer1.value), t.constant(params.layer2.value))
      .value();
}

Matrix aux_forward(const Matrix& specified, const AuxClassifierParams& params) {
  Tape t;
  return ad::aux_forward(t.constant(specified), t.constant(params.weights.value),
                         t.constant(params.bias.value))
      .value();
}

namespace ad {

Var normalize_adjacency(const Var& adjacency) {
  const Matrix& a = adjacency.value();
  Matrix out = mmgl::normalize_adjacency(a);
  Tape& t = *adjacency.tape();
  return t.record(std::move(out), {adjacency}, [adjacency](Tape& t, const Matrix& g) {
    const Matrix& a = t.value(adjacency);
    const std::size_t n = a.rows();
    std::vector<double> deg(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = 1.0;
      for (double v : a.row(i)) d += v;
      deg[i] = d;
      r[i] = 1.0 / std::sqrt(d);
    }
    // out_ij = (A_ij + delta_ij) r_i r_j
    std::vector<double> dr(n, 0.0);
    Matrix& ga = t.grad(adjacency);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g(i, j);
        if (gij == 0.0) continue;
        const double aij = a(i, j) + (i == j ? 1.0 : 0.0);
        ga(i, j) += gij * r[i] * r[j];
        dr[i] += gij * aij * r[j];
        dr[j] += gij * aij * r[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = dr[i] * (-0.5) * r[i] / deg[i];
      for (double& v : ga.row(i)) v += dd;
    }
  });
}

Var block_aggregate(const Var& features, std::span<const std::ptrdiff_t> row_of,
                    const Var& adjacency, const Var& degree, const NeighborBlock& block) {
  const Matrix& x = features.value();
  const Matrix& a = adjacency.value();
  const Matrix& deg = degree.value();
  const std::size_t d = x.cols();
  auto row = [&](std::size_t node) -> std::size_t {
    if (node >= row_of.size() || row_of[node] < 0) {
      throw ContractError("block_aggregate: node " + std::to_string(node) +
                          " has no feature row (missing neighborhood)");
    }
    return static_cast<std::size_t>(row_of[node]);
  };
  Matrix out(block.size(), d);
  for (std::size_t t = 0; t < block.size(); ++t) {
    const std::size_t i = block.dst[t];
    const auto& nbrs = block.neighbors[t];
    // A node without sampled neighbors keeps only its self-loop, with unit weight.
    const double di = nbrs.empty() ? 1.0 : deg(i, 0);
    auto xi = x.row(row(i));
    auto o = out.row(t);
    for (std::size_t k = 0; k < d; ++k) o[k] = xi[k] / di;
    if (nbrs.empty()) continue;
    const double c = static_cast<double>(block.population[t]) / static_cast<double>(nbrs.size());
    for (std::size_t j : nbrs) {
      const double w = c * a(i, j) / std::sqrt(di * deg(j, 0));
      auto xj = x.row(row(j));
      for (std::size_t k = 0; k < d; ++k) o[k] += w * xj[k];
    }
  }
  std::vector<std::ptrdiff_t> rows(row_of.begin(), row_of.end());
  Tape& tape = *features.tape();
  return tape.record(
      std::move(out), {features, adjacency, degree},
      [features, adjacency, degree, rows, block](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(features);
        const Matrix& a = t.value(adjacency);
        const Matrix& deg = t.value(degree);
        const std::size_t d = x.cols();
        Matrix* gx = t.requires_grad(features) ? &t.grad(features) : nullptr;
        Matrix* ga = t.requires_grad(adjacency) ? &t.grad(adjacency) : nullptr;
        Matrix* gd = t.requires_grad(degree) ? &t.grad(degree) : nullptr;
        for (std::size_t tt = 0; tt < block.size(); ++tt) {
          const std::size_t i = block.dst[tt];
          const auto& nbrs = block.neighbors[tt];
          const double di = nbrs.empty() ? 1.0 : deg(i, 0);
          auto gi = g.row(tt);
          const auto ri = static_cast<std::size_t>(rows[i]);
          auto xi = x.row(ri);
          double gx_self = 0.0;
          for (std::size_t k = 0; k < d; ++k) gx_self += gi[k] * xi[k];
          if (gx != nullptr) {
            auto dst = gx->row(ri);
            for (std::size_t k = 0; k < d; ++k) dst[k] += gi[k] / di;
          }
          if (nbrs.empty()) continue;
          if (gd != nullptr) (*gd)(i, 0) -= gx_self / (di * di);
          const double c =
              static_cast<double>(block.population[tt]) / static_cast<double>(nbrs.size());
          for (std::size_t j : nbrs) {
            const double dj = deg(j, 0);
            const double inv = 1.0 / std::sqrt(di * dj);
            const auto rj = static_cast<std::size_t>(rows[j]);
            auto xj = x.row(rj);
            double gdotx = 0.0;
            for (std::size_t k = 0; k < d; ++k) gdotx += gi[k] * xj[k];
            const double aij = a(i, j);
            if (gx != nullptr) {
              auto dst = gx->row(rj);
              const double w = c * aij * inv;
              for (std::size_t k = 0; k < d; ++k) dst[k] += w * gi[k];
            }
            if (ga != nullptr) (*ga)(i, j) += c * gdotx * inv;
            if (gd != nullptr) {
              const double base = c * aij * gdotx * inv;
              (*gd)(i, 0) -= 0.5 * base / di;
              (*gd)(j, 0) -= 0.5 * base / dj;
            }
          }
        }
      });
}

Var gcn_dense(const Var& embeddings, const Var& normalized_adjacency, const Var& layer1,
              const Var& layer2) {
  Var hidden = relu(matmul(normalized_adjacency, matmul(embeddings, layer1)));
  return matmul(normalized_adjacency, matmul(hidden, layer2));
}

Var gcn_sampled(const Var& embeddings, const Var& adjacency,
                const SampledNeighborhood& neighborhood, const Var& layer1, const Var& layer2) {
  const std::size_t n = adjacency.rows();
  if (embeddings.rows() != n) {
    throw DimensionError("gcn_sampled: " + std::to_string(embeddings.rows()) +
                         " embeddings for a graph of " + std::to_string(n) + " nodes");
  }
  for (std::size_t target : neighborhood.targets) {
    if (target >= n) throw ContractError("gcn_sampled: target outside the graph");
  }
  if (neighborhood.hop1.dst != neighborhood.targets) {
    throw ContractError("gcn_sampled: hop-1 block does not belong to the targets");
  }
  Var degree = add_scalar(row_sums(adjacency), 1.0);

  std::vector<std::ptrdiff_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::ptrdiff_t{0});
  Var projected = matmul(embeddings, layer1);
  Var hidden = relu(block_aggregate(projected, identity, adjacency, degree, neighborhood.hop2));

  std::vector<std::ptrdiff_t> layer_rows(n, -1);
  for (std::size_t r = 0; r < neighborhood.hop2.dst.size(); ++r) {
    layer_rows[neighborhood.hop2.dst[r]] = static_cast<std::ptrdiff_t>(r);
  }
  Var out = matmul(hidden, layer2);
  return block_aggregate(out, layer_rows, adjacency, degree, neighborhood.hop1);
}

Var aux_forward(const Var& specified, const Var& weights, const Var& bias) {
  if (specified.cols() != weights.rows()) {
    throw DimensionError("aux_forward: H_sp " + specified.value().shape_string() +
                         " does not match weights " + weights.value().shape_string());
  }
  return add_row(matmul(specified, weights), bias);
}

}  // namespace ad
}  // namespace mmgl
