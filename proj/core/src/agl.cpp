#include "mmgl/agl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmgl/errors.hpp"

namespace mmgl {
namespace {

void check_theta(double theta) {
  if (!(theta > 0.0 && theta < 1.0)) {
    throw ParameterError("sparsification threshold theta must lie in (0, 1), got " +
                         std::to_string(theta));
  }
}

std::string node_label(std::size_t i, std::span<const std::string> ids) {
  if (i < ids.size()) return "patient '" + ids[i] + "'";
  return "node " + std::to_string(i);
}

// Rows of z scaled to unit norm; records the norms.
Matrix normalize_rows(const Matrix& z, std::vector<double>& norms,
                      std::span<const std::string> ids = {}) {
  Matrix out = z;
  norms.assign(z.rows(), 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (double v : z.row(i)) s += v * v;
    const double n = std::sqrt(s);
    if (!(n >= kMinProjectedNorm)) {
      throw NumericError("projected embedding of " + node_label(i, ids) +
                         " has near-zero norm; cosine similarity undefined");
    }
    norms[i] = n;
    for (double& v : out.row(i)) v /= n;
  }
  return out;
}

// Symmetric Gram matrix of unit rows, clamped, unit diagonal. Computed over
// i < j and mirrored so that symmetry is exact.
Matrix unit_gram(const Matrix& zn) {
  const std::size_t n = zn.rows();
  const std::size_t d = zn.cols();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    const double* zi = zn.data().data() + i * d;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* zj = zn.data().data() + j * d;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += zi[k] * zj[k];
      dot = std::clamp(dot, -1.0, 1.0);
      s(i, j) = dot;
      s(j, i) = dot;
    }
  }
  return s;
}

}  // namespace

GraphLearnerParams GraphLearnerParams::init(std::size_t d_in, std::size_t d_A, double theta,
                                            double beta, double gamma, Rng& rng) {
  if (d_in == 0) throw ParameterError("graph learner input dimension must be >= 1");
  if (d_A == 0) d_A = d_in;
  GraphLearnerParams p;
  p.metric = Parameter("agl.WA", glorot_uniform(d_A, d_in, rng));
  p.theta = theta;
  p.beta = beta;
  p.gamma = gamma;
  p.validate();
  return p;
}

void GraphLearnerParams::validate() const {
  check_theta(theta);
  if (!(beta >= 0.0) || !(gamma >= 0.0)) throw ParameterError("beta and gamma must be >= 0");
  if (metric.value.empty()) throw DimensionError("graph learner metric is empty");
}

std::size_t LearnedGraph::edge_count() const {
  std::size_t c = 0;
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = i + 1; j < size(); ++j)
      if (adjacency(i, j) > 0.0) ++c;
  return c;
}

Matrix similarity_matrix(const Matrix& embeddings, const GraphLearnerParams& params,
                         std::span<const std::string> node_ids) {
  std::vector<double> norms;
  const Matrix z = matmul_nt(embeddings, params.metric.value);
  return unit_gram(normalize_rows(z, norms, node_ids));
}

double sparsify_value(double s, double theta) {
  const double shift = 2.0 * theta - 1.0;
  if (!(s > shift)) return 0.0;
  return std::min((s - shift) / (2.0 - 2.0 * theta), 1.0);
}

LearnedGraph sparsify(const Matrix& similarity, double theta) {
  check_theta(theta);
  if (similarity.rows() != similarity.cols()) {
    throw DimensionError("sparsify: similarity must be square, got " + similarity.shape_string());
  }
  LearnedGraph g;
  g.theta = theta;
  g.adjacency = Matrix(similarity.rows(), similarity.cols());
  for (std::size_t i = 0; i < similarity.rows(); ++i)
    for (std::size_t j = 0; j < similarity.cols(); ++j)
      if (i != j) g.adjacency(i, j) = sparsify_value(similarity(i, j), theta);
  return g;
}

LearnedGraph learn_graph(const Matrix& embeddings, const GraphLearnerParams& params,
                         std::vector<std::string> node_ids) {
  LearnedGraph g = sparsify(similarity_matrix(embeddings, params, node_ids), params.theta);
  g.node_ids = std::move(node_ids);
  return g;
}

double smoothness_loss(const Matrix& adjacency, const Matrix& embeddings) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n || embeddings.rows() != n) {
    throw DimensionError("smoothness_loss: adjacency " + adjacency.shape_string() +
                         " vs embeddings " + embeddings.shape_string());
  }
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adjacency(i, j);
      if (a == 0.0) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < embeddings.cols(); ++k) {
        const double diff = embeddings(i, k) - embeddings(j, k);
        d2 += diff * diff;
      }
      total += a * d2;
    }
  }
  return total / (2.0 * static_cast<double>(n) * static_cast<double>(n));
}

double connectivity_loss(const Matrix& adjacency, ConnectivityDiagnostics* diagnostics) {
  const std::size_t n = adjacency.rows();
  if (n == 0) return 0.0;
  double total = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (double v : adjacency.row(i)) r += v;
    if (r < kMinDegree) {
      r = kMinDegree;
      ++clamped;
    }
    total += std::log(r);
  }
  if (diagnostics != nullptr) diagnostics->clamped_rows = clamped;
  return -total / static_cast<double>(n);
}

double frobenius_term(const Matrix& adjacency) {
  const double n = static_cast<double>(adjacency.rows());
  if (n == 0) return 0.0;
  return frobenius_norm_sq(adjacency) / (n * n);
}

GraphRegularizerTerms graph_regularizer(const Matrix& adjacency, const Matrix& embeddings,
                                        const GraphLearnerParams& params) {
  GraphRegularizerTerms t;
  t.smoothness = smoothness_loss(adjacency, embeddings);
  t.connectivity = connectivity_loss(adjacency);
  t.frobenius = frobenius_term(adjacency);
  t.total = t.smoothness + params.beta * t.connectivity + params.gamma * t.frobenius;
  return t;
}

namespace {

Matrix squared_distances(const Matrix& h) {
  const std::size_t n = h.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < h.cols(); ++k) {
        const double diff = h(i, k) - h(j, k);
        s += diff * diff;
      }
      d(i, j) = s;
      d(j, i) = s;
    }
  }
  return d;
}

}  // namespace

LearnedGraph knn_rbf_graph(const Matrix& embeddings, std::size_t k, double sigma,
                           std::vector<std::string> node_ids) {
  const std::size_t n = embeddings.rows();
  if (k >= n) {
    throw ParameterError("knn_rbf_graph: k = " + std::to_string(k) + " must be below N = " +
                         std::to_string(n));
  }
  if (!(sigma > 0.0)) throw ParameterError("knn_rbf_graph: sigma must be positive");
  const Matrix d2 = squared_distances(embeddings);
  LearnedGraph g;
  g.method = "knn-rbf";
  g.theta = 0.0;
  g.node_ids = std::move(node_ids);
  g.adjacency = Matrix(n, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return d2(i, a) < d2(i, b) || (d2(i, a) == d2(i, b) && a < b);
                      });
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = order[r];
      const double w = std::exp(-d2(i, j) / (2.0 * sigma * sigma));
      g.adjacency(i, j) = std::max(g.adjacency(i, j), w);
      g.adjacency(j, i) = std::max(g.adjacency(j, i), w);
    }
  }
  return g;
}

double median_pairwise_distance(const Matrix& embeddings) {
  const std::size_t n = embeddings.rows();
  if (n < 2) throw ParameterError("median_pairwise_distance needs at least two rows");
  const Matrix d2 = squared_distances(embeddings);
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(d2(i, j)));
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  if (d.size() % 2 == 1) return d[mid];
  const double upper = d[mid];
  const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

Matrix extend_graph(const Matrix& train_embeddings, const Matrix& new_embeddings,
                    const GraphLearnerParams& params) {
  params.validate();
  std::vector<double> norms;
  const Matrix zt = normalize_rows(matmul_nt(train_embeddings, params.metric.value), norms);
  const Matrix zn = normalize_rows(matmul_nt(new_embeddings, params.metric.value), norms);
  Matrix w(zn.rows(), zt.rows());
  const std::size_t d = zt.cols();
  for (std::size_t u = 0; u < zn.rows(); ++u) {
    const double* a = zn.data().data() + u * d;
    for (std::size_t j = 0; j < zt.rows(); ++j) {
      const double* b = zt.data().data() + j * d;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += a[k] * b[k];
      w(u, j) = sparsify_value(std::clamp(dot, -1.0, 1.0), params.theta);
    }
  }
  return w;
}

namespace ad {

Var cosine_similarity(const Var& z) {
  std::vector<double> norms;
  Matrix zn = normalize_rows(z.value(), norms);
  Matrix s = unit_gram(zn);
  Matrix saved = s;
  Tape& t = *z.tape();
  return t.record(std::move(s), {z},
                  [z, zn = std::move(zn), s = std::move(saved), norms](Tape& t, const Matrix& g) {
    const std::size_t n = zn.rows();
    const std::size_t d = zn.cols();
    // Off-diagonal entries strictly inside (-1, 1) carry gradient.
    Matrix gs(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double v = s(i, j);
        if (i != j && v > -1.0 && v < 1.0) gs(i, j) = g(i, j) + g(j, i);
      }
    }
    Matrix dzn = mmgl::matmul(gs, zn);
    Matrix& gz = t.grad(z);
    for (std::size_t i = 0; i < n; ++i) {
      double proj = 0.0;
      for (std::size_t k = 0; k < d; ++k) proj += zn(i, k) * dzn(i, k);
      for (std::size_t k = 0; k < d; ++k) gz(i, k) += (dzn(i, k) - zn(i, k) * proj) / norms[i];
    }
  });
}

Var sparsify(const Var& similarity, double theta) {
  check_theta(theta);
  const Matrix& sv = similarity.value();
  if (sv.rows() != sv.cols()) {
    throw DimensionError("sparsify: similarity must be square, got " + sv.shape_string());
  }
  Matrix a = mmgl::sparsify(sv, theta).adjacency;
  Tape& t = *similarity.tape();
  Matrix out = a;
  return t.record(std::move(out), {similarity},
                  [similarity, a = std::move(a), theta](Tape& t, const Matrix& g) {
                    const double slope = 1.0 / (2.0 - 2.0 * theta);
                    Matrix& gs = t.grad(similarity);
                    for (std::size_t i = 0; i < a.size(); ++i) {
                      const double v = a.data()[i];
                      if (v > 0.0 && v < 1.0) gs.data()[i] += slope * g.data()[i];
                    }
                  });
}

Var smoothness_loss(const Var& adjacency, const Var& embeddings) {
  const double value = mmgl::smoothness_loss(adjacency.value(), embeddings.value());
  Tape& t = *adjacency.tape();
  return t.record(Matrix(1, 1, value), {adjacency, embeddings},
                  [adjacency, embeddings](Tape& t, const Matrix& g) {
                    const Matrix& a = t.value(adjacency);
                    const Matrix& h = t.value(embeddings);
                    const std::size_t n = a.rows();
                    const std::size_t d = h.cols();
                    const double c = g(0, 0) / (2.0 * static_cast<double>(n) * static_cast<double>(n));
                    const bool need_a = t.requires_grad(adjacency);
                    const bool need_h = t.requires_grad(embeddings);
                    Matrix* ga = need_a ? &t.grad(adjacency) : nullptr;
                    Matrix* gh = need_h ? &t.grad(embeddings) : nullptr;
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        if (i == j) continue;
                        double d2 = 0.0;
                        for (std::size_t k = 0; k < d; ++k) {
                          const double diff = h(i, k) - h(j, k);
                          d2 += diff * diff;
                        }
                        if (ga != nullptr) (*ga)(i, j) += c * d2;
                        const double w = a(i, j) + a(j, i);
                        if (gh != nullptr && w != 0.0) {
                          for (std::size_t k = 0; k < d; ++k)
                            (*gh)(i, k) += 2.0 * c * w * (h(i, k) - h(j, k));
                        }
                      }
                    }
                  });
}

Var connectivity_loss(const Var& adjacency) {
  const double value = mmgl::connectivity_loss(adjacency.value());
  Tape& t = *adjacency.tape();
  return t.record(Matrix(1, 1, value), {adjacency}, [adjacency](Tape& t, const Matrix& g) {
    const Matrix& a = t.value(adjacency);
    const std::size_t n = a.rows();
    Matrix& ga = t.grad(adjacency);
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      for (double v : a.row(i)) r += v;
      if (r < kMinDegree) continue;
      const double d = -g(0, 0) / (static_cast<double>(n) * r);
      for (double& v : ga.row(i)) v += d;
    }
  });
}

Var frobenius_term(const Var& adjacency) {
  const double value = mmgl::frobenius_term(adjacency.value());
  Tape& t = *adjacency.tape();
  return t.record(Matrix(1, 1, value), {adjacency}, [adjacency](Tape& t, const Matrix& g) {
    const Matrix& a = t.value(adjacency);
    const double n = static_cast<double>(a.rows());
    const double c = 2.0 * g(0, 0) / (n * n);
    Matrix& ga = t.grad(adjacency);
    for (std::size_t i = 0; i < a.size(); ++i) ga.data()[i] += c * a.data()[i];
  });
}

GraphRegularizerVars graph_regularizer(const Var& adjacency, const Var& embeddings, double beta,
                                       double gamma) {
  GraphRegularizerVars r;
  r.smoothness = smoothness_loss(adjacency, embeddings);
  r.connectivity = connectivity_loss(adjacency);
  r.frobenius = frobenius_term(adjacency);
  r.total = add(add(r.smoothness, scale(r.connectivity, beta)), scale(r.frobenius, gamma));
  return r;
}

Var learn_adjacency(const Var& embeddings, const Var& metric, double theta) {
  return sparsify(cosine_similarity(matmul_nt(embeddings, metric)), theta);
}

}  // namespace ad
}  // namespace mmgl
