#include "mmgl/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mmgl/errors.hpp"

namespace mmgl {

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix(value.rows(), value.cols());
  } else {
    grad.set_zero();
  }
}

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("scalar(): node has shape " + v.shape_string());
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p, bool trainable) {
  nodes_.push_back(Node{p.value, {}, trainable, {}, trainable ? &p : nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError("operation mixes nodes from different tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by a recorded operation " +
                       value.shape_string());
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(const Var& v) {
  Node& n = nodes_[v.id()];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw ContractError("Tape::backward called twice");
  consumed_ = true;
  if (loss.tape() != this) throw ContractError("loss does not belong to this tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("backward: loss must be 1x1, got " + lv.shape_string());
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss)(0, 0) = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty()) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    }
  }
}

namespace ad {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  return t.record(mmgl::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += mmgl::matmul_nt(g, t.value(b));
    if (t.requires_grad(b)) t.grad(b) += mmgl::matmul_tn(t.value(a), g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  return t.record(mmgl::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += mmgl::matmul(g, t.value(b));
    if (t.requires_grad(b)) t.grad(b) += mmgl::matmul_tn(g, t.value(a));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) += g;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) -= g;
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += s * g.data()[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.data()) v += s;
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.grad(a) += g; });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * bv.data()[i];
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * av.data()[i];
    }
  });
}

Var add_row(const Var& a, const Var& bias) {
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  require(bv.rows() == 1 && bv.cols() == av.cols(),
          "add_row: bias " + bv.shape_string() + " does not fit " + av.shape_string());
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  Tape& t = *a.tape();
  return t.record(std::move(out), {a, bias}, [a, bias](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(bias)) {
      Matrix& gb = t.grad(bias);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
    }
  });
}

Var relu(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av.data()[i] > 0.0) ga.data()[i] += g.data()[i];
  });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("hconcat: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.rows() == n, "hconcat: row mismatch " + p.value().shape_string());
    total += p.cols();
  }
  Matrix out(n, total);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    off += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Tape& t = *parts[0].tape();
  return t.record(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t c = t.value(p).cols();
      if (t.requires_grad(p)) {
        Matrix& gp = t.grad(p);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off + j);
      }
      off += c;
    }
  });
}

Var col_slice(const Var& a, std::size_t begin, std::size_t end) {
  const Matrix& av = a.value();
  require(begin <= end && end <= av.cols(), "col_slice: range out of bounds for " +
                                                av.shape_string());
  Matrix out(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a, begin](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, begin + j) += g(i, j);
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const Matrix& av = a.value();
  Matrix out(rows.size(), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < av.rows(), "gather_rows: row index out of range");
    auto src = av.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a, idx](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = ga.row(idx[i]);
      auto src = g.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

Var submatrix(const Var& a, std::span<const std::size_t> idx) {
  const Matrix& av = a.value();
  require(av.rows() == av.cols(), "submatrix: input must be square");
  const std::size_t n = idx.size();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    require(idx[i] < av.rows(), "submatrix: index out of range");
    for (std::size_t j = 0; j < n; ++j) out(i, j) = av(idx[i], idx[j]);
  }
  std::vector<std::size_t> ids(idx.begin(), idx.end());
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a, ids](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < ids.size(); ++j) ga(ids[i], ids[j]) += g(i, j);
  });
}

Var rowwise_dot(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "rowwise_dot");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * bv(i, j);
    out(i, 0) = s;
  }
  Tape& t = *a.tape();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad(a);
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) += g(i, 0) * bv(i, j);
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) gb(i, j) += g(i, 0) * av(i, j);
    }
  });
}

Var scale_rows(const Var& s, const Var& a) {
  const Matrix& sv = s.value();
  const Matrix& av = a.value();
  require(sv.cols() == 1 && sv.rows() == av.rows(),
          "scale_rows: scale " + sv.shape_string() + " does not fit " + av.shape_string());
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= sv(i, 0);
  Tape& t = *a.tape();
  return t.record(std::move(out), {s, a}, [s, a](Tape& t, const Matrix& g) {
    const Matrix& sv = t.value(s);
    const Matrix& av = t.value(a);
    if (t.requires_grad(s)) {
      Matrix& gs = t.grad(s);
      for (std::size_t i = 0; i < av.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) acc += g(i, j) * av(i, j);
        gs(i, 0) += acc;
      }
    }
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad(a);
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) += g(i, j) * sv(i, 0);
    }
  });
}

Var group_softmax(const Var& a, std::size_t group, double tau) {
  if (!(tau > 0.0)) throw ParameterError("softmax: tau must be positive");
  const Matrix& av = a.value();
  require(group > 0 && av.cols() % group == 0,
          "group_softmax: group width does not divide " + av.shape_string());
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t g0 = 0; g0 < av.cols(); g0 += group) {
      double mx = -INFINITY;
      for (std::size_t j = g0; j < g0 + group; ++j) mx = std::max(mx, av(i, j) / tau);
      double sum = 0.0;
      for (std::size_t j = g0; j < g0 + group; ++j) {
        out(i, j) = std::exp(av(i, j) / tau - mx);
        sum += out(i, j);
      }
      for (std::size_t j = g0; j < g0 + group; ++j) out(i, j) /= sum;
    }
  }
  Tape& t = *a.tape();
  Matrix probs = out;
  return t.record(std::move(out), {a}, [a, probs, group, tau](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      for (std::size_t g0 = 0; g0 < probs.cols(); g0 += group) {
        double dot = 0.0;
        for (std::size_t j = g0; j < g0 + group; ++j) dot += g(i, j) * probs(i, j);
        for (std::size_t j = g0; j < g0 + group; ++j)
          ga(i, j) += probs(i, j) * (g(i, j) - dot) / tau;
      }
    }
  });
}

Var softmax_rows(const Var& a, double tau) { return group_softmax(a, a.cols(), tau); }

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Matrix& lv = logits.value();
  const double loss = mmgl::cross_entropy(lv, labels);
  std::vector<int> y(labels.begin(), labels.end());
  Tape& t = *logits.tape();
  return t.record(Matrix(1, 1, loss), {logits}, [logits, y](Tape& t, const Matrix& g) {
    if (y.empty()) return;
    Matrix p = mmgl::softmax_rows(t.value(logits), 1.0);
    const double s = g(0, 0) / static_cast<double>(y.size());
    Matrix& gl = t.grad(logits);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      p(i, static_cast<std::size_t>(y[i])) -= 1.0;
      for (std::size_t j = 0; j < p.cols(); ++j) gl(i, j) += s * p(i, j);
    }
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tape& t = *a.tape();
  return t.record(Matrix(1, 1, s), {a}, [a](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (double& v : ga.data()) v += g(0, 0);
  });
}

Var row_sums(const Var& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v;
    out(i, 0) = s;
  }
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (double& v : ga.row(i)) v += g(i, 0);
  });
}

}  // namespace ad
}  // namespace mmgl
