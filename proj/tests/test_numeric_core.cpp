#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mmgl/adam.hpp"
#include "mmgl/autodiff.hpp"
#include "mmgl/errors.hpp"
#include "mmgl/grad_check.hpp"
#include "mmgl/matrix.hpp"
#include "mmgl/random.hpp"

using namespace mmgl;

namespace {

// Straightforward triple loop, used as the reference product.
Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

}  // namespace

// ---- matmul ----

TEST(Matmul, HandArithmetic) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{1}, {1}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{3}, {7}}));
}

TEST(Matmul, IdentityLeavesOperand) {
  Rng rng(3);
  const Matrix b = normal_matrix(3, 5, 1.0, rng);
  EXPECT_EQ(matmul(Matrix::identity(3), b), b);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    (void)matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, MatchesNaiveProductAndTransposedVariants) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
    const Matrix a = normal_matrix(n, k, 1.0, rng);
    const Matrix b = normal_matrix(k, m, 1.0, rng);
    const Matrix ref = naive_product(a, b);
    EXPECT_LT(max_abs_diff(matmul(a, b), ref), 1e-12);
    EXPECT_LT(max_abs_diff(matmul_nt(a, transpose(b)), ref), 1e-12);
    EXPECT_LT(max_abs_diff(matmul_tn(transpose(a), b), ref), 1e-12);
  }
}

TEST(Matmul, AssociativityOnRandomTriples) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    const std::size_t p = dim(rng), q = dim(rng), r = dim(rng), s = dim(rng);
    const Matrix a = normal_matrix(p, q, 1.0, rng);
    const Matrix b = normal_matrix(q, r, 1.0, rng);
    const Matrix c = normal_matrix(r, s, 1.0, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    const double scale = std::max(1.0, std::sqrt(frobenius_norm_sq(left)));
    EXPECT_LT(max_abs_diff(left, right) / scale, 1e-9);
  }
}

// ---- softmax ----

TEST(Softmax, EqualLogitsAreUniform) {
  for (double tau : {0.1, 1.0, 7.0}) {
    const Matrix p = softmax_rows(Matrix::from_rows({{0, 0}}), tau);
    EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
  }
}

TEST(Softmax, ClosedFormTwoThirds) {
  const Matrix p = softmax_rows(Matrix::from_rows({{std::log(2.0), 0.0}}), 1.0);
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, NonPositiveTauRejected) {
  EXPECT_THROW(softmax_rows(Matrix(1, 2), 0.0), ParameterError);
  EXPECT_THROW(softmax_rows(Matrix(1, 2), -1.0), ParameterError);
}

TEST(Softmax, RowsSumToOneOnWideRange) {
  Rng rng(17);
  std::uniform_real_distribution<double> tau_dist(0.05, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix logits = uniform_matrix(4, 6, 50.0, rng);
    const double tau = tau_dist(rng);
    const Matrix p = softmax_rows(logits, tau);
    ASSERT_TRUE(p.all_finite());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0;
      for (double v : p.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

// ---- cross-entropy ----

TEST(CrossEntropy, ClosedFormTwoClass) {
  const int label = 1;
  EXPECT_NEAR(cross_entropy(Matrix::from_rows({{0.0, std::log(3.0)}}), {&label, 1}),
              std::log(4.0 / 3.0), 1e-15);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const std::vector<int> labels{0, 3, 2};
  EXPECT_NEAR(cross_entropy(Matrix(3, 5, 0.25), labels), std::log(5.0), 1e-15);
}

TEST(CrossEntropy, LargeMarginApproachesZero) {
  const int label = 0;
  EXPECT_LT(cross_entropy(Matrix::from_rows({{60.0, 0.0, 0.0}}), {&label, 1}), 1e-25);
}

TEST(CrossEntropy, OutOfRangeLabelIsDataError) {
  const std::vector<int> labels{0, 2};
  EXPECT_THROW(cross_entropy(Matrix(2, 2), labels), DataError);
  const std::vector<int> negative{-1, 0};
  EXPECT_THROW(cross_entropy(Matrix(2, 2), negative), DataError);
}

// ---- autodiff ----

TEST(Autodiff, LinearLossGradientIsExact) {
  Rng rng(2);
  Parameter w("w", normal_matrix(1, 6, 1.0, rng));
  const Matrix x = normal_matrix(6, 1, 1.0, rng);
  Tape tape;
  tape.backward(ad::matmul(tape.parameter(w), tape.constant(x)));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(w.grad(0, i), x(i, 0));
}

TEST(Autodiff, GradientsAccumulateAcrossTapes) {
  Parameter w("w", Matrix(1, 1, 2.0));
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    const Var v = tape.parameter(w);
    tape.backward(ad::sum_all(ad::hadamard(v, v)));
  }
  EXPECT_DOUBLE_EQ(w.grad(0, 0), 12.0);
  w.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad(0, 0), 0.0);
}

TEST(Autodiff, FrozenParameterReceivesNoGradient) {
  Parameter a("a", Matrix(2, 2, 1.0));
  Parameter b("b", Matrix(2, 2, 3.0));
  Tape tape;
  tape.backward(ad::sum_all(ad::hadamard(tape.parameter(a, false), tape.parameter(b))));
  EXPECT_EQ(a.grad, Matrix(2, 2, 0.0));
  EXPECT_EQ(b.grad, Matrix(2, 2, 1.0));
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(ad::add(tape.constant(Matrix(2, 2)), tape.constant(Matrix(2, 3))), DimensionError);
  EXPECT_THROW(ad::matmul(tape.constant(Matrix(2, 2)), tape.constant(Matrix(3, 2))), DimensionError);
}

// Every differentiable op, composed into a scalar, against central differences.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  Parameter a("a", normal_matrix(4, 6, 1.0, rng));
  Parameter b("b", normal_matrix(4, 6, 1.0, rng));
  Parameter s("s", normal_matrix(4, 1, 1.0, rng));
  Parameter bias("bias", normal_matrix(1, 6, 1.0, rng));
  const std::vector<int> labels{0, 5, 2, 3};
  const std::vector<std::size_t> rows{3, 1, 1};
  const std::vector<std::size_t> idx{2, 0, 3};
  const Matrix weights = normal_matrix(4, 6, 1.0, rng);
  const int op = GetParam();

  auto build = [&](Tape& t) -> Var {
    const Var va = t.parameter(a), vb = t.parameter(b), vs = t.parameter(s), vbias = t.parameter(bias);
    const Var w = t.constant(weights);
    auto weighted = [&](const Var& v) { return ad::sum_all(ad::hadamard(v, t.constant(weights))); };
    switch (op) {
      case 0: return weighted(ad::matmul(ad::matmul_nt(va, vb), va));
      case 1: return weighted(ad::add(va, vb));
      case 2: return weighted(ad::sub(ad::scale(va, 2.5), vb));
      case 3: return weighted(ad::hadamard(va, vb));
      case 4: return weighted(ad::add_row(va, vbias));
      case 5: return weighted(ad::relu(ad::add(va, vb)));
      case 6: {
        const Var parts[] = {ad::col_slice(va, 1, 4), ad::col_slice(vb, 0, 3)};
        return weighted(ad::hconcat(parts));
      }
      case 7: return ad::sum_all(ad::hadamard(ad::gather_rows(va, rows), ad::gather_rows(w, rows)));
      case 8: {
        const Var sq = ad::matmul_nt(va, vb);
        return ad::sum_all(ad::hadamard(ad::submatrix(sq, idx), ad::submatrix(ad::matmul_nt(w, w), idx)));
      }
      case 9: return ad::sum_all(ad::hadamard(ad::rowwise_dot(va, vb), vs));
      case 10: return weighted(ad::scale_rows(vs, va));
      case 11: return weighted(ad::group_softmax(va, 3, 0.7));
      case 12: return weighted(ad::softmax_rows(ad::add(va, vb), 1.3));
      case 13: return ad::cross_entropy(ad::add_row(va, vbias), labels);
      case 14: return ad::sum_all(ad::hadamard(ad::row_sums(va), vs));
      default: return weighted(ad::add_scalar(ad::hadamard(va, va), -1.0));
    }
  };
  std::vector<Parameter*> params{&a, &b, &s, &bias};
  const GradCheckReport r = grad_check(build, params);
  EXPECT_TRUE(r.passed) << "op " << op << " worst " << r.worst.param << "[" << r.worst.index
                        << "] rel " << r.max_rel_error;
  EXPECT_LT(r.max_rel_error, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 16));

// ---- grad_check ----

TEST(GradCheck, LinearLossIsMachineExact) {
  Rng rng(1);
  Parameter w("w", normal_matrix(1, 5, 1.0, rng));
  const Matrix x = normal_matrix(5, 1, 1.0, rng);
  std::vector<Parameter*> ps{&w};
  const auto r = grad_check([&](Tape& t) { return ad::matmul(t.parameter(w), t.constant(x)); }, ps);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.entries_checked, 5u);
}

TEST(GradCheck, ZeroToleranceNeverPasses) {
  Parameter w("w", Matrix(1, 1, 1.0));
  std::vector<Parameter*> ps{&w};
  GradCheckOptions o;
  o.tolerance = 0.0;
  const auto r = grad_check([&](Tape& t) { return ad::sum_all(t.parameter(w)); }, ps, o);
  EXPECT_FALSE(r.passed);
}

TEST(GradCheck, NonDeterministicLossIsContractError) {
  Parameter w("w", Matrix(1, 1, 1.0));
  std::vector<Parameter*> ps{&w};
  int calls = 0;
  auto build = [&](Tape& t) {
    ++calls;
    return ad::add_scalar(ad::sum_all(t.parameter(w)), calls * 1e-3);
  };
  EXPECT_THROW(grad_check(build, ps), ContractError);
}

TEST(GradCheck, LargeParametersAreSubsampled) {
  Rng rng(4);
  Parameter w("w", normal_matrix(40, 40, 1.0, rng));
  std::vector<Parameter*> ps{&w};
  GradCheckOptions o;
  o.max_entries_per_param = 100;
  const auto r = grad_check(
      [&](Tape& t) {
        const Var v = t.parameter(w);
        return ad::sum_all(ad::hadamard(v, v));
      },
      ps, o);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.entries_checked, 100u);
}

TEST(GradCheck, DetectsWrongGradient) {
  Parameter w("w", Matrix(1, 1, 0.7));
  std::vector<Parameter*> ps{&w};
  auto build = [&](Tape& t) {
    const Var v = t.parameter(w);
    // Value 2w, but the recorded gradient says 3.
    return t.record(v.value() * 2.0, {v}, [v](Tape& tp, const Matrix& g) { tp.grad(v) += g * 3.0; });
  };
  const auto r = grad_check(build, ps);
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.worst.analytic, 3.0, 1e-12);
  EXPECT_NEAR(r.worst.numeric, 2.0, 1e-8);
}

// ---- Adam ----

TEST(Adam, ZeroGradientIsIdentity) {
  Rng rng(8);
  Parameter p("p", normal_matrix(3, 3, 1.0, rng));
  const Matrix before = p.value;
  AdamState st;
  Parameter* ps[] = {&p};
  for (int i = 0; i < 5; ++i) adam_step(st, ps);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Parameter p("p", Matrix::from_rows({{1.0, -2.0, 0.5}}));
  p.grad = Matrix::from_rows({{0.3, -40.0, 1e-3}});
  AdamState st;
  st.options.learning_rate = 0.01;
  Parameter* ps[] = {&p};
  adam_step(st, ps);
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.01, 1e-6);
  EXPECT_NEAR(p.value(0, 1), -2.0 + 0.01, 1e-6);
  EXPECT_NEAR(p.value(0, 2), 0.5 - 0.01, 1e-4);
  EXPECT_EQ(p.grad, Matrix(1, 3, 0.0));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, MinimizesSquare) {
  Parameter x("x", Matrix(1, 1, 1.0));
  AdamState st;
  st.options.learning_rate = 0.05;
  Parameter* ps[] = {&x};
  for (int i = 0; i < 200; ++i) {
    x.grad(0, 0) = 2.0 * x.value(0, 0);
    adam_step(st, ps);
  }
  EXPECT_LT(std::abs(x.value(0, 0)), 0.1);
}

TEST(Adam, MatchesReferenceRecurrence) {
  // Independent scalar Adam with per-parameter bias correction.
  const double lr = 0.02, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, ref = 0.3;
  Parameter x("x", Matrix(1, 1, 0.3));
  AdamState st;
  st.options.learning_rate = lr;
  Parameter* ps[] = {&x};
  for (int t = 1; t <= 25; ++t) {
    const double g = std::sin(ref) + 0.5 * ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    x.grad(0, 0) = std::sin(x.value(0, 0)) + 0.5 * x.value(0, 0);
    adam_step(st, ps);
  }
  EXPECT_NEAR(x.value(0, 0), ref, 1e-14);
}

TEST(Adam, NonFiniteGradientNamesParameterAndUpdatesNothing) {
  Parameter a("alpha", Matrix(1, 1, 1.0));
  Parameter b("beta", Matrix(1, 1, 1.0));
  a.grad(0, 0) = 1.0;
  b.grad(0, 0) = std::nan("");
  AdamState st;
  Parameter* ps[] = {&a, &b};
  try {
    adam_step(st, ps);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(a.value(0, 0), 1.0);
}

TEST(Adam, FrozenParametersKeepTheirOwnStepCount) {
  Parameter a("a", Matrix(1, 1, 0.0));
  Parameter b("b", Matrix(1, 1, 0.0));
  AdamState st;
  Parameter* both[] = {&a, &b};
  Parameter* only_a[] = {&a};
  a.grad(0, 0) = 1.0;
  adam_step(st, only_a);
  a.grad(0, 0) = 1.0;
  adam_step(st, only_a);
  a.grad(0, 0) = 1.0;
  b.grad(0, 0) = 1.0;
  adam_step(st, both);
  EXPECT_EQ(st.slots.at("a").steps, 3u);
  EXPECT_EQ(st.slots.at("b").steps, 1u);
  // b's first update is bias-corrected as a first step.
  EXPECT_NEAR(b.value(0, 0), -st.options.learning_rate, 1e-9);
}

TEST(Random, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(0, 1), derive_seed(0, 2));
  EXPECT_NE(derive_seed(1, 1), derive_seed(0, 1));
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
}
