// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include "csa/kernels.hpp"
#include "csa/rng.hpp"
#include "csa/tape.hpp"
#include "test_support.hpp"

namespace csa {
namespace {

using testing::naive_matmul;
using testing::random_matrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const auto a = random_matrix<double>(rng, 4, 3);
  EXPECT_EQ(matmul(a, MatrixD::identity(3)), a);
  EXPECT_EQ(matmul(MatrixD::identity(4), a), a);
}

TEST(Matmul, OneByOne) {
  const MatrixD a(1, 1, 2.0);
  const MatrixD b(1, 1, 3.0);
  EXPECT_EQ(matmul(a, b)[0], 6.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(2);
  const auto a = random_matrix<double>(rng, 4, 3);
  const auto b = random_matrix<double>(rng, 3, 5);
  EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, TransposedVariantsMatchOracle) {
  Rng rng(3);
  const auto a = random_matrix<double>(rng, 6, 4);
  const auto b = random_matrix<double>(rng, 5, 4);
  const auto c = random_matrix<double>(rng, 6, 3);
  EXPECT_LT(max_abs_diff(matmul_bt(a, b), naive_matmul(a, transpose(b))), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_at(a, c), naive_matmul(transpose(a), c)), 1e-12);

  MatrixD acc(6, 5, 1.0);
  matmul_bt_accumulate(a, b, acc);
  auto expected = naive_matmul(a, transpose(b));
  for (auto& v : expected.values()) v += 1.0;
  EXPECT_LT(max_abs_diff(acc, expected), 1e-12);
}

TEST(Matmul, LargeProductMatchesOracleInSinglePrecision) {
  Rng rng(4);
  const auto a = random_matrix<float>(rng, 37, 129);
  const auto b = random_matrix<float>(rng, 129, 23);
  EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-4f);
}

TEST(Matmul, ShapeMismatchIsReportedWithBothShapes) {
  const MatrixD a(2, 3);
  const MatrixD b(4, 2);
  try {
    (void)matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, BitDeterministic) {
  Rng rng(5);
  const auto a = random_matrix<float>(rng, 64, 128);
  const auto b = random_matrix<float>(rng, 128, 64);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
}

TEST(Softmax, ConstantRowIsUniform) {
  const MatrixD m(1, 3, 4.2);
  const auto s = softmax_rows(m);
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SingleColumnIsOne) {
  const MatrixD m(3, 1, -7.0);
  const auto s = softmax_rows(m);
  for (double v : s.values()) EXPECT_EQ(v, 1.0);
}

TEST(Softmax, HandEvaluatedRow) {
  const auto m = MatrixD::row_vector({0.0, std::log(3.0)});
  const auto s = softmax_rows(m);
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneForExtremeInputs) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const double spread = std::pow(10.0, rng.uniform(-3.0, 3.0));
    const auto m = random_matrix<float>(rng, 1 + rng.below(6), 1 + rng.below(40), -spread, spread);
    const auto s = softmax_rows(m);
    ASSERT_TRUE(s.all_finite());
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (float v : s.row(r)) sum += v;
      ASSERT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

MatrixD ones_row(std::size_t n) { return MatrixD(1, n, 1.0); }

TEST(LayerNorm, ConstantRowBecomesZero) {
  const MatrixD m(1, 4, 3.5);
  const auto y = layer_norm_rows(m, ones_row(4), MatrixD(1, 4), kLayerNormEps);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedRowIsUnchangedAsEpsVanishes) {
  const auto m = MatrixD::row_vector({-1.0, 1.0});
  const auto y = layer_norm_rows(m, ones_row(2), MatrixD(1, 2), 1e-14);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNorm, MatchesDirectMeanVarianceOracle) {
  Rng rng(7);
  const auto m = random_matrix<double>(rng, 5, 9, -3.0, 3.0);
  const auto gain = random_matrix<double>(rng, 1, 9);
  const auto bias = random_matrix<double>(rng, 1, 9);
  const auto y = layer_norm_rows(m, gain, bias, 1e-5);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double mean = 0.0;
    for (double v : m.row(r)) mean += v;
    mean /= 9.0;
    double var = 0.0;
    for (double v : m.row(r)) var += (v - mean) * (v - mean);
    var /= 9.0;
    for (std::size_t c = 0; c < 9; ++c) {
      const double expected = (m(r, c) - mean) / std::sqrt(var + 1e-5) * gain[c] + bias[c];
      EXPECT_NEAR(y(r, c), expected, 1e-10);
    }
  }
}

TEST(LayerNorm, PreAffineRowsHaveZeroMean) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_matrix<float>(rng, 3, 2 + rng.below(60), -50.0, 50.0);
    const auto y = layer_norm_rows(m, MatrixF(1, m.cols(), 1.0f), MatrixF(1, m.cols()),
                                   static_cast<float>(kLayerNormEps));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double mean = 0.0;
      for (float v : y.row(r)) mean += v;
      ASSERT_NEAR(mean / static_cast<double>(y.cols()), 0.0, 1e-6);
    }
  }
}

TEST(Gelu, KnownValues) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-6);
  // 0.5 * (1 + tanh(sqrt(2/pi) * (1 + 0.044715)))
  const double expected =
      0.5 * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (1.0 + 0.044715)));
  EXPECT_NEAR(gelu(1.0), expected, 1e-15);
  EXPECT_NEAR(gelu(1.0), 0.8412, 1e-4);
}

TEST(Gelu, DerivativeMatchesFiniteDifference) {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double h = 1e-5;
    const double numeric = (gelu(x + h) - gelu(x - h)) / (2 * h);
    EXPECT_NEAR(gelu_derivative(x), numeric, 1e-8) << x;
  }
}

TEST(L2Normalize, ThreeFour) {
  const auto y = l2_normalize_rows(MatrixD::row_vector({3.0, 4.0}));
  EXPECT_NEAR(y[0], 0.6, 1e-15);
  EXPECT_NEAR(y[1], 0.8, 1e-15);
}

TEST(L2Normalize, UnitRowUnchangedAndZeroRowFlagged) {
  MatrixD m(3, 2);
  m(0, 0) = 1.0;
  m(2, 0) = 0.6;
  m(2, 1) = 0.8;
  std::vector<std::size_t> zero_rows;
  const auto y = l2_normalize_rows(m, &zero_rows);
  EXPECT_EQ(y(0, 0), 1.0);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(1, 1), 0.0);
  EXPECT_NEAR(y(2, 1), 0.8, 1e-15);
  EXPECT_EQ(zero_rows, std::vector<std::size_t>{1});
}

TEST(L2Normalize, RandomRowsHaveUnitNorm) {
  Rng rng(9);
  const auto y = l2_normalize_rows(random_matrix<float>(rng, 50, 17, -10.0, 10.0));
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double ss = 0.0;
    for (float v : y.row(r)) ss += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Tape

TEST(Tape, GradientOfSumIsAllOnes) {
  Rng rng(10);
  Tape<double> tape;
  Var x = tape.input(random_matrix<double>(rng, 3, 4));
  tape.backward(tape.sum(x));
  for (double g : tape.grad(x).values()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, GradientOfSumOfProductIsOnesTimesBTransposed) {
  Rng rng(11);
  const auto a = random_matrix<double>(rng, 3, 4);
  const auto b = random_matrix<double>(rng, 4, 2);
  Tape<double> tape;
  Var va = tape.input(a);
  Var vb = tape.constant(b);
  tape.backward(tape.sum(tape.matmul(va, vb)));
  const auto expected = naive_matmul(MatrixD(3, 2, 1.0), transpose(b));
  EXPECT_LT(max_abs_diff(tape.grad(va), expected), 1e-14);
}

TEST(Tape, RejectsBackwardOnEmptyTapeAndForeignVariables) {
  Tape<double> empty;
  EXPECT_THROW(empty.backward(Var{0}), TapeError);
  Tape<double> tape;
  (void)tape.input(MatrixD(1, 1));
  EXPECT_THROW(tape.backward(Var{5}), TapeError);
  EXPECT_THROW((void)tape.value(Var{}), TapeError);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape<double> tape;
  const MatrixD c(2, 2, 1.0);
  Var vc = tape.constant(c);
  Var x = tape.input(MatrixD(2, 2, 2.0));
  tape.backward(tape.sum(tape.add(vc, x)));
  EXPECT_TRUE(tape.grad(vc).empty());
  EXPECT_FALSE(tape.grad(x).empty());
}

struct AdjointCase {
  const char* name;
  std::size_t rows, cols;
  std::function<Var(Tape<double>&, Var)> op_d;
  std::function<Var(Tape<float>&, Var)> op_f;
};

// Applies the same recorded op in double (reference, finite differences) and
// in the requested precision (analytic).
template <typename T>
Matrix<T> tape_gradient(const AdjointCase& c, const MatrixD& x0, const MatrixD& w) {
  Tape<T> tape;
  Var x = tape.input(x0.template cast<T>());
  Var y;
  if constexpr (std::is_same_v<T, double>) {
    y = c.op_d(tape, x);
  } else {
    y = c.op_f(tape, x);
  }
  const Matrix<T> seed = w.template cast<T>();
  tape.backward(y, seed);
  return tape.grad(x);
}

double weighted_output(const AdjointCase& c, const MatrixD& x0, const MatrixD& w) {
  Tape<double> tape;
  Var y = c.op_d(tape, tape.input(x0));
  const auto& v = tape.value(y);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
  return s;
}

MatrixD numeric_gradient(const AdjointCase& c, MatrixD x, const MatrixD& w, double h) {
  MatrixD g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    auto at = [&](double off) {
      x[i] = saved + off;
      return weighted_output(c, x, w);
    };
    g[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    x[i] = saved;
  }
  return g;
}

std::vector<AdjointCase> adjoint_cases() {
  Rng rng(12);
  auto b = std::make_shared<MatrixD>(random_matrix<double>(rng, 5, 3));
  auto bt = std::make_shared<MatrixD>(random_matrix<double>(rng, 6, 5));
  auto row = std::make_shared<MatrixD>(random_matrix<double>(rng, 1, 5));
  auto gain = std::make_shared<MatrixD>(random_matrix<double>(rng, 1, 5, 0.5, 1.5));
  auto bias = std::make_shared<MatrixD>(random_matrix<double>(rng, 1, 5));
  auto bf = std::make_shared<MatrixF>(b->cast<float>());
  auto btf = std::make_shared<MatrixF>(bt->cast<float>());
  auto rowf = std::make_shared<MatrixF>(row->cast<float>());
  auto gainf = std::make_shared<MatrixF>(gain->cast<float>());
  auto biasf = std::make_shared<MatrixF>(bias->cast<float>());
  const std::vector<bool> mask{true, false, true, true, false};

  std::vector<AdjointCase> cases;
  cases.push_back({"matmul", 4, 5,
                   [b](Tape<double>& t, Var x) { return t.matmul(x, t.constant(*b)); },
                   [bf](Tape<float>& t, Var x) { return t.matmul(x, t.constant(*bf)); }});
  cases.push_back({"matmul_rhs", 5, 3,
                   [bt](Tape<double>& t, Var x) { return t.matmul(t.constant(*bt), x); },
                   [btf](Tape<float>& t, Var x) { return t.matmul(t.constant(*btf), x); }});
  cases.push_back({"matmul_self", 3, 4, [](Tape<double>& t, Var x) { return t.matmul_bt(x, x); },
                   [](Tape<float>& t, Var x) { return t.matmul_bt(x, x); }});
  cases.push_back({"matmul_bt", 6, 5,
                   [bt](Tape<double>& t, Var x) { return t.matmul_bt(x, t.constant(*bt)); },
                   [btf](Tape<float>& t, Var x) { return t.matmul_bt(x, t.constant(*btf)); }});
  cases.push_back({"add_row", 4, 5,
                   [row](Tape<double>& t, Var x) { return t.add_row(x, t.constant(*row)); },
                   [rowf](Tape<float>& t, Var x) { return t.add_row(x, t.constant(*rowf)); }});
  cases.push_back({"row_of_add_row", 1, 5,
                   [b](Tape<double>& t, Var x) {
                     Var m = t.constant(*b);
                     return t.matmul(t.add_row(t.matmul_bt(m, m), x), m);
                   },
                   [bf](Tape<float>& t, Var x) {
                     Var m = t.constant(*bf);
                     return t.matmul(t.add_row(t.matmul_bt(m, m), x), m);
                   }});
  cases.push_back({"scale", 3, 4, [](Tape<double>& t, Var x) { return t.scale(x, 0.37); },
                   [](Tape<float>& t, Var x) { return t.scale(x, 0.37f); }});
  cases.push_back({"softmax", 4, 5, [](Tape<double>& t, Var x) { return t.softmax_rows(x); },
                   [](Tape<float>& t, Var x) { return t.softmax_rows(x); }});
  cases.push_back({"softmax_matmul", 4, 5,
                   [b](Tape<double>& t, Var x) { return t.matmul(t.softmax_rows(x), t.constant(*b)); },
                   [bf](Tape<float>& t, Var x) { return t.matmul(t.softmax_rows(x), t.constant(*bf)); }});
  cases.push_back({"layer_norm", 4, 5,
                   [gain, bias](Tape<double>& t, Var x) {
                     return t.layer_norm_rows(x, t.constant(*gain), t.constant(*bias));
                   },
                   [gainf, biasf](Tape<float>& t, Var x) {
                     return t.layer_norm_rows(x, t.constant(*gainf), t.constant(*biasf));
                   }});
  cases.push_back({"layer_norm_gain", 1, 5,
                   [bt, bias](Tape<double>& t, Var x) {
                     return t.layer_norm_rows(t.constant(*bt), x, t.constant(*bias));
                   },
                   [btf, biasf](Tape<float>& t, Var x) {
                     return t.layer_norm_rows(t.constant(*btf), x, t.constant(*biasf));
                   }});
  cases.push_back({"gelu", 4, 5, [](Tape<double>& t, Var x) { return t.gelu(x); },
                   [](Tape<float>& t, Var x) { return t.gelu(x); }});
  cases.push_back({"l2_normalize", 4, 5, [](Tape<double>& t, Var x) { return t.l2_normalize_rows(x); },
                   [](Tape<float>& t, Var x) { return t.l2_normalize_rows(x); }});
  cases.push_back({"mask_softmax", 3, 5,
                   [mask](Tape<double>& t, Var x) { return t.softmax_rows(t.mask_columns(x, mask, -1e9)); },
                   [mask](Tape<float>& t, Var x) { return t.softmax_rows(t.mask_columns(x, mask, -1e9f)); }});
  cases.push_back({"concat", 3, 2,
                   [](Tape<double>& t, Var x) { return t.concat_cols({x, t.gelu(x), x}); },
                   [](Tape<float>& t, Var x) { return t.concat_cols({x, t.gelu(x), x}); }});
  cases.push_back({"sum", 3, 4, [](Tape<double>& t, Var x) { return t.sum(t.gelu(x)); },
                   [](Tape<float>& t, Var x) { return t.sum(t.gelu(x)); }});
  return cases;
}

class AdjointRule : public ::testing::TestWithParam<std::size_t> {};

TEST_P(AdjointRule, MatchesCentralDifferences) {
  const auto cases = adjoint_cases();
  const AdjointCase& c = cases[GetParam()];
  Rng rng(100 + GetParam());
  const auto x = random_matrix<double>(rng, c.rows, c.cols, -1.5, 1.5);
  Tape<double> probe;
  const auto out_shape = probe.value(c.op_d(probe, probe.input(x)));
  const auto w = random_matrix<double>(rng, out_shape.rows(), out_shape.cols());

  const auto numeric = numeric_gradient(c, x, w, 1e-4);
  const auto analytic_d = tape_gradient<double>(c, x, w);
  const auto analytic_f = tape_gradient<float>(c, x, w).cast<double>();
  double err_d = 0.0;
  double err_f = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    err_d = std::max(err_d, testing::relative_error(analytic_d[i], numeric[i], 1e-6));
    err_f = std::max(err_f, testing::relative_error(analytic_f[i], numeric[i], 1e-3));
  }
  EXPECT_LT(err_d, 1e-6) << c.name;
  EXPECT_LT(err_f, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, AdjointRule, ::testing::Range<std::size_t>(0, 16),
                         [](const auto& info) { return std::string(adjoint_cases()[info.param].name); });

// ---------------------------------------------------------------------------
// Rng

TEST(Rng, SameSeedSameSequence) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, PinnedStreamForSeedZero) {
  // SplitMix64 reference outputs for seed 0.
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next_u64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06c45d188009454fULL);
}

TEST(Rng, DrawsStayInRange) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(4);
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ForkedStreamsDifferButAreReproducible) {
  const Rng base(9);
  Rng a = base.fork(1);
  Rng b = base.fork(2);
  Rng a2 = base.fork(1);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_EQ(x, a2.next_u64());
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(5);
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
  rng.shuffle(std::span<int>(v));
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 100u);
  EXPECT_NE(v[0] + v[1] * 100, 0 + 1 * 100);
}

}  // namespace
}  // namespace csa
