#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dhmp/autodiff.hpp"
#include "dhmp/error.hpp"
#include "test_util.hpp"

using namespace dhmp;
using namespace dhmp::ad;
using dhmp::testutil::numeric_gradient;
using dhmp::testutil::random_matrix;
using dhmp::testutil::relative_error;

namespace {

using MultiOp = std::function<Tensor(const std::vector<Tensor>&)>;

/// Projects op(inputs) onto a fixed random weight, compares reverse-mode
/// gradients of every input with central differences; returns the worst
/// relative error.
double gradient_error(const MultiOp& op, const std::vector<Matrix>& inputs,
                      std::uint64_t seed = 3) {
  Matrix probe_weights;
  {
    Tape t;
    std::vector<Tensor> v;
    for (const auto& m : inputs) v.push_back(t.constant(m));
    const auto out = op(v).value();
    rng::Stream s(seed);
    probe_weights = random_matrix(out.rows(), out.cols(), s);
  }
  auto scalar = [&](const std::vector<Matrix>& xs) {
    Tape t;
    std::vector<Tensor> v;
    for (const auto& m : xs) v.push_back(t.constant(m));
    return (op(v).value().array() * probe_weights.array()).sum();
  };
  Tape tape;
  std::vector<Tensor> vars;
  for (const auto& m : inputs) vars.push_back(tape.variable(m));
  auto loss = sum_all(elementwise_mul(op(vars), tape.constant(probe_weights)));
  tape.backward(loss);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Matrix& x) {
      auto xs = inputs;
      xs[k] = x;
      return scalar(xs);
    };
    Matrix numeric = numeric_gradient(f, inputs[k]);
    Matrix analytic = vars[k].grad().size() ? vars[k].grad() : Matrix::Zero(inputs[k].rows(), inputs[k].cols());
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

Matrix rnd(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  rng::Stream s(seed);
  return random_matrix(r, c, s, scale);
}

/// Values bounded away from zero so relu/div are differentiable at the probe.
Matrix away_from_zero(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Matrix m = rnd(r, c, seed);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    double& v = m.data()[k];
    v = (v >= 0 ? 1.0 : -1.0) * (0.2 + std::abs(v));
  }
  return m;
}

constexpr double kTol = 1e-4;

}  // namespace

TEST(AutodiffGradients, ElementwiseAndLinearOps) {
  EXPECT_LT(gradient_error([](auto& v) { return matmul(v[0], v[1]); },
                           {rnd(5, 7, 1), rnd(7, 4, 2)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return add(v[0], v[1]); },
                           {rnd(5, 7, 3), rnd(5, 7, 4)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return sub(v[0], v[1]); },
                           {rnd(5, 7, 5), rnd(5, 7, 6)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return add_bias(v[0], v[1]); },
                           {rnd(5, 7, 7), rnd(1, 7, 8)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return scale(v[0], -2.5); }, {rnd(5, 7, 9)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return relu(v[0]); }, {away_from_zero(5, 7, 10)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return sigmoid(v[0]); }, {rnd(5, 7, 11)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return elementwise_mul(v[0], v[1]); },
                           {rnd(5, 7, 12), rnd(5, 7, 13)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return div(v[0], v[1]); },
                           {rnd(5, 7, 14), away_from_zero(5, 7, 15)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return row_scale(v[0], v[1]); },
                           {rnd(5, 7, 16), rnd(5, 1, 17)}), kTol);
}

TEST(AutodiffGradients, StructuralOps) {
  EXPECT_LT(gradient_error([](auto& v) { return concat_cols({v[0], v[1], v[2]}); },
                           {rnd(5, 3, 1), rnd(5, 7, 2), rnd(5, 1, 3)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return slice_cols(v[0], 2, 3); }, {rnd(5, 7, 4)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return slice_rows(v[0], 1, 3); }, {rnd(5, 7, 5)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return sum_rows(v[0]); }, {rnd(5, 7, 6)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return sum_all(v[0]); }, {rnd(5, 7, 7)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return mse(v[0], v[1]); },
                           {rnd(5, 7, 8), rnd(5, 7, 9)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return layer_norm(v[0], v[1], v[2]); },
                           {rnd(5, 7, 10), rnd(1, 7, 11), rnd(1, 7, 12)}), kTol);
  EXPECT_LT(gradient_error([](auto& v) { return softmax_rows(v[0]); }, {rnd(5, 7, 13)}), kTol);
}

TEST(AutodiffGradients, GraphOps) {
  const IndexVec gather_idx = {4, 0, 0, 2, 3, 1, 4, 4};
  EXPECT_LT(gradient_error([&](auto& v) { return gather_rows(v[0], gather_idx); },
                           {rnd(5, 7, 1)}), kTol);
  const IndexVec scatter_idx = {0, 0, 1, 3, 3, 3, 4};
  EXPECT_LT(gradient_error([&](auto& v) { return scatter_add_rows(v[0], scatter_idx, 5); },
                           {rnd(7, 5, 2)}), kTol);
  const IndexVec segments = {0, 0, 1, 2, 2};
  EXPECT_LT(gradient_error([&](auto& v) { return segment_softmax(v[0], segments); },
                           {rnd(5, 7, 3)}), kTol);
}

TEST(AutodiffGradients, GumbelSoftPath) {
  Matrix noise = gumbel_from_uniform((rnd(6, 2, 4).array().abs() / 4.0 + 0.05).min(0.95).matrix());
  auto op = [&](const std::vector<Tensor>& v) {
    return gumbel_softmax_st(v[0], v[1], 0.7, noise).soft;
  };
  EXPECT_LT(gradient_error(op, {rnd(6, 1, 5), rnd(6, 1, 6)}), kTol);
}

TEST(AutodiffOps, ReluBackwardAtProbePoints) {
  Tape t;
  auto x = t.variable((Matrix(1, 2) << -1.0, 2.0).finished());
  t.backward(sum_all(relu(x)));
  EXPECT_EQ(x.grad()(0, 0), 0.0);
  EXPECT_EQ(x.grad()(0, 1), 1.0);
}

TEST(AutodiffOps, SegmentSoftmaxProperties) {
  Tape t;
  auto eq = segment_softmax(t.constant(Matrix::Zero(3, 1)), {0, 0, 0});
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(eq.value()(r, 0), 1.0 / 3.0, 1e-15);

  rng::Stream s(8);
  const IndexVec seg = {0, 0, 0, 1, 2, 2, 2, 2, 5, 5};
  Matrix x = random_matrix(10, 3, s, 4.0);
  auto y = segment_softmax(t.constant(x), seg).value();
  Matrix shifted = x;
  const double shifts[] = {3.0, -7.0, 0.5, 0.0, 0.0, 100.0};
  for (std::size_t k = 0; k < seg.size(); ++k) shifted.row(k).array() += shifts[seg[k]];
  auto ys = segment_softmax(t.constant(shifted), seg).value();
  EXPECT_LT((y - ys).cwiseAbs().maxCoeff(), 1e-12);
  Matrix sums = Matrix::Zero(6, 3);
  for (std::size_t k = 0; k < seg.size(); ++k) sums.row(seg[k]) += y.row(k);
  for (int id : {0, 1, 2, 5}) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(sums(id, c), 1.0, 1e-12);
  }
  EXPECT_THROW(segment_softmax(t.constant(Matrix::Zero(3, 1)), {1, 0, 0}), InvalidArgument);
}

TEST(AutodiffOps, ScatterOfGatherIdentity) {
  Tape t;
  Matrix x = rnd(6, 4, 2);
  IndexVec id = {0, 1, 2, 3, 4, 5};
  auto y = scatter_add_rows(gather_rows(t.constant(x), id), id, 6);
  EXPECT_EQ(y.value(), x);
}

TEST(AutodiffOps, ShapeErrorsAndNumericErrors) {
  Tape t;
  auto a = t.constant(Matrix::Ones(2, 3));
  auto b = t.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(matmul(a, b), InvalidArgument);
  EXPECT_THROW(gather_rows(a, {0, 2}), InvalidArgument);
  auto zero = t.constant(Matrix::Zero(2, 3));
  try {
    div(a, zero);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("div"), std::string::npos);
  }
}

TEST(AutodiffOps, GradientsAccumulateAcrossUses) {
  Tape t;
  auto x = t.variable(Matrix::Constant(1, 1, 3.0));
  t.backward(sum_all(elementwise_mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
  // A second backward on the same tape starts from zeroed buffers.
  t.backward(sum_all(elementwise_mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Gumbel, ZeroNoiseArgmax) {
  Tape t;
  auto keep = t.constant(Matrix::Constant(1, 1, 2.0));
  auto drop = t.constant(Matrix::Zero(1, 1));
  for (double tau : {0.1, 1.0, 5.0}) {
    auto s = gumbel_softmax_st(keep, drop, tau, Matrix::Zero(1, 2));
    EXPECT_EQ(s.hard.value()(0, 0), 1.0);
    EXPECT_EQ(s.hard.value()(0, 1), 0.0);
  }
  auto eq = t.constant(Matrix::Zero(1, 1));
  Matrix noise(1, 2);
  noise << 0.3, -0.2;
  EXPECT_EQ(gumbel_softmax_st(eq, eq, 1.0, noise).hard.value()(0, 0), 1.0);
  noise << -0.3, 0.2;
  EXPECT_EQ(gumbel_softmax_st(eq, eq, 1.0, noise).hard.value()(0, 0), 0.0);
  EXPECT_THROW(gumbel_softmax_st(eq, eq, 0.0, noise), InvalidArgument);
}

TEST(Gumbel, StraightThroughGradientEqualsSoftGradient) {
  Matrix logits = rnd(5, 1, 3);
  Matrix noise = gumbel_from_uniform(Matrix::Constant(5, 2, 0.4));
  Tape t1;
  auto k1 = t1.variable(logits);
  auto z = t1.constant(Matrix::Zero(5, 1));
  auto s1 = gumbel_softmax_st(k1, z, 0.8, noise);
  Matrix w = rnd(5, 2, 9);
  t1.backward(sum_all(elementwise_mul(s1.hard, t1.constant(w))));
  Tape t2;
  auto k2 = t2.variable(logits);
  auto s2 = gumbel_softmax_st(k2, t2.constant(Matrix::Zero(5, 1)), 0.8, noise);
  t2.backward(sum_all(elementwise_mul(s2.soft, t2.constant(w))));
  EXPECT_LT(relative_error(k1.grad(), k2.grad()), 1e-15);
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_EQ(s1.hard.value().row(r).sum(), 1.0);
  }
  EXPECT_THROW(gumbel_from_uniform(Matrix::Zero(1, 1)), InvalidArgument);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p{"p", rnd(3, 2, 1), Matrix::Zero(3, 2)};
  Matrix before = p.value;
  Adam opt({&p});
  opt.step(0.1);
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p{"p", Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0)};
  Adam opt({&p});
  opt.step(0.1);
  // m_hat = 1, v_hat = 1, update = 0.1 / (1 + 1e-8).
  EXPECT_NEAR(p.value(0, 0), 0.5 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, QuadraticBowlMatchesScalarRecurrence) {
  Parameter p{"x", Matrix::Constant(1, 1, 1.0), Matrix()};
  Adam opt({&p});
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 200; ++t) {
    p.grad = Matrix::Constant(1, 1, 2.0 * p.value(0, 0));
    opt.step(1e-2);
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p.value(0, 0), x, 1e-12);
  // Adam settles into an oscillation of roughly lr around the minimum.
  EXPECT_LT(std::abs(p.value(0, 0)), 5e-2);
}

TEST(Adam, RejectsBadInput) {
  Parameter p{"p", Matrix::Zero(2, 2), Matrix::Zero(3, 2)};
  Adam opt({&p});
  EXPECT_THROW(opt.step(0.1), InvalidArgument);
  p.grad = Matrix::Zero(2, 2);
  EXPECT_THROW(opt.step(0.0), InvalidArgument);
}
