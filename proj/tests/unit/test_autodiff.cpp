#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pernn/autodiff/gradcheck.hpp"
#include "pernn/autodiff/tape.hpp"
#include "pernn/errors.hpp"
#include "pernn/random.hpp"

using namespace pernn;
using namespace pernn::ad;

namespace {

Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST(Forward, SinOfZero) {
  Tape t;
  NodeId x = t.input("x", 1);
  NodeId y = t.sin(x);
  auto ev = forward(t, {{"x", scalar_matrix(0.0)}});
  EXPECT_EQ(ev.scalar(y), 0.0);
}

TEST(Forward, ArctanOfOne) {
  Tape t;
  NodeId x = t.input("x", 1);
  NodeId y = t.arctan(x);
  auto ev = forward(t, {{"x", scalar_matrix(1.0)}});
  EXPECT_NEAR(ev.scalar(y), std::numbers::pi / 4, 1e-15);
}

TEST(Forward, SteeringLawExample) {
  // atan(2 * 2.5 * sin(0.2) / 10), evaluated independently.
  const double expected = 0.09900986205767322;
  Tape t;
  NodeId theta = t.input("theta", 1);
  NodeId l = t.input("l", 1);
  NodeId num = t.multiply(t.scalar(2.0 * 2.5), t.sin(theta));
  NodeId delta = t.arctan(t.divide(num, l));
  auto ev = forward(t, {{"theta", scalar_matrix(0.2)}, {"l", scalar_matrix(10.0)}});
  EXPECT_NEAR(ev.scalar(delta), expected, 1e-15);
}

TEST(Forward, UnboundInputThrows) {
  Tape t;
  t.sin(t.input("x", 1));
  EXPECT_THROW(forward(t, {}), ValidationError);
}

TEST(Forward, AffineShapeMismatchThrows) {
  Tape t;
  NodeId x = t.input("x", 3);
  NodeId w = t.parameter("w", Matrix::Zero(2, 4));
  NodeId b = t.parameter("b", Matrix::Zero(1, 4));
  t.affine(x, w, b);
  EXPECT_THROW(forward(t, {{"x", Matrix::Zero(5, 3)}}), ValidationError);
}

TEST(Forward, InputWidthMismatchThrows) {
  Tape t;
  t.sin(t.input("x", 2));
  EXPECT_THROW(forward(t, {{"x", Matrix::Zero(1, 3)}}), ValidationError);
}

TEST(Forward, TinyDenominatorThrows) {
  Tape t;
  NodeId x = t.input("x", 1);
  NodeId r = t.reciprocal(x);
  NodeId d = t.divide(t.scalar(1.0), x);
  (void)r;
  (void)d;
  EXPECT_THROW(forward(t, {{"x", scalar_matrix(1e-13)}}), NumericError);
  EXPECT_NO_THROW(forward(t, {{"x", scalar_matrix(1e-11)}}));
}

TEST(Backward, ArctanDerivative) {
  Tape t;
  NodeId x = t.parameter("x", scalar_matrix(1.0));
  NodeId y = t.arctan(x);
  auto ev = forward(t, {});
  auto g = backward(t, ev, y);
  EXPECT_NEAR(g.get(x, 1, 1)(0, 0), 0.5, 1e-15);
}

TEST(Backward, ExpDerivative) {
  Tape t;
  NodeId x = t.parameter("x", scalar_matrix(0.0));
  NodeId y = t.exp(x);
  auto g = backward(t, forward(t, {}), y);
  EXPECT_EQ(g.get(x, 1, 1)(0, 0), 1.0);
}

TEST(Backward, FixedParametersExcluded) {
  Tape t;
  NodeId c = t.parameter("c", scalar_matrix(3.0), false);
  NodeId x = t.parameter("x", scalar_matrix(2.0));
  NodeId y = t.multiply(c, x);
  auto g = backward(t, forward(t, {}), y);
  EXPECT_TRUE(g.contains(x));
  EXPECT_FALSE(g.contains(c));
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.get(x, 1, 1)(0, 0), 3.0);
}

TEST(Backward, LossAdjointIsOne) {
  Tape t;
  NodeId x = t.parameter("x", scalar_matrix(0.7));
  NodeId y = t.square(x);
  auto adj = backward_all(t, forward(t, {}), y);
  EXPECT_EQ(adj[y.index](0, 0), 1.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tape t;
  NodeId x = t.parameter("x", Matrix::Ones(2, 2));
  NodeId y = t.square(x);
  EXPECT_THROW(backward(t, forward(t, {}), y), ValidationError);
}

TEST(Backward, MissingForwardThrows) {
  Tape t;
  NodeId x = t.parameter("x", scalar_matrix(1.0));
  NodeId y = t.square(x);
  EXPECT_THROW(backward(t, Evaluation{}, y), ValidationError);
}

TEST(Backward, IdempotentAndDeterministic) {
  for (auto& c : node_kind_cases(11)) {
    auto ev = forward(c.tape, c.inputs, c.mode);
    auto g1 = backward(c.tape, ev, c.loss);
    auto g2 = backward(c.tape, ev, c.loss);
    auto ev2 = forward(c.tape, c.inputs, c.mode);
    auto g3 = backward(c.tape, ev2, c.loss);
    EXPECT_TRUE(g1 == g2) << c.name;
    EXPECT_TRUE(g1 == g3) << c.name;
    for (std::size_t i = 0; i < ev.values.size(); ++i) {
      EXPECT_TRUE(ev.values[i] == ev2.values[i]) << c.name;
    }
  }
}

TEST(Gradcheck, EveryNodeKindOverSeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto& c : node_kind_cases(seed)) {
      auto r = check_gradient(c.tape, c.inputs, c.loss, 1e-5, c.mode);
      EXPECT_LE(r.max_rel_error, 1e-4) << c.name << " seed " << seed;
      EXPECT_GT(r.coordinates, 0u) << c.name;
    }
  }
}

TEST(Gradcheck, CoversAllNodeKinds) {
  auto cases = node_kind_cases(3);
  for (int k = 0; k <= static_cast<int>(OpKind::slice); ++k) {
    const auto name = op_name(static_cast<OpKind>(k));
    bool found = false;
    for (auto& c : cases) found = found || c.name == name;
    EXPECT_TRUE(found) << name;
  }
}

TEST(Gradcheck, AffinePlusMseLoss) {
  Tape t;
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  auto randm = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index k = 0; k < m.size(); ++k) m(k) = n(rng);
    return m;
  };
  NodeId x = t.input("x", 3);
  NodeId y = t.input("y", 2);
  NodeId w = t.parameter("w", randm(3, 2));
  NodeId b = t.parameter("b", randm(1, 2));
  NodeId loss = t.mean(t.square(t.subtract(t.affine(x, w, b), y)));
  Bindings in{{"x", randm(8, 3)}, {"y", randm(8, 2)}};
  EXPECT_LE(check_gradient(t, in, loss).max_rel_error, 1e-4);
}

TEST(Gradcheck, DetectsCorruptedAdjoint) {
  for (auto& c : node_kind_cases(4)) {
    if (c.name != "arctan") continue;
    pernn::ad::testing::ScopedAdjointFault fault(OpKind::arctan, 1.5);
    auto r = check_gradient(c.tape, c.inputs, c.loss, 1e-5, c.mode);
    EXPECT_GT(r.max_rel_error, 1e-4);
  }
}

TEST(Gradcheck, RejectsBadEpsilon) {
  auto cases = node_kind_cases(1);
  EXPECT_THROW(check_gradient(cases[0].tape, cases[0].inputs, cases[0].loss, 0.1), ValidationError);
}

TEST(Gradcheck, NonFiniteIntermediateThrows) {
  Tape t;
  NodeId x = t.parameter("x", scalar_matrix(800.0));
  NodeId y = t.exp(x);
  EXPECT_THROW(check_gradient(t, {}, y), NumericError);
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  Tape t;
  NodeId x = t.input("x", 2);
  NodeId g = t.parameter("g", Matrix::Ones(1, 2));
  NodeId b = t.parameter("b", Matrix::Zero(1, 2));
  NodeId rm = t.parameter("rm", Matrix::Zero(1, 2), false);
  NodeId rv = t.parameter("rv", Matrix::Ones(1, 2), false);
  NodeId y = t.batch_normalize(x, g, b, rm, rv);
  Matrix in(3, 2);
  in << 1, 2, 3, 4, 5, 6;
  auto inf = forward(t, {{"x", in}}, Mode::inference);
  EXPECT_NEAR(inf.value(y)(0, 0), 1.0 / std::sqrt(1.0 + kBatchNormEps), 1e-15);
  auto tr = forward(t, {{"x", in}}, Mode::training);
  EXPECT_NEAR(tr.value(y).col(0).sum(), 0.0, 1e-12);
  update_running_stats(t, tr);
  EXPECT_NEAR(t.parameter_value(rm)(0, 0), 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(t.parameter_value(rv)(0, 0), 0.9 + 0.1 * 4.0, 1e-15);
}

TEST(BatchNorm, RunningStatsMustBeFixed) {
  Tape t;
  NodeId x = t.input("x", 1);
  NodeId g = t.parameter("g", Matrix::Ones(1, 1));
  NodeId b = t.parameter("b", Matrix::Zero(1, 1));
  NodeId rm = t.parameter("rm", Matrix::Zero(1, 1), true);
  NodeId rv = t.parameter("rv", Matrix::Ones(1, 1), false);
  EXPECT_THROW(t.batch_normalize(x, g, b, rm, rv), ValidationError);
}

TEST(Broadcast, RowVectorAgainstBatch) {
  Tape t;
  NodeId x = t.input("x", 2);
  NodeId s = t.parameter("s", Matrix::Constant(1, 2, 2.0));
  NodeId loss = t.sum(t.multiply(x, s));
  Matrix in(3, 2);
  in << 1, 2, 3, 4, 5, 6;
  auto ev = forward(t, {{"x", in}});
  EXPECT_EQ(ev.scalar(loss), 42.0);
  auto g = backward(t, ev, loss);
  EXPECT_EQ(g.get(s, 1, 2)(0, 0), 9.0);
  EXPECT_EQ(g.get(s, 1, 2)(0, 1), 12.0);
}
