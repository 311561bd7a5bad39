#include "pernn/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pernn/errors.hpp"
#include "pernn/random.hpp"

namespace pernn::ad {

namespace {

void require_finite(const Evaluation& ev) {
  for (std::size_t i = 0; i < ev.values.size(); ++i) {
    if (!ev.values[i].allFinite()) {
      throw NumericError("non-finite value at node " + std::to_string(i));
    }
  }
}

double loss_at(const Tape& tape, const Bindings& inputs, NodeId loss, Mode mode) {
  Evaluation ev = forward(tape, inputs, mode);
  require_finite(ev);
  return ev.scalar(loss);
}

}  // namespace

GradientCheck check_gradient(const Tape& tape, const Bindings& inputs, NodeId loss,
                             double epsilon, Mode mode) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw ValidationError("gradient check epsilon must lie in (0, 1e-2]");
  }
  for (NodeId p : tape.parameters()) {
    if (!tape.parameter_value(p).allFinite()) {
      throw NumericError("non-finite parameter '" + tape.node(p).name + "'");
    }
  }
  Evaluation ev = forward(tape, inputs, mode);
  require_finite(ev);
  GradientMap grads = backward(tape, ev, loss);

  GradientCheck result;
  Tape probe = tape;
  for (NodeId p : tape.trainable_parameters()) {
    Matrix& value = probe.parameter_value(p);
    const Matrix analytic = grads.get(p, value.rows(), value.cols());
    for (Index k = 0; k < value.size(); ++k) {
      const double saved = value(k);
      value(k) = saved + epsilon;
      const double up = loss_at(probe, inputs, loss, mode);
      value(k) = saved - epsilon;
      const double down = loss_at(probe, inputs, loss, mode);
      value(k) = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double err = std::abs(analytic(k) - fd) / std::max(1.0, std::abs(fd));
      ++result.coordinates;
      if (err > result.max_rel_error || !result.worst_parameter.valid()) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_parameter = p;
        result.worst_coordinate = k;
      }
    }
  }
  return result;
}

namespace {

struct CaseBuilder {
  Rng rng;

  Index dim() { return std::uniform_int_distribution<Index>(1, 4)(rng); }

  Matrix uniform(Index r, Index c, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Index k = 0; k < m.size(); ++k) m(k) = u(rng);
    return m;
  }

  // Values bounded away from zero, random sign.
  Matrix away_from_zero(Index r, Index c) {
    Matrix m = uniform(r, c, 0.3, 1.5);
    std::bernoulli_distribution flip(0.5);
    for (Index k = 0; k < m.size(); ++k) {
      if (flip(rng)) m(k) = -m(k);
    }
    return m;
  }

  // Reduces a matrix node to a scalar that depends on every entry.
  NodeId weighted_sum(Tape& t, NodeId y, Index r, Index c) {
    NodeId w = t.constant(uniform(r, c, -1.0, 1.0));
    return t.sum(t.multiply(y, w));
  }
};

}  // namespace

std::vector<GradcheckCase> node_kind_cases(std::uint64_t seed) {
  CaseBuilder b{make_rng(seed, "gradcheck")};
  std::vector<GradcheckCase> cases;

  auto unary_case = [&](std::string name, auto op, bool avoid_zero) {
    GradcheckCase c;
    c.name = std::move(name);
    const Index r = b.dim(), k = b.dim();
    NodeId x = c.tape.parameter("x", avoid_zero ? b.away_from_zero(r, k) : b.uniform(r, k, -1.5, 1.5));
    NodeId y = op(c.tape, x);
    c.loss = b.weighted_sum(c.tape, y, r, k);
    cases.push_back(std::move(c));
  };

  auto binary_case = [&](std::string name, auto op, bool denominator) {
    GradcheckCase c;
    c.name = std::move(name);
    const Index r = b.dim(), k = b.dim();
    NodeId x = c.tape.parameter("a", b.uniform(r, k, -1.5, 1.5));
    // Second operand broadcasts along the batch axis.
    NodeId y = c.tape.parameter("b", denominator ? b.away_from_zero(1, k) : b.uniform(1, k, -1.5, 1.5));
    c.loss = b.weighted_sum(c.tape, op(c.tape, x, y), r, k);
    cases.push_back(std::move(c));
  };

  {
    GradcheckCase c;
    c.name = "constant";
    const Index r = b.dim(), k = b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, k, -1, 1));
    NodeId cst = c.tape.constant(b.uniform(r, k, -1, 1));
    c.loss = c.tape.sum(c.tape.square(c.tape.add(x, cst)));
    cases.push_back(std::move(c));
  }
  {
    GradcheckCase c;
    c.name = "input";
    const Index r = b.dim(), k = b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, k, -1, 1));
    NodeId in = c.tape.input("u", k);
    c.inputs["u"] = b.uniform(r, k, -1, 1);
    c.loss = c.tape.sum(c.tape.square(c.tape.multiply(x, in)));
    cases.push_back(std::move(c));
  }
  {
    GradcheckCase c;
    c.name = "parameter";
    const Index r = b.dim(), k = b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, k, -1, 1));
    NodeId fixed = c.tape.parameter("fixed", b.uniform(r, k, -1, 1), false);
    c.loss = b.weighted_sum(c.tape, c.tape.multiply(x, fixed), r, k);
    cases.push_back(std::move(c));
  }

  binary_case("add", [](Tape& t, NodeId x, NodeId y) { return t.square(t.add(x, y)); }, false);
  binary_case("subtract", [](Tape& t, NodeId x, NodeId y) { return t.square(t.subtract(x, y)); }, false);
  binary_case("multiply", [](Tape& t, NodeId x, NodeId y) { return t.multiply(x, y); }, false);
  binary_case("divide", [](Tape& t, NodeId x, NodeId y) { return t.divide(x, y); }, true);
  unary_case("negate", [](Tape& t, NodeId x) { return t.square(t.negate(x)); }, false);
  unary_case("sin", [](Tape& t, NodeId x) { return t.sin(x); }, false);
  unary_case("cos", [](Tape& t, NodeId x) { return t.cos(x); }, false);
  unary_case("arctan", [](Tape& t, NodeId x) { return t.arctan(x); }, false);
  unary_case("exp", [](Tape& t, NodeId x) { return t.exp(x); }, false);
  unary_case("square", [](Tape& t, NodeId x) { return t.square(x); }, false);
  unary_case("reciprocal", [](Tape& t, NodeId x) { return t.reciprocal(x); }, true);

  {
    GradcheckCase c;
    c.name = "affine";
    const Index r = b.dim(), in = b.dim(), out = b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, in, -1, 1));
    NodeId w = c.tape.parameter("w", b.uniform(in, out, -1, 1));
    NodeId bias = c.tape.parameter("b", b.uniform(1, out, -1, 1));
    c.loss = b.weighted_sum(c.tape, c.tape.square(c.tape.affine(x, w, bias)), r, out);
    cases.push_back(std::move(c));
  }

  unary_case("leaky_relu", [](Tape& t, NodeId x) { return t.square(t.leaky_relu(x)); }, true);

  {
    GradcheckCase c;
    c.name = "concatenate";
    const Index r = b.dim(), k1 = b.dim(), k2 = b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, k1, -1, 1));
    NodeId y = c.tape.parameter("y", b.uniform(r, k2, -1, 1));
    NodeId parts[] = {x, y};
    NodeId cat = c.tape.concatenate(parts);
    c.loss = b.weighted_sum(c.tape, c.tape.square(cat), r, k1 + k2);
    cases.push_back(std::move(c));
  }
  {
    GradcheckCase c;
    c.name = "batch_normalize";
    c.mode = Mode::training;
    const Index r = 2 + b.dim(), k = b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, k, -1.5, 1.5));
    NodeId gamma = c.tape.parameter("gamma", b.uniform(1, k, 0.5, 1.5));
    NodeId beta = c.tape.parameter("beta", b.uniform(1, k, -0.5, 0.5));
    NodeId rm = c.tape.parameter("running_mean", Matrix::Zero(1, k), false);
    NodeId rv = c.tape.parameter("running_var", Matrix::Ones(1, k), false);
    NodeId y = c.tape.batch_normalize(x, gamma, beta, rm, rv);
    c.loss = b.weighted_sum(c.tape, c.tape.square(y), r, k);
    cases.push_back(std::move(c));
  }

  unary_case("mean", [](Tape& t, NodeId x) { return t.square(t.mean(t.square(x))); }, false);
  unary_case("sum", [](Tape& t, NodeId x) { return t.square(t.sum(t.sin(x))); }, false);
  unary_case("abs", [](Tape& t, NodeId x) { return t.square(t.abs(x)); }, true);
  unary_case("tanh", [](Tape& t, NodeId x) { return t.tanh(x); }, false);
  unary_case("sigmoid", [](Tape& t, NodeId x) { return t.sigmoid(x); }, false);
  unary_case("softplus", [](Tape& t, NodeId x) { return t.softplus(x); }, false);

  {
    GradcheckCase c;
    c.name = "slice";
    const Index r = b.dim(), k = 1 + b.dim();
    NodeId x = c.tape.parameter("x", b.uniform(r, k, -1, 1));
    NodeId s = c.tape.slice(x, 1, k - 1);
    c.loss = b.weighted_sum(c.tape, c.tape.square(s), r, k - 1);
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace pernn::ad
