#include "pernn/autodiff/tape.hpp"

#include <cmath>
#include <sstream>

#include "pernn/errors.hpp"

namespace pernn::ad {

namespace {

thread_local std::optional<std::pair<OpKind, double>> g_adjoint_fault;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Index broadcast_dim(Index a, Index b, OpKind kind, std::uint32_t node) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ValidationError("shape mismatch at node " + std::to_string(node) + " (" +
                        std::string(op_name(kind)) + "): " + std::to_string(a) + " vs " +
                        std::to_string(b));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast adjoint back down to the operand's shape.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void guard_denominator(const Matrix& den, std::uint32_t node, OpKind kind) {
  if ((den.array().abs() < kMinDenominator).any()) {
    throw NumericError("denominator below " + std::to_string(kMinDenominator) + " at node " +
                       std::to_string(node) + " (" + std::string(op_name(kind)) + ")");
  }
}

void accumulate(std::vector<Matrix>& adj, NodeId id, const Matrix& g) {
  Matrix& slot = adj[id.index];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::divide: return "divide";
    case OpKind::negate: return "negate";
    case OpKind::sin: return "sin";
    case OpKind::cos: return "cos";
    case OpKind::arctan: return "arctan";
    case OpKind::exp: return "exp";
    case OpKind::square: return "square";
    case OpKind::reciprocal: return "reciprocal";
    case OpKind::affine: return "affine";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::concatenate: return "concatenate";
    case OpKind::batch_normalize: return "batch_normalize";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::abs: return "abs";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::slice: return "slice";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tape construction

NodeId Tape::push(Node node) {
  for (NodeId p : node.parents) check(p);
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(NodeId id) const {
  if (!id.valid() || id.index >= nodes_.size()) {
    throw ValidationError("invalid node handle " + std::to_string(id.index));
  }
}

NodeId Tape::constant(Matrix value) {
  Node n;
  n.kind = OpKind::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

NodeId Tape::input(std::string name, Index cols) {
  if (cols < 1) throw ValidationError("input '" + name + "' must have at least one column");
  Node n;
  n.kind = OpKind::input;
  n.name = std::move(name);
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::parameter(std::string name, Matrix value, bool requires_grad) {
  Node n;
  n.kind = OpKind::parameter;
  n.name = std::move(name);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::unary(OpKind kind, NodeId a) {
  Node n;
  n.kind = kind;
  n.parents = {a};
  return push(std::move(n));
}

NodeId Tape::binary(OpKind kind, NodeId a, NodeId b) {
  Node n;
  n.kind = kind;
  n.parents = {a, b};
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) { return binary(OpKind::add, a, b); }
NodeId Tape::subtract(NodeId a, NodeId b) { return binary(OpKind::subtract, a, b); }
NodeId Tape::multiply(NodeId a, NodeId b) { return binary(OpKind::multiply, a, b); }
NodeId Tape::divide(NodeId a, NodeId b) { return binary(OpKind::divide, a, b); }
NodeId Tape::negate(NodeId a) { return unary(OpKind::negate, a); }
NodeId Tape::sin(NodeId a) { return unary(OpKind::sin, a); }
NodeId Tape::cos(NodeId a) { return unary(OpKind::cos, a); }
NodeId Tape::arctan(NodeId a) { return unary(OpKind::arctan, a); }
NodeId Tape::exp(NodeId a) { return unary(OpKind::exp, a); }
NodeId Tape::square(NodeId a) { return unary(OpKind::square, a); }
NodeId Tape::reciprocal(NodeId a) { return unary(OpKind::reciprocal, a); }
NodeId Tape::abs(NodeId a) { return unary(OpKind::abs, a); }
NodeId Tape::tanh(NodeId a) { return unary(OpKind::tanh, a); }
NodeId Tape::sigmoid(NodeId a) { return unary(OpKind::sigmoid, a); }
NodeId Tape::softplus(NodeId a) { return unary(OpKind::softplus, a); }
NodeId Tape::leaky_relu(NodeId a) { return unary(OpKind::leaky_relu, a); }
NodeId Tape::mean(NodeId a) { return unary(OpKind::mean, a); }
NodeId Tape::sum(NodeId a) { return unary(OpKind::sum, a); }

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  Node n;
  n.kind = OpKind::affine;
  n.parents = {x, w, b};
  return push(std::move(n));
}

NodeId Tape::concatenate(std::span<const NodeId> parts) {
  if (parts.empty()) throw ValidationError("concatenate needs at least one part");
  Node n;
  n.kind = OpKind::concatenate;
  n.parents.assign(parts.begin(), parts.end());
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, Index begin, Index count) {
  if (begin < 0 || count < 1) throw ValidationError("slice range must be non-empty");
  Node n;
  n.kind = OpKind::slice;
  n.parents = {a};
  n.begin = begin;
  n.cols = count;
  return push(std::move(n));
}

NodeId Tape::batch_normalize(NodeId x, NodeId gamma, NodeId beta, NodeId running_mean,
                             NodeId running_var) {
  for (NodeId s : {running_mean, running_var}) {
    check(s);
    const Node& sn = nodes_[s.index];
    if (sn.kind != OpKind::parameter || sn.requires_grad) {
      throw ValidationError("batch_normalize running statistics must be fixed parameters");
    }
  }
  Node n;
  n.kind = OpKind::batch_normalize;
  n.parents = {x, gamma, beta, running_mean, running_var};
  return push(std::move(n));
}

void Tape::set_output(std::string name, NodeId node) {
  check(node);
  outputs_[std::move(name)] = node;
}

NodeId Tape::output(std::string_view name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw ValidationError("tape has no output '" + std::string(name) + "'");
  return it->second;
}

bool Tape::has_output(std::string_view name) const { return outputs_.find(name) != outputs_.end(); }

const Node& Tape::node(NodeId id) const {
  check(id);
  return nodes_[id.index];
}

Matrix& Tape::parameter_value(NodeId id) {
  check(id);
  Node& n = nodes_[id.index];
  if (n.kind != OpKind::parameter) throw ValidationError("node is not a parameter");
  return n.value;
}

const Matrix& Tape::parameter_value(NodeId id) const {
  const Node& n = node(id);
  if (n.kind != OpKind::parameter) throw ValidationError("node is not a parameter");
  return n.value;
}

std::vector<NodeId> Tape::parameters() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::parameter) out.push_back(NodeId{static_cast<std::uint32_t>(i)});
  }
  return out;
}

std::vector<NodeId> Tape::trainable_parameters() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::parameter && nodes_[i].requires_grad) {
      out.push_back(NodeId{static_cast<std::uint32_t>(i)});
    }
  }
  return out;
}

std::optional<NodeId> Tape::find_parameter(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::parameter && nodes_[i].name == name) {
      return NodeId{static_cast<std::uint32_t>(i)};
    }
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, Index>> Tape::inputs() const {
  std::vector<std::pair<std::string, Index>> out;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::input) out.emplace_back(n.name, n.cols);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

double Evaluation::scalar(NodeId id) const {
  const Matrix& m = value(id);
  if (m.rows() != 1 || m.cols() != 1) throw ValidationError("node value is not scalar");
  return m(0, 0);
}

const Matrix* GradientMap::find(NodeId id) const {
  auto it = grads_.find(id.index);
  return it == grads_.end() ? nullptr : &it->second;
}

Matrix GradientMap::get(NodeId id, Index rows, Index cols) const {
  if (const Matrix* g = find(id)) return *g;
  return Matrix::Zero(rows, cols);
}

double GradientMap::squared_norm() const {
  double s = 0.0;
  for (const auto& [id, g] : grads_) s += g.squaredNorm();
  return s;
}

bool operator==(const GradientMap& a, const GradientMap& b) {
  if (a.grads_.size() != b.grads_.size()) return false;
  for (const auto& [id, g] : a.grads_) {
    auto it = b.grads_.find(id);
    if (it == b.grads_.end()) return false;
    if (g.rows() != it->second.rows() || g.cols() != it->second.cols()) return false;
    if (g != it->second) return false;
  }
  return true;
}

Evaluation forward(const Tape& tape, const Bindings& inputs, Mode mode) {
  if (tape.size() == 0) return Evaluation{mode, {}, {}};
  return forward_prefix(tape, inputs, mode, NodeId{static_cast<std::uint32_t>(tape.size() - 1)});
}

Evaluation forward_prefix(const Tape& tape, const Bindings& inputs, Mode mode, NodeId last) {
  if (!last.valid() || last.index >= tape.size()) throw ValidationError("invalid node handle");
  Evaluation ev;
  ev.mode = mode;
  ev.values.resize(tape.size());
  ev.aux.resize(tape.size());

  for (std::uint32_t i = 0; i <= last.index; ++i) {
    const Node& n = tape.node(NodeId{i});
    auto val = [&](std::size_t k) -> const Matrix& { return ev.values[n.parents[k].index]; };
    Matrix& out = ev.values[i];

    switch (n.kind) {
      case OpKind::constant:
      case OpKind::parameter:
        out = n.value;
        break;
      case OpKind::input: {
        auto it = inputs.find(n.name);
        if (it == inputs.end()) throw ValidationError("unbound input '" + n.name + "'");
        if (it->second.cols() != n.cols) {
          throw ValidationError("input '" + n.name + "' expects " + std::to_string(n.cols) +
                                " columns, got " + shape_str(it->second));
        }
        out = it->second;
        break;
      }
      case OpKind::add:
      case OpKind::subtract:
      case OpKind::multiply:
      case OpKind::divide: {
        const Matrix& a = val(0);
        const Matrix& b = val(1);
        const Index r = broadcast_dim(a.rows(), b.rows(), n.kind, i);
        const Index c = broadcast_dim(a.cols(), b.cols(), n.kind, i);
        const Matrix ea = expand(a, r, c);
        const Matrix eb = expand(b, r, c);
        if (n.kind == OpKind::add) out = ea + eb;
        if (n.kind == OpKind::subtract) out = ea - eb;
        if (n.kind == OpKind::multiply) out = ea.cwiseProduct(eb);
        if (n.kind == OpKind::divide) {
          guard_denominator(eb, i, n.kind);
          out = ea.cwiseQuotient(eb);
        }
        break;
      }
      case OpKind::negate: out = -val(0); break;
      case OpKind::sin: out = val(0).unaryExpr([](double v) { return std::sin(v); }); break;
      case OpKind::cos: out = val(0).unaryExpr([](double v) { return std::cos(v); }); break;
      case OpKind::arctan: out = val(0).unaryExpr([](double v) { return std::atan(v); }); break;
      case OpKind::exp: out = val(0).unaryExpr([](double v) { return std::exp(v); }); break;
      case OpKind::square: out = val(0).array().square().matrix(); break;
      case OpKind::reciprocal:
        guard_denominator(val(0), i, n.kind);
        out = val(0).array().inverse().matrix();
        break;
      case OpKind::abs: out = val(0).array().abs().matrix(); break;
      case OpKind::tanh: out = val(0).unaryExpr([](double v) { return std::tanh(v); }); break;
      case OpKind::sigmoid: out = val(0).unaryExpr(&stable_sigmoid); break;
      case OpKind::softplus: out = val(0).unaryExpr(&stable_softplus); break;
      case OpKind::leaky_relu:
        out = val(0).unaryExpr([](double v) { return v > 0 ? v : kLeakySlope * v; });
        break;
      case OpKind::affine: {
        const Matrix& x = val(0);
        const Matrix& w = val(1);
        const Matrix& b = val(2);
        if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
          throw ValidationError("affine shape mismatch at node " + std::to_string(i) + ": x " +
                                shape_str(x) + ", W " + shape_str(w) + ", b " + shape_str(b));
        }
        out = x * w;
        out.rowwise() += b.row(0);
        break;
      }
      case OpKind::concatenate: {
        const Index rows = val(0).rows();
        Index cols = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          if (val(k).rows() != rows) {
            throw ValidationError("concatenate row mismatch at node " + std::to_string(i));
          }
          cols += val(k).cols();
        }
        out.resize(rows, cols);
        Index at = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          out.middleCols(at, val(k).cols()) = val(k);
          at += val(k).cols();
        }
        break;
      }
      case OpKind::slice: {
        const Matrix& a = val(0);
        if (n.begin + n.cols > a.cols()) {
          throw ValidationError("slice out of range at node " + std::to_string(i));
        }
        out = a.middleCols(n.begin, n.cols);
        break;
      }
      case OpKind::batch_normalize: {
        const Matrix& x = val(0);
        const Matrix& gamma = val(1);
        const Matrix& beta = val(2);
        const Index c = x.cols();
        if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c) {
          throw ValidationError("batch_normalize shape mismatch at node " + std::to_string(i));
        }
        Matrix stats(3, c);
        if (mode == Mode::training) {
          const double rows = static_cast<double>(x.rows());
          stats.row(0) = x.colwise().mean();
          const Matrix centered = x.rowwise() - stats.row(0);
          const Eigen::RowVectorXd var = centered.array().square().colwise().sum().matrix() / rows;
          stats.row(1) = (var.array() + kBatchNormEps).rsqrt().matrix();
          stats.row(2) = x.rows() > 1 ? Eigen::RowVectorXd(var * rows / (rows - 1.0))
                                      : Eigen::RowVectorXd(var);
        } else {
          stats.row(0) = val(3).row(0);
          stats.row(1) = (val(4).array() + kBatchNormEps).rsqrt().matrix().row(0);
          stats.row(2) = val(4).row(0);
        }
        Matrix xhat = (x.rowwise() - stats.row(0)).array().rowwise() * stats.row(1).array();
        out = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
        out.rowwise() += beta.row(0);
        ev.aux[i] = std::move(stats);
        break;
      }
      case OpKind::mean:
        if (val(0).size() == 0) throw ValidationError("mean of empty node");
        out = Matrix::Constant(1, 1, val(0).mean());
        break;
      case OpKind::sum: out = Matrix::Constant(1, 1, val(0).sum()); break;
    }
  }
  return ev;
}

std::vector<Matrix> backward_all(const Tape& tape, const Evaluation& ev, NodeId loss) {
  if (ev.values.size() != tape.size()) throw ValidationError("forward values missing for tape");
  const Matrix& lv = ev.value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw ValidationError("loss node is not scalar");

  // needs[i]: node i depends on a trainable parameter.
  std::vector<char> needs(tape.size(), 0);
  for (std::uint32_t i = 0; i < tape.size(); ++i) {
    const Node& n = tape.node(NodeId{i});
    if (n.kind == OpKind::parameter) {
      needs[i] = n.requires_grad;
    } else {
      for (NodeId p : n.parents) needs[i] = needs[i] || needs[p.index];
    }
  }

  std::vector<Matrix> adj(tape.size());
  if (!needs[loss.index]) return adj;
  adj[loss.index] = Matrix::Ones(1, 1);

  for (std::int64_t ii = loss.index; ii >= 0; --ii) {
    const auto i = static_cast<std::uint32_t>(ii);
    if (adj[i].size() == 0 || !needs[i]) continue;
    const Node& n = tape.node(NodeId{i});
    if (n.parents.empty()) continue;

    Matrix g = adj[i];
    if (g_adjoint_fault && g_adjoint_fault->first == n.kind) g *= g_adjoint_fault->second;

    auto val = [&](std::size_t k) -> const Matrix& { return ev.values[n.parents[k].index]; };
    auto need = [&](std::size_t k) { return needs[n.parents[k].index] != 0; };
    auto send = [&](std::size_t k, const Matrix& contrib) {
      accumulate(adj, n.parents[k], contrib);
    };
    const Matrix& y = ev.values[i];

    switch (n.kind) {
      case OpKind::constant:
      case OpKind::input:
      case OpKind::parameter:
        break;
      case OpKind::add:
      case OpKind::subtract:
      case OpKind::multiply:
      case OpKind::divide: {
        const Matrix& a = val(0);
        const Matrix& b = val(1);
        const Index r = g.rows();
        const Index c = g.cols();
        if (need(0)) {
          Matrix ga;
          if (n.kind == OpKind::add || n.kind == OpKind::subtract) ga = g;
          if (n.kind == OpKind::multiply) ga = g.cwiseProduct(expand(b, r, c));
          if (n.kind == OpKind::divide) ga = g.cwiseQuotient(expand(b, r, c));
          send(0, reduce_to(ga, a.rows(), a.cols()));
        }
        if (need(1)) {
          Matrix gb;
          if (n.kind == OpKind::add) gb = g;
          if (n.kind == OpKind::subtract) gb = -g;
          if (n.kind == OpKind::multiply) gb = g.cwiseProduct(expand(a, r, c));
          if (n.kind == OpKind::divide) {
            const Matrix eb = expand(b, r, c);
            gb = -(g.cwiseProduct(y)).cwiseQuotient(eb);
          }
          send(1, reduce_to(gb, b.rows(), b.cols()));
        }
        break;
      }
      case OpKind::negate: send(0, -g); break;
      case OpKind::sin: send(0, g.cwiseProduct(val(0).unaryExpr([](double v) { return std::cos(v); }))); break;
      case OpKind::cos: send(0, -g.cwiseProduct(val(0).unaryExpr([](double v) { return std::sin(v); }))); break;
      case OpKind::arctan:
        send(0, (g.array() / (1.0 + val(0).array().square())).matrix());
        break;
      case OpKind::exp: send(0, g.cwiseProduct(y)); break;
      case OpKind::square: send(0, (2.0 * g.array() * val(0).array()).matrix()); break;
      case OpKind::reciprocal: send(0, (-g.array() * y.array().square()).matrix()); break;
      case OpKind::abs:
        send(0, (g.array() * val(0).array().sign()).matrix());
        break;
      case OpKind::tanh: send(0, (g.array() * (1.0 - y.array().square())).matrix()); break;
      case OpKind::sigmoid: send(0, (g.array() * y.array() * (1.0 - y.array())).matrix()); break;
      case OpKind::softplus:
        send(0, g.cwiseProduct(val(0).unaryExpr(&stable_sigmoid)));
        break;
      case OpKind::leaky_relu:
        send(0, g.cwiseProduct(val(0).unaryExpr([](double v) { return v > 0 ? 1.0 : kLeakySlope; })));
        break;
      case OpKind::affine: {
        if (need(0)) send(0, g * val(1).transpose());
        if (need(1)) send(1, val(0).transpose() * g);
        if (need(2)) send(2, g.colwise().sum());
        break;
      }
      case OpKind::concatenate: {
        Index at = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          const Index w = val(k).cols();
          if (need(k)) send(k, g.middleCols(at, w));
          at += w;
        }
        break;
      }
      case OpKind::slice: {
        if (need(0)) {
          Matrix ga = Matrix::Zero(val(0).rows(), val(0).cols());
          ga.middleCols(n.begin, n.cols) = g;
          send(0, ga);
        }
        break;
      }
      case OpKind::batch_normalize: {
        const Matrix& x = val(0);
        const Matrix& gamma = val(1);
        const Matrix& stats = ev.aux[i];
        const Matrix xhat = (x.rowwise() - stats.row(0)).array().rowwise() * stats.row(1).array();
        if (need(1)) send(1, (g.array() * xhat.array()).colwise().sum().matrix());
        if (need(2)) send(2, g.colwise().sum());
        if (need(0)) {
          const Matrix gxhat = (g.array().rowwise() * gamma.row(0).array()).matrix();
          if (ev.mode == Mode::training) {
            const double rows = static_cast<double>(x.rows());
            const Eigen::RowVectorXd sum_g = gxhat.colwise().sum();
            const Eigen::RowVectorXd sum_gx = (gxhat.array() * xhat.array()).colwise().sum();
            Matrix gx = (gxhat * rows).rowwise() - sum_g;
            gx -= (xhat.array().rowwise() * sum_gx.array()).matrix();
            gx = (gx.array().rowwise() * (stats.row(1).array() / rows)).matrix();
            send(0, gx);
          } else {
            send(0, (gxhat.array().rowwise() * stats.row(1).array()).matrix());
          }
        }
        break;
      }
      case OpKind::mean: {
        const Matrix& a = val(0);
        send(0, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
        break;
      }
      case OpKind::sum: {
        const Matrix& a = val(0);
        send(0, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        break;
      }
    }
  }
  return adj;
}

GradientMap backward(const Tape& tape, const Evaluation& ev, NodeId loss) {
  std::vector<Matrix> adj = backward_all(tape, ev, loss);
  GradientMap out;
  for (NodeId p : tape.trainable_parameters()) {
    if (p.index < adj.size() && adj[p.index].size() != 0) out.set(p, std::move(adj[p.index]));
  }
  return out;
}

void update_running_stats(Tape& tape, const Evaluation& ev) {
  if (ev.mode != Mode::training) return;
  for (std::uint32_t i = 0; i < tape.size(); ++i) {
    const Node& n = tape.node(NodeId{i});
    if (n.kind != OpKind::batch_normalize) continue;
    const Matrix& stats = ev.aux[i];
    Matrix& rm = tape.parameter_value(n.parents[3]);
    Matrix& rv = tape.parameter_value(n.parents[4]);
    rm = (1.0 - kBatchNormMomentum) * rm + kBatchNormMomentum * stats.row(0);
    rv = (1.0 - kBatchNormMomentum) * rv + kBatchNormMomentum * stats.row(2);
  }
}

namespace testing {

ScopedAdjointFault::ScopedAdjointFault(OpKind kind, double factor) : previous_(g_adjoint_fault) {
  g_adjoint_fault = std::make_pair(kind, factor);
}

ScopedAdjointFault::~ScopedAdjointFault() { g_adjoint_fault = previous_; }

}  // namespace testing

}  // namespace pernn::ad
