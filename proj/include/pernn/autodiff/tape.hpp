#pragma once

// Define-then-run reverse-mode differentiation over dense matrices.
//
// Every node value is a matrix whose rows index the mini-batch and whose
// columns index features. Scalars are 1x1. Elementwise binary operators
// broadcast any dimension of size 1 against the other operand.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pernn::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class OpKind : std::uint8_t {
  constant,
  input,
  parameter,
  add,
  subtract,
  multiply,
  divide,
  negate,
  sin,
  cos,
  arctan,
  exp,
  square,
  reciprocal,
  affine,
  leaky_relu,
  concatenate,
  batch_normalize,
  mean,
  sum,
  abs,
  tanh,
  sigmoid,
  softplus,
  slice,
};

std::string_view op_name(OpKind kind);

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kMinDenominator = 1e-12;

struct NodeId {
  std::uint32_t index = std::numeric_limits<std::uint32_t>::max();

  bool valid() const noexcept { return index != std::numeric_limits<std::uint32_t>::max(); }
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct Node {
  OpKind kind = OpKind::constant;
  std::vector<NodeId> parents;
  std::string name;         // input / parameter name
  Matrix value;             // constant or parameter value
  bool requires_grad = false;
  Index cols = 0;           // declared width of an input
  Index begin = 0;          // slice start column
};

enum class Mode { training, inference };

// The graph plus the values of its constants and parameters. Value type:
// copying a Tape snapshots every parameter.
class Tape {
 public:
  NodeId constant(Matrix value);
  NodeId scalar(double value);
  NodeId input(std::string name, Index cols);
  NodeId parameter(std::string name, Matrix value, bool requires_grad = true);

  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId divide(NodeId a, NodeId b);
  NodeId negate(NodeId a);
  NodeId sin(NodeId a);
  NodeId cos(NodeId a);
  NodeId arctan(NodeId a);
  NodeId exp(NodeId a);
  NodeId square(NodeId a);
  NodeId reciprocal(NodeId a);
  NodeId abs(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId leaky_relu(NodeId a);
  // x (rows x in) * w (in x out) + b (1 x out)
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId concatenate(std::span<const NodeId> parts);
  NodeId slice(NodeId a, Index begin, Index count);
  // Per-column normalisation. The running statistics must be parameters
  // with requires_grad = false; they are read in inference mode and
  // refreshed by update_running_stats after a training-mode forward.
  NodeId batch_normalize(NodeId x, NodeId gamma, NodeId beta, NodeId running_mean,
                         NodeId running_var);
  NodeId mean(NodeId a);
  NodeId sum(NodeId a);

  void set_output(std::string name, NodeId node);
  NodeId output(std::string_view name) const;
  bool has_output(std::string_view name) const;
  const std::map<std::string, NodeId, std::less<>>& outputs() const { return outputs_; }

  const Node& node(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  Matrix& parameter_value(NodeId id);
  const Matrix& parameter_value(NodeId id) const;
  std::vector<NodeId> parameters() const;
  std::vector<NodeId> trainable_parameters() const;
  std::optional<NodeId> find_parameter(std::string_view name) const;
  std::vector<std::pair<std::string, Index>> inputs() const;

 private:
  NodeId push(Node node);
  NodeId unary(OpKind kind, NodeId a);
  NodeId binary(OpKind kind, NodeId a, NodeId b);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> outputs_;
};

// Named input matrices for one forward pass.
using Bindings = std::map<std::string, Matrix, std::less<>>;

// Cached node values of one forward pass.
struct Evaluation {
  Mode mode = Mode::inference;
  std::vector<Matrix> values;
  // batch_normalize nodes: row 0 = batch mean, row 1 = 1/sqrt(var + eps),
  // row 2 = unbiased batch variance.
  std::vector<Matrix> aux;

  const Matrix& value(NodeId id) const { return values.at(id.index); }
  double scalar(NodeId id) const;
};

// Gradients of a scalar loss w.r.t. trainable parameters. Absent entries are
// zero.
class GradientMap {
 public:
  bool contains(NodeId id) const { return grads_.count(id.index) != 0; }
  const Matrix* find(NodeId id) const;
  Matrix get(NodeId id, Index rows, Index cols) const;
  void set(NodeId id, Matrix g) { grads_[id.index] = std::move(g); }
  std::size_t size() const { return grads_.size(); }
  double squared_norm() const;
  const std::map<std::uint32_t, Matrix>& entries() const { return grads_; }

  friend bool operator==(const GradientMap&, const GradientMap&);

 private:
  std::map<std::uint32_t, Matrix> grads_;
};

Evaluation forward(const Tape& tape, const Bindings& inputs, Mode mode = Mode::inference);

// Evaluates only nodes up to and including `last`.
Evaluation forward_prefix(const Tape& tape, const Bindings& inputs, Mode mode, NodeId last);

// Gradient of `loss` (a 1x1 node) w.r.t. every requires_grad parameter reachable
// from it. Parameters with requires_grad = false never receive an entry.
GradientMap backward(const Tape& tape, const Evaluation& eval, NodeId loss);

// Adjoints of every node on the path to the loss, indexed by node. Entries of
// nodes that do not depend on a trainable parameter are empty matrices.
std::vector<Matrix> backward_all(const Tape& tape, const Evaluation& eval, NodeId loss);

// Blends batch statistics from a training-mode evaluation into the running
// statistics of every batch_normalize node.
void update_running_stats(Tape& tape, const Evaluation& eval);

namespace testing {

// Scales the adjoint emitted by one op kind while alive. Used to prove the
// gradient checker catches a broken backward rule. Thread-local.
class ScopedAdjointFault {
 public:
  ScopedAdjointFault(OpKind kind, double factor);
  ~ScopedAdjointFault();
  ScopedAdjointFault(const ScopedAdjointFault&) = delete;
  ScopedAdjointFault& operator=(const ScopedAdjointFault&) = delete;

 private:
  std::optional<std::pair<OpKind, double>> previous_;
};

}  // namespace testing

}  // namespace pernn::ad
