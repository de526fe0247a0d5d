#pragma once

// Matrix-valued computation graphs with reverse-mode differentiation whose
// backward pass is itself recorded as graph nodes. Differentiating a graph
// that already contains gradient nodes therefore yields exact second-order
// terms (Hessian-vector products), which is what a gradient step nested inside
// an outer loss needs.
//
// Graphs are built symbolically: leaves are parameters, inputs (bound at
// evaluation time) and constants (stored in the graph). Evaluation allocates a
// fresh value cache per call, so a finished graph may be evaluated from
// several threads at once.

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace gmpslab::diff {

enum class OpKind : std::uint8_t {
  kParameter,
  kInput,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMax,
  kNeg,
  kScale,
  kAddScalar,
  kMatMul,
  kTranspose,
  kReshape,
  kSegment,
  kEmbed,
  kSum,
  kRowSum,
  kColSum,
  kBroadcast,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSqrt,
  kClip,
  kIndicator,
  kStopGradient,
  kRowMax,
};

namespace detail {

class Builder;

struct Node {
  explicit Node(OpKind kind) : op(kind) {}

  OpKind op;
  int a = -1;
  int b = -1;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  double s0 = 0.0;
  double s1 = 0.0;
  Eigen::Index offset = 0;
  bool trans_a = false;
  bool trans_b = false;
  Eigen::MatrixXd value;  // constants only
};

struct Tape {
  std::vector<Node> nodes;
  std::vector<int> parameters;
  std::vector<int> inputs;
  int output = -1;
};

}  // namespace detail

class Graph;

/// Handle to a node. Cheap to copy; valid for the lifetime of its graph.
class Var {
 public:
  Var() = default;

  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  bool is_scalar() const { return rows() == 1 && cols() == 1; }

 private:
  friend class Graph;
  friend class detail::Builder;
  Var(detail::Tape* tape, int id) : tape_(tape), id_(id) {}

  detail::Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Values bound to parameter and input leaves for one evaluation.
class Bindings {
 public:
  Bindings& set(Var leaf, Eigen::MatrixXd value);
  const Eigen::MatrixXd* find(int id) const;

 private:
  std::vector<std::pair<int, Eigen::MatrixXd>> entries_;
};

/// Per-call value cache produced by Graph::evaluate.
class Evaluation {
 public:
  const Eigen::MatrixXd& operator[](Var v) const;
  double scalar(Var v) const;
  /// True when some clip, max, relu or indicator was evaluated exactly at a
  /// breakpoint, where the left derivative was used.
  bool nonsmooth() const { return nonsmooth_; }

 private:
  friend class detail::Builder;
  std::vector<Eigen::MatrixXd> values_;
  std::vector<char> ready_;
  bool nonsmooth_ = false;
};

class Graph {
 public:
  Graph();
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var parameter(Eigen::Index size);
  Var input(Eigen::Index rows, Eigen::Index cols);
  Var constant(Eigen::MatrixXd value);
  Var scalar(double value);
  Var zeros(Eigen::Index rows, Eigen::Index cols);

  void set_output(Var v);
  Var output() const;
  std::vector<Var> parameters() const;
  std::vector<Var> inputs() const;
  std::size_t size() const { return tape_->nodes.size(); }
  OpKind kind(Var v) const;

  /// Appends nodes computing d y / d w for each w in `wrt`; y must be 1x1.
  /// Nodes listed in `hold` are treated as constants for this derivative only:
  /// the returned gradient nodes still depend on them, so an outer
  /// differentiation sees through them.
  std::vector<Var> grad(Var y, std::initializer_list<Var> wrt, std::initializer_list<Var> hold = {});
  std::vector<Var> grad(Var y, std::span<const Var> wrt, std::span<const Var> hold = {});

  Evaluation evaluate(const Bindings& bindings, std::initializer_list<Var> outputs) const;
  Evaluation evaluate(const Bindings& bindings, std::span<const Var> outputs) const;

  // Node constructors. Binary elementwise operations broadcast a dimension of
  // size one against the other operand; nothing more general is supported.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var max(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var transpose(Var a);
  Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
  /// Column-major rows x cols view of entries [offset, offset + rows*cols) of a column vector.
  Var segment(Var vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);
  /// Places a matrix, flattened column-major, at `offset` of a zero column vector of length `size`.
  Var embed(Var a, Eigen::Index size, Eigen::Index offset);
  Var sum(Var a);
  Var row_sum(Var a);
  Var col_sum(Var a);
  Var broadcast(Var a, Eigen::Index rows, Eigen::Index cols);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var clip(Var a, double lo, double hi);
  /// 1 where lo < a <= hi, else 0. Zero derivative.
  Var indicator(Var a, double lo, double hi = std::numeric_limits<double>::infinity());
  Var stop_gradient(Var a);
  /// Row maxima as a column; carries no gradient.
  Var row_max_detached(Var a);

 private:
  void check_owned(Var v) const;

  std::unique_ptr<detail::Tape> tape_;
};

// Expression-style helpers; each appends to the graph owning its operands.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator-(Var a, double c);
Var operator*(double c, Var a);
Var operator*(Var a, double c);

Var cmul(Var a, Var b);
Var cdiv(Var a, Var b);
Var cmax(Var a, Var b);
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var transpose(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
Var clip(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var broadcast(Var a, Eigen::Index rows, Eigen::Index cols);
Var segment(Var vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);
Var stop_gradient(Var a);
/// Graph::grad on the graph owning `y`.
std::vector<Var> grad(Var y, std::span<const Var> wrt, std::span<const Var> hold = {});
Var grad(Var y, Var wrt, std::initializer_list<Var> hold = {});
/// A constant stored in the same graph as `anchor`.
Var constant_like(Var anchor, Eigen::MatrixXd value);
/// Row-wise log-softmax of a matrix of logits.
Var log_softmax_rows(Var logits);

}  // namespace gmpslab::diff
