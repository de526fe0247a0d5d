#include "gmpslab/diff/graph.hpp"

#include "gmpslab/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gmpslab::diff {

namespace detail {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) { return std::to_string(r) + "x" + std::to_string(c); }

bool zero_derivative(OpKind op) {
  switch (op) {
    case OpKind::kParameter:
    case OpKind::kInput:
    case OpKind::kConstant:
    case OpKind::kIndicator:
    case OpKind::kStopGradient:
    case OpKind::kRowMax:
      return true;
    default:
      return false;
  }
}

Eigen::MatrixXd expand(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
  return m.replicate(rows / m.rows(), cols / m.cols());
}

}  // namespace

// All node construction funnels through here so that Graph member functions
// and the free expression helpers share one implementation.
class Builder {
 public:
  static Var wrap(Tape& t, int id) { return Var(&t, id); }
  static Tape& tape(Var v) {
    if (v.tape_ == nullptr) throw Error(ErrorKind::kInvalidArgument, "use of an unbound Var");
    return *v.tape_;
  }
  static Tape& same_tape(Var a, Var b) {
    Tape& t = tape(a);
    if (&tape(b) != &t) throw Error(ErrorKind::kInvalidArgument, "operands belong to different graphs");
    return t;
  }
  static const Node& node(Var v) { return tape(v).nodes[static_cast<std::size_t>(v.id_)]; }

  static Var push(Tape& t, Node n) {
    t.nodes.push_back(std::move(n));
    return wrap(t, static_cast<int>(t.nodes.size()) - 1);
  }

  static Var unary(OpKind op, Var a) {
    const Node& na = node(a);
    Node n{op};
    n.a = a.id_;
    n.rows = na.rows;
    n.cols = na.cols;
    return push(tape(a), std::move(n));
  }

  static Var elementwise(OpKind op, Var a, Var b) {
    Tape& t = same_tape(a, b);
    const Node& na = node(a);
    const Node& nb = node(b);
    auto dim = [&](Eigen::Index x, Eigen::Index y) -> Eigen::Index {
      if (x == y) return x;
      if (x == 1) return y;
      if (y == 1) return x;
      throw Error(ErrorKind::kShapeMismatch, "cannot broadcast " + shape_str(na.rows, na.cols) + " against " +
                                                 shape_str(nb.rows, nb.cols));
    };
    Node n{op};
    n.a = a.id_;
    n.b = b.id_;
    n.rows = dim(na.rows, nb.rows);
    n.cols = dim(na.cols, nb.cols);
    return push(t, std::move(n));
  }

  static Var scale(Var a, double c) {
    Var v = unary(OpKind::kScale, a);
    tape(v).nodes.back().s0 = c;
    return v;
  }

  static Var add_scalar(Var a, double c) {
    Var v = unary(OpKind::kAddScalar, a);
    tape(v).nodes.back().s0 = c;
    return v;
  }

  static Var matmul(Var a, Var b, bool ta, bool tb) {
    Tape& t = same_tape(a, b);
    const Node& na = node(a);
    const Node& nb = node(b);
    const Eigen::Index ar = ta ? na.cols : na.rows;
    const Eigen::Index ac = ta ? na.rows : na.cols;
    const Eigen::Index br = tb ? nb.cols : nb.rows;
    const Eigen::Index bc = tb ? nb.rows : nb.cols;
    if (ac != br) {
      throw Error(ErrorKind::kShapeMismatch, "matmul inner dimensions differ: " + shape_str(ar, ac) + " * " +
                                                 shape_str(br, bc));
    }
    Node n{OpKind::kMatMul};
    n.a = a.id_;
    n.b = b.id_;
    n.rows = ar;
    n.cols = bc;
    n.trans_a = ta;
    n.trans_b = tb;
    return push(t, std::move(n));
  }

  static Var transpose(Var a) {
    const Node& na = node(a);
    Node n{OpKind::kTranspose};
    n.a = a.id_;
    n.rows = na.cols;
    n.cols = na.rows;
    return push(tape(a), std::move(n));
  }

  static Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    const Node& na = node(a);
    if (rows * cols != na.rows * na.cols) {
      throw Error(ErrorKind::kShapeMismatch,
                  "cannot reshape " + shape_str(na.rows, na.cols) + " to " + shape_str(rows, cols));
    }
    Node n{OpKind::kReshape};
    n.a = a.id_;
    n.rows = rows;
    n.cols = cols;
    return push(tape(a), std::move(n));
  }

  static Var segment(Var vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
    const Node& nv = node(vec);
    if (nv.cols != 1 || offset < 0 || offset + rows * cols > nv.rows) {
      throw Error(ErrorKind::kShapeMismatch, "segment [" + std::to_string(offset) + ", +" +
                                                 std::to_string(rows * cols) + ") out of range for " +
                                                 shape_str(nv.rows, nv.cols));
    }
    Node n{OpKind::kSegment};
    n.a = vec.id_;
    n.rows = rows;
    n.cols = cols;
    n.offset = offset;
    return push(tape(vec), std::move(n));
  }

  static Var embed(Var a, Eigen::Index size, Eigen::Index offset) {
    const Node& na = node(a);
    if (offset < 0 || offset + na.rows * na.cols > size) {
      throw Error(ErrorKind::kShapeMismatch, "embed of " + shape_str(na.rows, na.cols) + " at " +
                                                 std::to_string(offset) + " exceeds length " + std::to_string(size));
    }
    Node n{OpKind::kEmbed};
    n.a = a.id_;
    n.rows = size;
    n.cols = 1;
    n.offset = offset;
    return push(tape(a), std::move(n));
  }

  static Var reduction(OpKind op, Var a) {
    const Node& na = node(a);
    Node n{op};
    n.a = a.id_;
    n.rows = op == OpKind::kColSum ? 1 : (op == OpKind::kSum ? 1 : na.rows);
    n.cols = op == OpKind::kRowSum ? 1 : (op == OpKind::kSum ? 1 : na.cols);
    if (op == OpKind::kRowMax) n.cols = 1;
    return push(tape(a), std::move(n));
  }

  static Var broadcast(Var a, Eigen::Index rows, Eigen::Index cols) {
    const Node& na = node(a);
    if ((na.rows != rows && na.rows != 1) || (na.cols != cols && na.cols != 1)) {
      throw Error(ErrorKind::kShapeMismatch,
                  "cannot broadcast " + shape_str(na.rows, na.cols) + " to " + shape_str(rows, cols));
    }
    if (na.rows == rows && na.cols == cols) return a;
    Node n{OpKind::kBroadcast};
    n.a = a.id_;
    n.rows = rows;
    n.cols = cols;
    return push(tape(a), std::move(n));
  }

  static Var clip_like(OpKind op, Var a, double lo, double hi) {
    if (!(lo <= hi)) throw Error(ErrorKind::kInvalidArgument, "clip bounds out of order");
    Var v = unary(op, a);
    auto& n = tape(v).nodes.back();
    n.s0 = lo;
    n.s1 = hi;
    return v;
  }

  static Var constant(Tape& t, Eigen::MatrixXd value) {
    Node n{OpKind::kConstant};
    n.rows = value.rows();
    n.cols = value.cols();
    n.value = std::move(value);
    return push(t, std::move(n));
  }

  // Sums g down to the given shape; inverse of broadcasting.
  static Var reduce_to(Var g, Eigen::Index rows, Eigen::Index cols) {
    const Node& ng = node(g);
    if (ng.rows == rows && ng.cols == cols) return g;
    if (rows == 1 && cols == 1) return reduction(OpKind::kSum, g);
    if (cols == 1 && rows == ng.rows) return reduction(OpKind::kRowSum, g);
    if (rows == 1 && cols == ng.cols) return reduction(OpKind::kColSum, g);
    throw Error(ErrorKind::kShapeMismatch,
                "cannot reduce " + shape_str(ng.rows, ng.cols) + " to " + shape_str(rows, cols));
  }

  static std::vector<Var> grad(Tape& t, Var y, std::span<const Var> wrt, std::span<const Var> hold);
  static Evaluation evaluate(const Tape& t, const Bindings& b, std::span<const Var> outputs);
};

std::vector<Var> Builder::grad(Tape& t, Var y, std::span<const Var> wrt, std::span<const Var> hold) {
  const Node& ny = node(y);
  if (ny.rows != 1 || ny.cols != 1) {
    throw Error(ErrorKind::kNotScalar, "gradient requested of a non-scalar node of shape " + shape_str(ny.rows, ny.cols));
  }
  const auto n = static_cast<std::size_t>(y.id_) + 1;
  std::vector<char> is_wrt(t.nodes.size(), 0);
  std::vector<char> held(t.nodes.size(), 0);
  for (Var w : wrt) is_wrt[static_cast<std::size_t>(w.id_)] = 1;
  for (Var h : hold) held[static_cast<std::size_t>(h.id_)] = 1;

  std::vector<char> dep(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Node& nd = t.nodes[i];
    if (is_wrt[i]) {
      dep[i] = 1;
    } else if (held[i] || zero_derivative(nd.op)) {
      dep[i] = 0;
    } else {
      dep[i] = (nd.a >= 0 && dep[static_cast<std::size_t>(nd.a)]) || (nd.b >= 0 && dep[static_cast<std::size_t>(nd.b)]);
    }
  }

  std::vector<int> adj(n, -1);
  auto accumulate = [&](int parent, Var contribution) {
    if (parent < 0 || !dep[static_cast<std::size_t>(parent)]) return;
    int& slot = adj[static_cast<std::size_t>(parent)];
    slot = slot < 0 ? contribution.id_ : elementwise(OpKind::kAdd, wrap(t, slot), contribution).id_;
  };
  auto wants = [&](int parent) { return parent >= 0 && dep[static_cast<std::size_t>(parent)]; };

  if (dep[n - 1]) adj[n - 1] = constant(t, Eigen::MatrixXd::Ones(1, 1)).id_;

  for (std::size_t ii = n; ii-- > 0;) {
    if (adj[ii] < 0 || !dep[ii] || held[ii]) continue;
    // Copy what is needed: pushing nodes may reallocate t.nodes.
    const Node nd = [&] {
      Node c = t.nodes[ii];
      c.value.resize(0, 0);
      return c;
    }();
    const Var g = wrap(t, adj[ii]);
    const Var a = wrap(t, nd.a);
    const Var b = wrap(t, nd.b);
    const Var self = wrap(t, static_cast<int>(ii));
    auto shape_of = [&](int id) { return std::pair{t.nodes[static_cast<std::size_t>(id)].rows, t.nodes[static_cast<std::size_t>(id)].cols}; };
    auto reduce_for = [&](int id, Var v) {
      auto [r, c] = shape_of(id);
      return reduce_to(v, r, c);
    };

    switch (nd.op) {
      case OpKind::kAdd:
        if (wants(nd.a)) accumulate(nd.a, reduce_for(nd.a, g));
        if (wants(nd.b)) accumulate(nd.b, reduce_for(nd.b, g));
        break;
      case OpKind::kSub:
        if (wants(nd.a)) accumulate(nd.a, reduce_for(nd.a, g));
        if (wants(nd.b)) accumulate(nd.b, reduce_for(nd.b, unary(OpKind::kNeg, g)));
        break;
      case OpKind::kMul:
        if (wants(nd.a)) accumulate(nd.a, reduce_for(nd.a, elementwise(OpKind::kMul, g, b)));
        if (wants(nd.b)) accumulate(nd.b, reduce_for(nd.b, elementwise(OpKind::kMul, g, a)));
        break;
      case OpKind::kDiv:
        if (wants(nd.a)) accumulate(nd.a, reduce_for(nd.a, elementwise(OpKind::kDiv, g, b)));
        if (wants(nd.b)) {
          Var gy = elementwise(OpKind::kMul, g, self);
          accumulate(nd.b, reduce_for(nd.b, unary(OpKind::kNeg, elementwise(OpKind::kDiv, gy, b))));
        }
        break;
      case OpKind::kMax: {
        Var upper = clip_like(OpKind::kIndicator, elementwise(OpKind::kSub, a, b), 0.0,
                              std::numeric_limits<double>::infinity());
        Var ga = elementwise(OpKind::kMul, g, upper);
        if (wants(nd.a)) accumulate(nd.a, reduce_for(nd.a, ga));
        if (wants(nd.b)) accumulate(nd.b, reduce_for(nd.b, elementwise(OpKind::kSub, g, ga)));
        break;
      }
      case OpKind::kNeg:
        accumulate(nd.a, unary(OpKind::kNeg, g));
        break;
      case OpKind::kScale:
        accumulate(nd.a, scale(g, nd.s0));
        break;
      case OpKind::kAddScalar:
        accumulate(nd.a, g);
        break;
      case OpKind::kMatMul: {
        // y = op(a) op(b); see the four transpose cases.
        if (wants(nd.a)) {
          Var ga = !nd.trans_a ? (!nd.trans_b ? matmul(g, b, false, true) : matmul(g, b, false, false))
                               : (!nd.trans_b ? matmul(b, g, false, true) : matmul(b, g, true, true));
          accumulate(nd.a, ga);
        }
        if (wants(nd.b)) {
          Var gb = !nd.trans_b ? (!nd.trans_a ? matmul(a, g, true, false) : matmul(a, g, false, false))
                               : (!nd.trans_a ? matmul(g, a, true, false) : matmul(g, a, true, true));
          accumulate(nd.b, gb);
        }
        break;
      }
      case OpKind::kTranspose:
        accumulate(nd.a, transpose(g));
        break;
      case OpKind::kReshape: {
        auto [r, c] = shape_of(nd.a);
        accumulate(nd.a, reshape(g, r, c));
        break;
      }
      case OpKind::kSegment: {
        auto [r, c] = shape_of(nd.a);
        (void)c;
        accumulate(nd.a, embed(g, r, nd.offset));
        break;
      }
      case OpKind::kEmbed: {
        auto [r, c] = shape_of(nd.a);
        accumulate(nd.a, segment(g, nd.offset, r, c));
        break;
      }
      case OpKind::kSum:
      case OpKind::kRowSum:
      case OpKind::kColSum: {
        auto [r, c] = shape_of(nd.a);
        accumulate(nd.a, broadcast(g, r, c));
        break;
      }
      case OpKind::kBroadcast:
        accumulate(nd.a, reduce_for(nd.a, g));
        break;
      case OpKind::kTanh: {
        Var one_minus = add_scalar(unary(OpKind::kNeg, unary(OpKind::kSquare, self)), 1.0);
        accumulate(nd.a, elementwise(OpKind::kMul, g, one_minus));
        break;
      }
      case OpKind::kRelu:
        accumulate(nd.a, elementwise(OpKind::kMul, g,
                                     clip_like(OpKind::kIndicator, a, 0.0, std::numeric_limits<double>::infinity())));
        break;
      case OpKind::kExp:
        accumulate(nd.a, elementwise(OpKind::kMul, g, self));
        break;
      case OpKind::kLog:
        accumulate(nd.a, elementwise(OpKind::kDiv, g, a));
        break;
      case OpKind::kSquare:
        accumulate(nd.a, elementwise(OpKind::kMul, g, scale(a, 2.0)));
        break;
      case OpKind::kSqrt:
        accumulate(nd.a, elementwise(OpKind::kDiv, scale(g, 0.5), self));
        break;
      case OpKind::kClip:
        accumulate(nd.a, elementwise(OpKind::kMul, g, clip_like(OpKind::kIndicator, a, nd.s0, nd.s1)));
        break;
      default:
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    const int id = static_cast<std::size_t>(w.id_) < n ? adj[static_cast<std::size_t>(w.id_)] : -1;
    if (id >= 0) {
      out.push_back(wrap(t, id));
    } else {
      const Node& nw = t.nodes[static_cast<std::size_t>(w.id_)];
      out.push_back(constant(t, Eigen::MatrixXd::Zero(nw.rows, nw.cols)));
    }
  }
  return out;
}

Evaluation Builder::evaluate(const Tape& t, const Bindings& bindings, std::span<const Var> outputs) {
  Evaluation ev;
  const std::size_t n = t.nodes.size();
  ev.values_.resize(n);
  ev.ready_.assign(n, 0);

  std::vector<char> needed(n, 0);
  int top = -1;
  for (Var o : outputs) {
    needed[static_cast<std::size_t>(o.id_)] = 1;
    top = std::max(top, o.id_);
  }
  for (int i = top; i >= 0; --i) {
    if (!needed[static_cast<std::size_t>(i)]) continue;
    const Node& nd = t.nodes[static_cast<std::size_t>(i)];
    if (nd.a >= 0) needed[static_cast<std::size_t>(nd.a)] = 1;
    if (nd.b >= 0) needed[static_cast<std::size_t>(nd.b)] = 1;
  }

  bool nonsmooth = false;
  for (int i = 0; i <= top; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!needed[ui]) continue;
    const Node& nd = t.nodes[ui];
    Eigen::MatrixXd& out = ev.values_[ui];
    const Eigen::MatrixXd* pa = nd.a >= 0 ? &ev.values_[static_cast<std::size_t>(nd.a)] : nullptr;
    const Eigen::MatrixXd* pb = nd.b >= 0 ? &ev.values_[static_cast<std::size_t>(nd.b)] : nullptr;
    auto binary = [&](auto&& f) {
      if (pa->rows() == nd.rows && pa->cols() == nd.cols && pb->rows() == nd.rows && pb->cols() == nd.cols) {
        out = f(pa->array(), pb->array()).matrix();
      } else {
        const Eigen::MatrixXd ea = expand(*pa, nd.rows, nd.cols);
        const Eigen::MatrixXd eb = expand(*pb, nd.rows, nd.cols);
        out = f(ea.array(), eb.array()).matrix();
      }
    };

    switch (nd.op) {
      case OpKind::kParameter:
      case OpKind::kInput: {
        const Eigen::MatrixXd* v = bindings.find(i);
        if (v == nullptr) {
          throw Error(ErrorKind::kArityMismatch, std::string(nd.op == OpKind::kParameter ? "parameter" : "input") +
                                                     " leaf " + std::to_string(i) + " is not bound");
        }
        if (v->rows() != nd.rows || v->cols() != nd.cols) {
          throw Error(ErrorKind::kShapeMismatch, "leaf " + std::to_string(i) + " expects " +
                                                     shape_str(nd.rows, nd.cols) + " but was bound to " +
                                                     shape_str(v->rows(), v->cols()));
        }
        out = *v;
        break;
      }
      case OpKind::kConstant:
        out = nd.value;
        break;
      case OpKind::kAdd:
        binary([](const auto& x, const auto& y) { return x + y; });
        break;
      case OpKind::kSub:
        binary([](const auto& x, const auto& y) { return x - y; });
        break;
      case OpKind::kMul:
        binary([](const auto& x, const auto& y) { return x * y; });
        break;
      case OpKind::kDiv:
        binary([](const auto& x, const auto& y) { return x / y; });
        break;
      case OpKind::kMax: {
        const Eigen::MatrixXd ea = expand(*pa, nd.rows, nd.cols);
        const Eigen::MatrixXd eb = expand(*pb, nd.rows, nd.cols);
        out = ea.array().max(eb.array()).matrix();
        if ((ea.array() == eb.array()).any()) nonsmooth = true;
        break;
      }
      case OpKind::kNeg:
        out = -*pa;
        break;
      case OpKind::kScale:
        out = nd.s0 * *pa;
        break;
      case OpKind::kAddScalar:
        out = (pa->array() + nd.s0).matrix();
        break;
      case OpKind::kMatMul:
        if (!nd.trans_a && !nd.trans_b) {
          out.noalias() = *pa * *pb;
        } else if (!nd.trans_a) {
          out.noalias() = *pa * pb->transpose();
        } else if (!nd.trans_b) {
          out.noalias() = pa->transpose() * *pb;
        } else {
          out.noalias() = pa->transpose() * pb->transpose();
        }
        break;
      case OpKind::kTranspose:
        out = pa->transpose();
        break;
      case OpKind::kReshape:
        out = pa->reshaped(nd.rows, nd.cols);
        break;
      case OpKind::kSegment:
        out = pa->col(0).segment(nd.offset, nd.rows * nd.cols).reshaped(nd.rows, nd.cols);
        break;
      case OpKind::kEmbed:
        out = Eigen::MatrixXd::Zero(nd.rows, 1);
        out.col(0).segment(nd.offset, pa->size()) = pa->reshaped();
        break;
      case OpKind::kSum:
        out.resize(1, 1);
        out(0, 0) = pa->sum();
        break;
      case OpKind::kRowSum:
        out = pa->rowwise().sum();
        break;
      case OpKind::kColSum:
        out = pa->colwise().sum();
        break;
      case OpKind::kBroadcast:
        out = expand(*pa, nd.rows, nd.cols);
        break;
      case OpKind::kTanh:
        out = pa->array().tanh().matrix();
        break;
      case OpKind::kRelu:
        out = pa->array().max(0.0).matrix();
        if ((pa->array() == 0.0).any()) nonsmooth = true;
        break;
      case OpKind::kExp:
        out = pa->array().exp().matrix();
        break;
      case OpKind::kLog:
        out = pa->array().log().matrix();
        break;
      case OpKind::kSquare:
        out = pa->array().square().matrix();
        break;
      case OpKind::kSqrt:
        out = pa->array().sqrt().matrix();
        break;
      case OpKind::kClip:
        out = pa->array().max(nd.s0).min(nd.s1).matrix();
        if ((pa->array() == nd.s0).any() || (pa->array() == nd.s1).any()) nonsmooth = true;
        break;
      case OpKind::kIndicator:
        out = ((pa->array() > nd.s0) && (pa->array() <= nd.s1)).cast<double>().matrix();
        if ((pa->array() == nd.s0).any() || (pa->array() == nd.s1).any()) nonsmooth = true;
        break;
      case OpKind::kStopGradient:
        out = *pa;
        break;
      case OpKind::kRowMax:
        out = pa->rowwise().maxCoeff();
        break;
    }
    ev.ready_[ui] = 1;
  }
  ev.nonsmooth_ = nonsmooth;
  return ev;
}

}  // namespace detail

using detail::Builder;

Eigen::Index Var::rows() const { return Builder::node(*this).rows; }
Eigen::Index Var::cols() const { return Builder::node(*this).cols; }

Bindings& Bindings::set(Var leaf, Eigen::MatrixXd value) {
  for (auto& [id, v] : entries_) {
    if (id == leaf.id()) {
      v = std::move(value);
      return *this;
    }
  }
  entries_.emplace_back(leaf.id(), std::move(value));
  return *this;
}


const Eigen::MatrixXd* Bindings::find(int id) const {
  for (const auto& [key, v] : entries_) {
    if (key == id) return &v;
  }
  return nullptr;
}

const Eigen::MatrixXd& Evaluation::operator[](Var v) const {
  const auto i = static_cast<std::size_t>(v.id());
  if (i >= ready_.size() || !ready_[i]) {
    throw Error(ErrorKind::kInvalidArgument, "node " + std::to_string(v.id()) + " was not evaluated");
  }
  return values_[i];
}

double Evaluation::scalar(Var v) const {
  const auto& m = (*this)[v];
  if (m.rows() != 1 || m.cols() != 1) throw Error(ErrorKind::kNotScalar, "node is not 1x1");
  return m(0, 0);
}

Graph::Graph() : tape_(std::make_unique<detail::Tape>()) {}

void Graph::check_owned(Var v) const {
  if (&Builder::tape(v) != tape_.get()) throw Error(ErrorKind::kInvalidArgument, "Var belongs to another graph");
}

Var Graph::parameter(Eigen::Index size) {
  detail::Node n{OpKind::kParameter};
  n.rows = size;
  n.cols = 1;
  Var v = Builder::push(*tape_, std::move(n));
  tape_->parameters.push_back(v.id());
  return v;
}

Var Graph::input(Eigen::Index rows, Eigen::Index cols) {
  detail::Node n{OpKind::kInput};
  n.rows = rows;
  n.cols = cols;
  Var v = Builder::push(*tape_, std::move(n));
  tape_->inputs.push_back(v.id());
  return v;
}

Var Graph::constant(Eigen::MatrixXd value) { return Builder::constant(*tape_, std::move(value)); }
Var Graph::scalar(double value) { return Builder::constant(*tape_, Eigen::MatrixXd::Constant(1, 1, value)); }
Var Graph::zeros(Eigen::Index rows, Eigen::Index cols) {
  return Builder::constant(*tape_, Eigen::MatrixXd::Zero(rows, cols));
}

void Graph::set_output(Var v) {
  check_owned(v);
  tape_->output = v.id();
}

Var Graph::output() const {
  if (tape_->output < 0) throw Error(ErrorKind::kInvalidArgument, "graph has no designated output");
  return Builder::wrap(*tape_, tape_->output);
}

std::vector<Var> Graph::parameters() const {
  std::vector<Var> out;
  for (int id : tape_->parameters) out.push_back(Builder::wrap(*tape_, id));
  return out;
}

std::vector<Var> Graph::inputs() const {
  std::vector<Var> out;
  for (int id : tape_->inputs) out.push_back(Builder::wrap(*tape_, id));
  return out;
}

OpKind Graph::kind(Var v) const {
  check_owned(v);
  return Builder::node(v).op;
}

std::vector<Var> Graph::grad(Var y, std::initializer_list<Var> wrt, std::initializer_list<Var> hold) {
  return grad(y, std::span<const Var>(wrt.begin(), wrt.size()), std::span<const Var>(hold.begin(), hold.size()));
}

std::vector<Var> Graph::grad(Var y, std::span<const Var> wrt, std::span<const Var> hold) {
  check_owned(y);
  for (Var w : wrt) check_owned(w);
  for (Var h : hold) check_owned(h);
  return Builder::grad(*tape_, y, wrt, hold);
}

Evaluation Graph::evaluate(const Bindings& bindings, std::initializer_list<Var> outputs) const {
  return evaluate(bindings, std::span<const Var>(outputs.begin(), outputs.size()));
}

Evaluation Graph::evaluate(const Bindings& bindings, std::span<const Var> outputs) const {
  for (Var o : outputs) check_owned(o);
  return Builder::evaluate(*tape_, bindings, outputs);
}

Var Graph::add(Var a, Var b) { return Builder::elementwise(OpKind::kAdd, a, b); }
Var Graph::sub(Var a, Var b) { return Builder::elementwise(OpKind::kSub, a, b); }
Var Graph::mul(Var a, Var b) { return Builder::elementwise(OpKind::kMul, a, b); }
Var Graph::div(Var a, Var b) { return Builder::elementwise(OpKind::kDiv, a, b); }
Var Graph::max(Var a, Var b) { return Builder::elementwise(OpKind::kMax, a, b); }
Var Graph::neg(Var a) { return Builder::unary(OpKind::kNeg, a); }
Var Graph::scale(Var a, double c) { return Builder::scale(a, c); }
Var Graph::add_scalar(Var a, double c) { return Builder::add_scalar(a, c); }
Var Graph::matmul(Var a, Var b, bool ta, bool tb) { return Builder::matmul(a, b, ta, tb); }
Var Graph::transpose(Var a) { return Builder::transpose(a); }
Var Graph::reshape(Var a, Eigen::Index rows, Eigen::Index cols) { return Builder::reshape(a, rows, cols); }
Var Graph::segment(Var vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  return Builder::segment(vec, offset, rows, cols);
}
Var Graph::embed(Var a, Eigen::Index size, Eigen::Index offset) { return Builder::embed(a, size, offset); }
Var Graph::sum(Var a) { return Builder::reduction(OpKind::kSum, a); }
Var Graph::row_sum(Var a) { return Builder::reduction(OpKind::kRowSum, a); }
Var Graph::col_sum(Var a) { return Builder::reduction(OpKind::kColSum, a); }
Var Graph::broadcast(Var a, Eigen::Index rows, Eigen::Index cols) { return Builder::broadcast(a, rows, cols); }
Var Graph::tanh(Var a) { return Builder::unary(OpKind::kTanh, a); }
Var Graph::relu(Var a) { return Builder::unary(OpKind::kRelu, a); }
Var Graph::exp(Var a) { return Builder::unary(OpKind::kExp, a); }
Var Graph::log(Var a) { return Builder::unary(OpKind::kLog, a); }
Var Graph::square(Var a) { return Builder::unary(OpKind::kSquare, a); }
Var Graph::sqrt(Var a) { return Builder::unary(OpKind::kSqrt, a); }
Var Graph::clip(Var a, double lo, double hi) { return Builder::clip_like(OpKind::kClip, a, lo, hi); }
Var Graph::indicator(Var a, double lo, double hi) { return Builder::clip_like(OpKind::kIndicator, a, lo, hi); }
Var Graph::stop_gradient(Var a) { return Builder::unary(OpKind::kStopGradient, a); }
Var Graph::row_max_detached(Var a) { return Builder::reduction(OpKind::kRowMax, a); }

Var operator+(Var a, Var b) { return Builder::elementwise(OpKind::kAdd, a, b); }
Var operator-(Var a, Var b) { return Builder::elementwise(OpKind::kSub, a, b); }
Var operator-(Var a) { return Builder::unary(OpKind::kNeg, a); }
Var operator+(Var a, double c) { return Builder::add_scalar(a, c); }
Var operator-(Var a, double c) { return Builder::add_scalar(a, -c); }
Var operator*(double c, Var a) { return Builder::scale(a, c); }
Var operator*(Var a, double c) { return Builder::scale(a, c); }

Var cmul(Var a, Var b) { return Builder::elementwise(OpKind::kMul, a, b); }
Var cdiv(Var a, Var b) { return Builder::elementwise(OpKind::kDiv, a, b); }
Var cmax(Var a, Var b) { return Builder::elementwise(OpKind::kMax, a, b); }
Var matmul(Var a, Var b, bool trans_a, bool trans_b) { return Builder::matmul(a, b, trans_a, trans_b); }
Var transpose(Var a) { return Builder::transpose(a); }
Var tanh(Var a) { return Builder::unary(OpKind::kTanh, a); }
Var relu(Var a) { return Builder::unary(OpKind::kRelu, a); }
Var exp(Var a) { return Builder::unary(OpKind::kExp, a); }
Var log(Var a) { return Builder::unary(OpKind::kLog, a); }
Var square(Var a) { return Builder::unary(OpKind::kSquare, a); }
Var sqrt(Var a) { return Builder::unary(OpKind::kSqrt, a); }
Var clip(Var a, double lo, double hi) { return Builder::clip_like(OpKind::kClip, a, lo, hi); }
Var sum(Var a) { return Builder::reduction(OpKind::kSum, a); }
Var mean(Var a) { return Builder::scale(Builder::reduction(OpKind::kSum, a), 1.0 / static_cast<double>(a.rows() * a.cols())); }
Var row_sum(Var a) { return Builder::reduction(OpKind::kRowSum, a); }
Var col_sum(Var a) { return Builder::reduction(OpKind::kColSum, a); }
Var broadcast(Var a, Eigen::Index rows, Eigen::Index cols) { return Builder::broadcast(a, rows, cols); }
Var segment(Var vec, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  return Builder::segment(vec, offset, rows, cols);
}
Var stop_gradient(Var a) { return Builder::unary(OpKind::kStopGradient, a); }
std::vector<Var> grad(Var y, std::span<const Var> wrt, std::span<const Var> hold) {
  detail::Tape& t = Builder::tape(y);
  for (Var w : wrt) Builder::same_tape(y, w);
  for (Var h : hold) Builder::same_tape(y, h);
  return Builder::grad(t, y, wrt, hold);
}

Var grad(Var y, Var wrt, std::initializer_list<Var> hold) {
  return grad(y, std::span<const Var>(&wrt, 1), std::span<const Var>(hold.begin(), hold.size())).front();
}

Var constant_like(Var anchor, Eigen::MatrixXd value) { return Builder::constant(Builder::tape(anchor), std::move(value)); }

Var log_softmax_rows(Var logits) {
  // The shift by the detached row maximum is constant per row, so it changes
  // neither the value nor the derivative; it only keeps exp() in range.
  Var shifted = logits - Builder::reduction(OpKind::kRowMax, logits);
  Var lse = log(row_sum(exp(shifted)));
  return shifted - lse;
}

}  // namespace gmpslab::diff
