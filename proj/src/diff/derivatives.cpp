#include "gmpslab/diff/derivatives.hpp"

#include "gmpslab/error.hpp"

#include <string>

namespace gmpslab::diff {

namespace {

Var sole_parameter(const Graph& graph) {
  const auto params = graph.parameters();
  if (params.size() != 1) {
    throw Error(ErrorKind::kArityMismatch,
                "expected exactly one parameter leaf, found " + std::to_string(params.size()));
  }
  return params.front();
}

Bindings bind_leaves(const Graph& graph, Var param, const ParamVector& params, std::span<const Eigen::MatrixXd> inputs) {
  const auto leaves = graph.inputs();
  if (leaves.size() != inputs.size()) {
    throw Error(ErrorKind::kArityMismatch, "graph declares " + std::to_string(leaves.size()) + " inputs but " +
                                               std::to_string(inputs.size()) + " were supplied");
  }
  if (param.rows() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch, "parameter leaf has " + std::to_string(param.rows()) +
                                               " entries but the vector has " + std::to_string(params.size()));
  }
  Bindings b;
  b.set(param, params.values());
  for (std::size_t i = 0; i < leaves.size(); ++i) b.set(leaves[i], inputs[i]);
  return b;
}

}  // namespace

Eigen::MatrixXd evaluate(const Graph& graph, const ParamVector& params, std::span<const Eigen::MatrixXd> inputs) {
  const Var p = sole_parameter(graph);
  const Var y = graph.output();
  return graph.evaluate(bind_leaves(graph, p, params, inputs), {y})[y];
}

Eigen::VectorXd gradient(Graph& graph, const ParamVector& params, std::span<const Eigen::MatrixXd> inputs) {
  const Var p = sole_parameter(graph);
  const Var y = graph.output();
  const Var g = graph.grad(y, {p}).front();
  return graph.evaluate(bind_leaves(graph, p, params, inputs), {g})[g].col(0);
}

SecondOrderResult grad_of_grad(Graph& graph, const ParamVector& params, const OuterContinuation& outer,
                               std::span<const Eigen::MatrixXd> inputs) {
  const Var p = sole_parameter(graph);
  const Var inner = graph.grad(graph.output(), {p}).front();
  const Var z = outer(graph, p, inner);
  if (!z.is_scalar()) throw Error(ErrorKind::kNotScalar, "outer continuation must produce a 1x1 node");
  const Var dz = graph.grad(z, {p}).front();
  const Evaluation ev = graph.evaluate(bind_leaves(graph, p, params, inputs), {dz});
  return {ev[dz].col(0), ev.nonsmooth()};
}

}  // namespace gmpslab::diff
