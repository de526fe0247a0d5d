#pragma once

#include "gmpslab/diff/graph.hpp"
#include "gmpslab/diff/param_vector.hpp"

#include <Eigen/Dense>
#include <functional>
#include <span>

namespace gmpslab::diff {

// Convenience entry points for graphs with exactly one parameter leaf and a
// designated output. Input leaves are bound in declaration order.

Eigen::MatrixXd evaluate(const Graph& graph, const ParamVector& params, std::span<const Eigen::MatrixXd> inputs = {});

/// d output / d params. Masked entries are still reported; callers apply masks.
Eigen::VectorXd gradient(Graph& graph, const ParamVector& params, std::span<const Eigen::MatrixXd> inputs = {});

/// Builds a scalar from the parameter leaf and the (differentiable) gradient
/// of the graph's output with respect to it.
using OuterContinuation = std::function<Var(Graph&, Var params, Var inner_grad)>;

struct SecondOrderResult {
  Eigen::VectorXd gradient;
  /// A clip/max/relu breakpoint was hit exactly; the left derivative was used.
  bool nonsmooth = false;
};

/// d/dθ outer(θ, ∇θ f(θ)), including the Hessian-vector terms of f.
SecondOrderResult grad_of_grad(Graph& graph, const ParamVector& params, const OuterContinuation& outer,
                               std::span<const Eigen::MatrixXd> inputs = {});

}  // namespace gmpslab::diff
