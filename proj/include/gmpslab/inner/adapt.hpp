#pragma once

#include "gmpslab/diff/graph.hpp"
#include "gmpslab/diff/param_vector.hpp"
#include "gmpslab/inner/trajectory.hpp"
#include "gmpslab/policy/policy.hpp"

#include <optional>

namespace gmpslab::inner {

struct InnerConfig {
  double gamma = 0.99;
  double ratio_lo = 0.1;
  double ratio_hi = 10.0;
  /// Rescale each batch's advantages to unit root-mean-square.
  bool normalize_advantages = true;

  void validate() const;
};

/// Stacked steps of a batch with advantages computed as `cfg` specifies.
StackedBatch prepare(std::span<const Trajectory> batch, const InnerConfig& cfg);

/// -(1/N) sum_t w_t log pi(a_t|s_t) A_t over all N stacked steps.
diff::Var surrogate_loss(const policy::Policy& pol, diff::Var theta, const StackedBatch& data, diff::Var weights);

/// Nodes of one differentiable policy-gradient step.
struct InnerStep {
  diff::Var phi;
  diff::Var surrogate;
  diff::Var weights;
};

/// phi = theta - alpha * mask * d surrogate / d theta, with alpha a 1x1 node.
/// When `init_log_probs` is given the surrogate is weighted by the clipped
/// per-step ratio pi_theta / pi_init; the ratio is held constant for the
/// inner derivative but stays differentiable for any outer one.
InnerStep inner_step(const policy::Policy& pol, diff::Var theta, diff::Var alpha, const diff::Mask& mask,
                     const StackedBatch& data, const Eigen::RowVectorXd* init_log_probs, const InnerConfig& cfg);

/// Log-probabilities of the stacked actions at `params`, computed through the
/// same graph construction the inner step uses, so that evaluating it at the
/// behaviour parameters reproduces the in-graph values bit for bit.
Eigen::RowVectorXd graph_log_probs(const policy::Policy& pol, const diff::ParamVector& params, const StackedBatch& data);

/// Clipped per-step ratios pi_theta / pi_init.
Eigen::RowVectorXd importance_weights(const policy::Policy& pol, const diff::ParamVector& theta,
                                      const Eigen::RowVectorXd& init_log_probs, const StackedBatch& data,
                                      const InnerConfig& cfg);

diff::ParamVector adapt(const policy::Policy& pol, const diff::ParamVector& theta, std::span<const Trajectory> batch,
                        double alpha, const diff::Mask& mask, const InnerConfig& cfg = {});

/// Re-adaptation of `theta` on data collected under `theta_init`. Throws
/// kMissingData when trajectories lack behaviour log-probs, and
/// kInvalidArgument when those do not match `theta_init`.
diff::ParamVector adapt_iw(const policy::Policy& pol, const diff::ParamVector& theta,
                           const diff::ParamVector& theta_init, std::span<const Trajectory> batch, double alpha,
                           const diff::Mask& mask, const InnerConfig& cfg = {});

/// Checks stored behaviour log-probs against `theta_init` and returns the
/// recomputed graph-route values.
Eigen::RowVectorXd verified_init_log_probs(const policy::Policy& pol, const diff::ParamVector& theta_init,
                                           const StackedBatch& data);

}  // namespace gmpslab::inner
