#include "gmpslab/inner/adapt.hpp"

#include "gmpslab/error.hpp"

#include <cmath>
#include <string>

namespace gmpslab::inner {

using diff::Var;

void InnerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorKind::kConfig, "gamma must lie in [0, 1]");
  if (!(ratio_lo > 0.0 && ratio_lo <= 1.0 && ratio_hi >= 1.0)) {
    throw Error(ErrorKind::kConfig, "ratio clip bounds must satisfy 0 < lo <= 1 <= hi");
  }
}

StackedBatch prepare(std::span<const Trajectory> batch, const InnerConfig& cfg) {
  return stack(batch, advantages(batch, cfg.gamma, cfg.normalize_advantages));
}

namespace {

Var weighted_surrogate(Var logp, Var weights, const StackedBatch& data) {
  return -mean(cmul(cmul(weights, logp), diff::constant_like(logp, data.advantages)));
}

}  // namespace

Var surrogate_loss(const policy::Policy& pol, Var theta, const StackedBatch& data, Var weights) {
  return weighted_surrogate(pol.log_prob(theta, data.obs, data.actions), weights, data);
}

InnerStep inner_step(const policy::Policy& pol, Var theta, Var alpha, const diff::Mask& mask, const StackedBatch& data,
                     const Eigen::RowVectorXd* init_log_probs, const InnerConfig& cfg) {
  if (mask.size() != theta.rows()) throw Error(ErrorKind::kShapeMismatch, "mask length differs from parameters");
  if (!alpha.is_scalar()) throw Error(ErrorKind::kNotScalar, "step size must be 1x1");
  Var logp = pol.log_prob(theta, data.obs, data.actions);
  Var w;
  if (init_log_probs != nullptr) {
    if (init_log_probs->size() != data.size()) throw Error(ErrorKind::kShapeMismatch, "init log-probs misaligned");
    w = clip(exp(logp - diff::constant_like(theta, *init_log_probs)), cfg.ratio_lo, cfg.ratio_hi);
  } else {
    w = diff::constant_like(theta, Eigen::MatrixXd::Ones(1, data.size()));
  }
  Var surr = weighted_surrogate(logp, w, data);
  Var grad = diff::grad(surr, theta, {w});
  Var step = cmul(alpha, cmul(diff::constant_like(theta, mask.cast<double>().matrix()), grad));
  return {theta - step, surr, w};
}

Eigen::RowVectorXd graph_log_probs(const policy::Policy& pol, const diff::ParamVector& params, const StackedBatch& data) {
  diff::Graph g;
  Var th = g.parameter(params.size());
  Var logp = pol.log_prob(th, data.obs, data.actions);
  diff::Bindings b;
  b.set(th, params.values());
  return g.evaluate(b, {logp})[logp];
}

Eigen::RowVectorXd importance_weights(const policy::Policy& pol, const diff::ParamVector& theta,
                                      const Eigen::RowVectorXd& init_log_probs, const StackedBatch& data,
                                      const InnerConfig& cfg) {
  const Eigen::RowVectorXd lp = graph_log_probs(pol, theta, data);
  return (lp - init_log_probs).array().exp().max(cfg.ratio_lo).min(cfg.ratio_hi).matrix();
}

namespace {

diff::ParamVector run_step(const policy::Policy& pol, const diff::ParamVector& theta, const StackedBatch& data,
                           double alpha, const diff::Mask& mask, const Eigen::RowVectorXd* init, const InnerConfig& cfg) {
  diff::Graph g;
  Var th = g.parameter(theta.size());
  InnerStep st = inner_step(pol, th, g.scalar(alpha), mask, data, init, cfg);
  diff::Bindings b;
  b.set(th, theta.values());
  return theta.with_values(g.evaluate(b, {st.phi})[st.phi].col(0));
}

void check_inputs(const policy::Policy& pol, const diff::ParamVector& theta, const diff::Mask& mask) {
  if (!(theta.layout() == pol.layout())) throw Error(ErrorKind::kShapeMismatch, "parameters do not fit the policy");
  if (mask.size() != theta.size()) throw Error(ErrorKind::kShapeMismatch, "mask length differs from parameters");
}

}  // namespace

diff::ParamVector adapt(const policy::Policy& pol, const diff::ParamVector& theta, std::span<const Trajectory> batch,
                        double alpha, const diff::Mask& mask, const InnerConfig& cfg) {
  cfg.validate();
  check_inputs(pol, theta, mask);
  const StackedBatch data = prepare(batch, cfg);
  return run_step(pol, theta, data, alpha, mask, nullptr, cfg);
}

Eigen::RowVectorXd verified_init_log_probs(const policy::Policy& pol, const diff::ParamVector& theta_init,
                                           const StackedBatch& data) {
  if (data.behavior_log_probs.size() != data.size()) {
    throw Error(ErrorKind::kMissingData, "importance-weighted adaptation needs behaviour log-probs");
  }
  Eigen::RowVectorXd lp = graph_log_probs(pol, theta_init, data);
  for (Eigen::Index j = 0; j < lp.size(); ++j) {
    const double d = std::abs(lp[j] - data.behavior_log_probs[j]);
    if (!(d <= 1e-8 * (1.0 + std::abs(lp[j])))) {
      throw Error(ErrorKind::kInvalidArgument,
                  "stored behaviour log-prob at step " + std::to_string(j) + " does not match theta_init");
    }
  }
  return lp;
}

diff::ParamVector adapt_iw(const policy::Policy& pol, const diff::ParamVector& theta,
                           const diff::ParamVector& theta_init, std::span<const Trajectory> batch, double alpha,
                           const diff::Mask& mask, const InnerConfig& cfg) {
  cfg.validate();
  check_inputs(pol, theta, mask);
  const StackedBatch data = prepare(batch, cfg);
  const Eigen::RowVectorXd init = verified_init_log_probs(pol, theta_init, data);
  return run_step(pol, theta, data, alpha, mask, &init, cfg);
}

}  // namespace gmpslab::inner
