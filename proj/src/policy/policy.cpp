#include "gmpslab/policy/policy.hpp"

#include "gmpslab/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace gmpslab::policy {

using diff::Var;

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

void Policy::check_obs(const Eigen::MatrixXd& obs) const {
  if (obs.rows() != obs_dim()) {
    throw Error(ErrorKind::kShapeMismatch, "observation has " + std::to_string(obs.rows()) + " rows, policy expects " +
                                               std::to_string(obs_dim()));
  }
}

void Policy::check_pair(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const {
  check_obs(obs);
  if (actions.rows() != act_dim() || actions.cols() != obs.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "actions are " + std::to_string(actions.rows()) + "x" +
                                               std::to_string(actions.cols()) + ", expected " +
                                               std::to_string(act_dim()) + "x" + std::to_string(obs.cols()));
  }
}

void Policy::check_params(const diff::ParamVector& params) const {
  if (!(params.layout() == layout())) throw Error(ErrorKind::kShapeMismatch, "parameter layout does not match policy");
}

Eigen::RowVectorXd gaussian_log_density(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                                        const Eigen::MatrixXd& actions) {
  const Eigen::ArrayXXd z = (actions - mean).array().colwise() * (-log_std.array()).exp();
  const double norm = log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * kLog2Pi;
  return (-0.5 * z.square().colwise().sum() - norm).matrix();
}

Eigen::RowVectorXd GaussianPolicy::log_prob(const diff::ParamVector& params, const Eigen::MatrixXd& obs,
                                            const Eigen::MatrixXd& actions) const {
  check_pair(obs, actions);
  return gaussian_log_density(mean(params, obs), log_std(params), actions);
}

Var GaussianPolicy::log_prob(Var theta, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const {
  check_pair(obs, actions);
  Var mu = mean(theta, obs);
  Var ls = log_std(theta);
  Var z = cmul(diff::constant_like(theta, actions) - mu, exp(-ls));
  Var norm = sum(ls) + 0.5 * static_cast<double>(act_dim()) * kLog2Pi;
  return -0.5 * col_sum(square(z)) - norm;
}

Eigen::MatrixXd GaussianPolicy::act(const diff::ParamVector& params, const Eigen::MatrixXd& obs, Rng& rng) const {
  check_obs(obs);
  const Eigen::MatrixXd mu = mean(params, obs);
  const Eigen::ArrayXd sigma = log_std(params).array().exp();
  const Eigen::MatrixXd eps = rng.normal(mu.rows(), mu.cols());
  return mu + (eps.array().colwise() * sigma).matrix();
}

double kl_diag_gaussian(const Eigen::VectorXd& mean_p, const Eigen::VectorXd& log_std_p, const Eigen::VectorXd& mean_q,
                        const Eigen::VectorXd& log_std_q) {
  const Eigen::ArrayXd var_p = (2.0 * log_std_p.array()).exp();
  const Eigen::ArrayXd var_q = (2.0 * log_std_q.array()).exp();
  const Eigen::ArrayXd d2 = (mean_p - mean_q).array().square();
  return (log_std_q.array() - log_std_p.array() + (var_p + d2) / (2.0 * var_q) - 0.5).sum();
}

double kl_categorical(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

double kl_on_states(const GaussianPolicy& p, const diff::ParamVector& p_params, const GaussianPolicy& q,
                    const diff::ParamVector& q_params, const Eigen::MatrixXd& states) {
  if (states.cols() == 0) throw Error(ErrorKind::kInvalidArgument, "kl_on_states needs at least one state");
  if (p.act_dim() != q.act_dim()) throw Error(ErrorKind::kShapeMismatch, "policies have different action spaces");
  const Eigen::MatrixXd mp = p.mean(p_params, states);
  const Eigen::MatrixXd mq = q.mean(q_params, states);
  const Eigen::VectorXd lp = p.log_std(p_params);
  const Eigen::VectorXd lq = q.log_std(q_params);
  double total = 0.0;
  for (Eigen::Index j = 0; j < states.cols(); ++j) total += kl_diag_gaussian(mp.col(j), lp, mq.col(j), lq);
  return total / static_cast<double>(states.cols());
}

}  // namespace gmpslab::policy
