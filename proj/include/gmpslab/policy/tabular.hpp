#pragma once

#include "gmpslab/envs/chain_mdp.hpp"
#include "gmpslab/policy/policy.hpp"

namespace gmpslab::policy {

/// Softmax over a states x actions table of logits. Observations and actions
/// are 1 x N rows of integer-valued indices.
class TabularSoftmax : public Policy {
 public:
  TabularSoftmax(Eigen::Index n_states, Eigen::Index n_actions);

  const diff::Layout& layout() const override { return layout_; }
  Eigen::Index obs_dim() const override { return 1; }
  Eigen::Index act_dim() const override { return 1; }
  Eigen::Index n_states() const { return n_states_; }
  Eigen::Index n_actions() const { return n_actions_; }

  Eigen::MatrixXd logits(const diff::ParamVector& params) const;
  Eigen::MatrixXd probs(const diff::ParamVector& params) const;
  envs::TabularPolicy tabular(const diff::ParamVector& params) const { return envs::TabularPolicy(probs(params)); }
  diff::ParamVector from_logits(const Eigen::MatrixXd& logits) const;

  /// n_states x n_actions log-probabilities as a graph node.
  diff::Var log_probs(diff::Var theta) const;

  Eigen::RowVectorXd log_prob(const diff::ParamVector& params, const Eigen::MatrixXd& obs,
                              const Eigen::MatrixXd& actions) const override;
  diff::Var log_prob(diff::Var theta, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const override;
  Eigen::MatrixXd act(const diff::ParamVector& params, const Eigen::MatrixXd& obs, Rng& rng) const override;

 private:
  Eigen::Index index(double v, Eigen::Index bound, const char* what) const;

  Eigen::Index n_states_;
  Eigen::Index n_actions_;
  diff::Layout layout_;
};

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Mean over the listed states of KL between two row-stochastic tables.
double kl_on_states(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const std::vector<int>& states);

}  // namespace gmpslab::policy
