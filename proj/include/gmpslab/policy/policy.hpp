#pragma once

#include "gmpslab/diff/graph.hpp"
#include "gmpslab/diff/param_vector.hpp"
#include "gmpslab/rng.hpp"

#include <Eigen/Dense>

namespace gmpslab::policy {

/// A stochastic policy over a flat parameter vector. Observations and actions
/// are stored one per column. Each policy offers two routes to its density: a
/// plain Eigen evaluation and a graph builder used when derivatives are needed.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual const diff::Layout& layout() const = 0;
  virtual Eigen::Index obs_dim() const = 0;
  virtual Eigen::Index act_dim() const = 0;

  /// 1 x N log densities of each action column given its observation column.
  virtual Eigen::RowVectorXd log_prob(const diff::ParamVector& params, const Eigen::MatrixXd& obs,
                                      const Eigen::MatrixXd& actions) const = 0;
  virtual diff::Var log_prob(diff::Var theta, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const = 0;
  /// One sampled action per observation column.
  virtual Eigen::MatrixXd act(const diff::ParamVector& params, const Eigen::MatrixXd& obs, Rng& rng) const = 0;

 protected:
  void check_obs(const Eigen::MatrixXd& obs) const;
  void check_pair(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const;
  void check_params(const diff::ParamVector& params) const;
};

/// Diagonal Gaussian with a state-independent log standard deviation.
class GaussianPolicy : public Policy {
 public:
  virtual Eigen::MatrixXd mean(const diff::ParamVector& params, const Eigen::MatrixXd& obs) const = 0;
  virtual Eigen::VectorXd log_std(const diff::ParamVector& params) const = 0;
  virtual diff::Var mean(diff::Var theta, const Eigen::MatrixXd& obs) const = 0;
  virtual diff::Var log_std(diff::Var theta) const = 0;

  Eigen::RowVectorXd log_prob(const diff::ParamVector& params, const Eigen::MatrixXd& obs,
                              const Eigen::MatrixXd& actions) const override;
  diff::Var log_prob(diff::Var theta, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const override;
  Eigen::MatrixXd act(const diff::ParamVector& params, const Eigen::MatrixXd& obs, Rng& rng) const override;
};

/// log N(actions; mean, diag(exp(2 log_std))) per column.
Eigen::RowVectorXd gaussian_log_density(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                                        const Eigen::MatrixXd& actions);

double kl_diag_gaussian(const Eigen::VectorXd& mean_p, const Eigen::VectorXd& log_std_p, const Eigen::VectorXd& mean_q,
                        const Eigen::VectorXd& log_std_q);
double kl_categorical(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Mean over state columns of KL(p(.|s) || q(.|s)).
double kl_on_states(const GaussianPolicy& p, const diff::ParamVector& p_params, const GaussianPolicy& q,
                    const diff::ParamVector& q_params, const Eigen::MatrixXd& states);

}  // namespace gmpslab::policy
