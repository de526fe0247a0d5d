#pragma once

#include "gmpslab/diff/graph.hpp"
#include "gmpslab/diff/param_vector.hpp"
#include "gmpslab/envs/chain_mdp.hpp"
#include "gmpslab/policy/tabular.hpp"
#include "gmpslab/rng.hpp"

#include <span>
#include <vector>

namespace gmpslab::verify {

using envs::ChainMdp;
using envs::TabularPolicy;

/// Expected finite-horizon return of `policy` on task `task`.
double exact_return(const ChainMdp& mdp, int task, const TabularPolicy& policy);

/// Time-dependent expert acting by softmax(Q_t / temperature) on its own
/// action values, built by backward induction.
TabularPolicy boltzmann_expert(const ChainMdp& mdp, int task, double temperature);
/// Deterministic optimal policy; ties go to the lowest action index.
TabularPolicy greedy_expert(const ChainMdp& mdp, int task);

/// Per-state comparison of two action distributions p and q.
struct Divergences {
  /// Disagreement probability when a and a* are drawn from the maximal coupling of p and q.
  double zero_one = 0.0;
  double tv = 0.0;
  /// KL(p || q); infinite when p puts mass where q has none.
  double kl = 0.0;
};
Divergences divergences(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Time-averaged KL(adapted_t(s) || expert_t(s)) weighted by the adapted
/// policy's state distribution, for each task.
std::vector<double> task_epsilons(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                                  std::span<const TabularPolicy> experts);
/// Maximum of task_epsilons.
double measure_epsilon(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                       std::span<const TabularPolicy> experts);

/// Largest spread max_a Q_t(s,a) - min_a Q_t(s,a) of the expert's action
/// values, over tasks and over the (s, t) that the adapted policy reaches
/// with positive probability and where it differs from the expert. Rewards
/// lie in [0, 1], so this is also the spread of the costs 1 - r.
double measure_delta(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                     std::span<const TabularPolicy> experts);

struct BoundReport {
  std::vector<double> task_epsilon;
  double epsilon = 0.0;
  double delta = 0.0;
  int horizon = 0;
  /// Exact returns averaged over tasks, with the per-task values alongside.
  double j_expert = 0.0;
  double j_adapted = 0.0;
  std::vector<double> task_j_expert;
  std::vector<double> task_j_adapted;
  /// j_adapted - (j_expert - delta * H * sqrt(epsilon)).
  double slack = 0.0;
  /// Smallest per-task slack, using the task's own epsilon.
  double min_task_slack = 0.0;
  /// Largest violation of 0-1 <= TV <= sqrt(KL) over every checked (task, t, s).
  double chain_violation = 0.0;
  bool verdict = false;
};

/// Compares one adapted policy per task against that task's expert.
BoundReport check_bound(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                        std::span<const TabularPolicy> experts);

/// Fraction of the aggregated state distribution that follows the expert at
/// iteration j; entries past the end are zero.
class MixtureSchedule {
 public:
  MixtureSchedule() = default;
  explicit MixtureSchedule(std::vector<double> betas);

  double at(int j) const;
  const std::vector<double>& values() const { return betas_; }

 private:
  std::vector<double> betas_;
};

struct TabularGmpsConfig {
  double alpha = 0.5;
  bool learn_alpha = true;
  /// Outer gradient-descent step and gradient-norm clip.
  double beta = 0.5;
  double grad_clip = 10.0;
  int iterations = 10;
  int n_bc = 20;
  /// Standard deviation of the initial logits.
  double init_scale = 0.5;
  MixtureSchedule mixture;

  void validate() const;
};

/// Occupancy-weighted expert action distribution: W(s, a) accumulates
/// sum_t d^t(s) expert_t(a | s). One table per task, aggregated over iterations.
using LabelTable = Eigen::MatrixXd;

struct TabularGmpsResult {
  diff::ParamVector theta;
  double log_alpha = 0.0;
  std::vector<LabelTable> labels;
  /// Mean imitation loss of each iteration's outer steps.
  std::vector<double> losses;

  double alpha() const;
};

/// Differentiable exact return of the stationary softmax policy with logits
/// theta on one task.
diff::Var exact_return_graph(const policy::TabularSoftmax& pol, diff::Var theta, const ChainMdp& mdp, int task);

/// phi = theta + alpha * dJ/dtheta with the exact gradient of the task return.
diff::Var exact_inner_step(const policy::TabularSoftmax& pol, diff::Var theta, diff::Var alpha, const ChainMdp& mdp,
                           int task);

/// GMPS on every task of `mdp` with exact inner gradients and exact
/// occupancy-weighted expert labels in place of sampled demonstrations.
TabularGmpsResult train_tabular_gmps(const ChainMdp& mdp, std::span<const TabularPolicy> experts,
                                     const TabularGmpsConfig& cfg, const Rng& rng);

/// The adapted policy of each task after one exact inner step from the result.
std::vector<TabularPolicy> adapted_policies(const ChainMdp& mdp, const TabularGmpsResult& result);

}  // namespace gmpslab::verify
