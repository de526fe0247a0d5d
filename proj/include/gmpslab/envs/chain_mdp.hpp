#pragma once

#include "gmpslab/rng.hpp"

#include <Eigen/Dense>
#include <vector>

namespace gmpslab::envs {

/// Finite-horizon tabular MDP with a shared transition model and one reward
/// table per task. Time is 0-based in this module: t = 0 is the first step.
struct ChainMdp {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;
  /// transitions[a](s, s') = P(s' | s, a).
  std::vector<Eigen::MatrixXd> transitions;
  /// rewards[i](s, a) in [0, 1] for task i.
  std::vector<Eigen::MatrixXd> rewards;
  Eigen::VectorXd initial;

  int n_tasks() const { return static_cast<int>(rewards.size()); }
  void validate() const;
  /// (S*A) x S matrix whose row a*S + s is P(. | s, a); matches the
  /// column-major flattening of an S x A table.
  Eigen::MatrixXd stacked_transitions() const;
};

/// Action probabilities per time step; a single entry means stationary.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(Eigen::MatrixXd stationary);
  explicit TabularPolicy(std::vector<Eigen::MatrixXd> per_step);

  const Eigen::MatrixXd& at(int t) const;
  bool stationary() const { return probs_.size() == 1; }
  /// Throws unless every row of every table is a distribution.
  void validate(int n_states, int n_actions, int horizon) const;

 private:
  std::vector<Eigen::MatrixXd> probs_;
};

struct ValueTables {
  /// V[t](s), t = 0..H, with V[H] = 0.
  std::vector<Eigen::VectorXd> V;
  /// Q[t](s, a), t = 0..H-1.
  std::vector<Eigen::MatrixXd> Q;
};

/// Backward dynamic programming for a fixed policy on task `task`.
ValueTables solve_exact(const ChainMdp& mdp, int task, const TabularPolicy& policy);
/// Optimal values; the returned V/Q are those of the optimal policy.
ValueTables solve_optimal(const ChainMdp& mdp, int task);
/// State distributions d^t, t = 0..H-1, of a policy from the initial distribution.
std::vector<Eigen::VectorXd> occupancy(const ChainMdp& mdp, const TabularPolicy& policy);

struct ChainEpisode {
  std::vector<int> states;  // H + 1 entries
  std::vector<int> actions;
  std::vector<double> rewards;
};

ChainEpisode sample_episode(const ChainMdp& mdp, int task, const TabularPolicy& policy, Rng& rng);

/// Random chain family: states on a line, actions move left / right / stay
/// with a per-MDP slip probability; each task rewards a different state.
ChainMdp random_chain(int n_states, int n_actions, int n_tasks, int horizon, Rng& rng);

}  // namespace gmpslab::envs
