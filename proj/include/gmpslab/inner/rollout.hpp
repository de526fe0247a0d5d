#pragma once

#include "gmpslab/diff/param_vector.hpp"
#include "gmpslab/envs/chain_mdp.hpp"
#include "gmpslab/envs/navigation.hpp"
#include "gmpslab/inner/trajectory.hpp"
#include "gmpslab/policy/policy.hpp"
#include "gmpslab/rng.hpp"

#include <functional>

namespace gmpslab::inner {

/// `k` navigation episodes under a stochastic policy, simulated in lock-step.
/// Behaviour log-probs are recorded. Every step is counted by the envs step
/// counter; the caller's bookkeeping is k * (H - 1).
Batch rollout(const envs::NavEnv& env, const policy::Policy& pol, const diff::ParamVector& params, int k, Rng& rng);

/// Episodes under a deterministic controller mapping 2xN positions to 2xN
/// actions, optionally perturbed by Gaussian execution noise of std `noise`.
using Controller = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& positions)>;
Batch rollout(const envs::NavEnv& env, const Controller& controller, int k, double noise, Rng& rng);

/// Episodes of a chain MDP under a tabular softmax policy. States and actions
/// are stored as 1xN index rows.
Batch rollout(const envs::ChainMdp& mdp, int task, const policy::Policy& pol, const diff::ParamVector& params, int k,
              Rng& rng);

/// Mean undiscounted return and mean final distance to the goal.
struct BatchStats {
  double mean_return = 0.0;
  double mean_step_reward = 0.0;
  double final_distance = 0.0;
  double success_rate = 0.0;
};
BatchStats summarize(const envs::NavEnv& env, std::span<const Trajectory> batch);

}  // namespace gmpslab::inner
