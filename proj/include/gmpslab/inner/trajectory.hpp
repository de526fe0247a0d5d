#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace gmpslab::inner {

/// One episode, stored column-wise: states s_1..s_T+1, actions and rewards
/// a_1..a_T, and the log-probabilities the behaviour policy assigned to them.
struct Trajectory {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::RowVectorXd rewards;
  /// Empty when the generating policy's densities were not recorded.
  Eigen::RowVectorXd behavior_log_probs;
  int task_id = 0;

  Eigen::Index steps() const { return actions.cols(); }
  double total_reward() const { return rewards.sum(); }
  /// Throws on misaligned lengths or non-finite entries.
  void validate() const;
};

using Batch = std::vector<Trajectory>;

/// Per-step advantages, one row per trajectory.
struct AdvantageEstimate {
  Eigen::MatrixXd values;
  double gamma = 0.99;
};

/// Discounted reward-to-go minus the per-timestep batch mean, optionally
/// rescaled to unit root-mean-square (left at zero when all entries are zero).
AdvantageEstimate advantages(std::span<const Trajectory> batch, double gamma, bool normalize = false);

/// All steps of a batch side by side, trajectory-major.
struct StackedBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::RowVectorXd advantages;
  Eigen::RowVectorXd behavior_log_probs;

  Eigen::Index size() const { return obs.cols(); }
};

StackedBatch stack(std::span<const Trajectory> batch, const AdvantageEstimate& adv);

}  // namespace gmpslab::inner
