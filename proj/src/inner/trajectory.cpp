#include "gmpslab/inner/trajectory.hpp"

#include <cmath>

#include "gmpslab/error.hpp"

#include <string>

namespace gmpslab::inner {

void Trajectory::validate() const {
  const auto n = actions.cols();
  if (states.cols() != n + 1 || rewards.size() != n) {
    throw Error(ErrorKind::kShapeMismatch, "trajectory of task " + std::to_string(task_id) + " has " +
                                               std::to_string(states.cols()) + " states, " + std::to_string(n) +
                                               " actions and " + std::to_string(rewards.size()) + " rewards");
  }
  if (behavior_log_probs.size() != 0 && behavior_log_probs.size() != n) {
    throw Error(ErrorKind::kShapeMismatch, "behaviour log-probs do not align with actions");
  }
  if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite() || !behavior_log_probs.allFinite()) {
    throw Error(ErrorKind::kNonFinite, "trajectory of task " + std::to_string(task_id) + " has non-finite entries");
  }
}

AdvantageEstimate advantages(std::span<const Trajectory> batch, double gamma, bool normalize) {
  if (batch.empty()) throw Error(ErrorKind::kInvalidArgument, "advantages of an empty batch");
  const auto T = batch.front().steps();
  AdvantageEstimate out;
  out.gamma = gamma;
  out.values.resize(static_cast<Eigen::Index>(batch.size()), T);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch[i];
    tr.validate();
    if (tr.steps() != T) throw Error(ErrorKind::kShapeMismatch, "trajectories in a batch must share a length");
    double g = 0.0;
    for (auto t = T; t-- > 0;) {
      g = tr.rewards[t] + gamma * g;
      out.values(static_cast<Eigen::Index>(i), t) = g;
    }
  }
  out.values.rowwise() -= out.values.colwise().mean();
  if (normalize) {
    const double rms = std::sqrt(out.values.array().square().mean());
    if (rms > 0.0) out.values /= rms;
  }
  return out;
}

StackedBatch stack(std::span<const Trajectory> batch, const AdvantageEstimate& adv) {
  if (batch.empty()) throw Error(ErrorKind::kInvalidArgument, "stack of an empty batch");
  const auto T = batch.front().steps();
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (adv.values.rows() != n || adv.values.cols() != T) {
    throw Error(ErrorKind::kShapeMismatch, "advantages do not match the batch");
  }
  const bool logp = batch.front().behavior_log_probs.size() != 0;
  StackedBatch s;
  s.obs.resize(batch.front().states.rows(), n * T);
  s.actions.resize(batch.front().actions.rows(), n * T);
  s.advantages.resize(n * T);
  if (logp) s.behavior_log_probs.resize(n * T);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = batch[static_cast<std::size_t>(i)];
    if (tr.steps() != T) throw Error(ErrorKind::kShapeMismatch, "trajectories in a batch must share a length");
    s.obs.middleCols(i * T, T) = tr.states.leftCols(T);
    s.actions.middleCols(i * T, T) = tr.actions;
    s.advantages.segment(i * T, T) = adv.values.row(i);
    if (logp) {
      if (tr.behavior_log_probs.size() != T) {
        throw Error(ErrorKind::kMissingData, "trajectory " + std::to_string(i) + " lacks behaviour log-probs");
      }
      s.behavior_log_probs.segment(i * T, T) = tr.behavior_log_probs;
    }
  }
  return s;
}

}  // namespace gmpslab::inner
