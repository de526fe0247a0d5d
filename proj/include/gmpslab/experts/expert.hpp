#pragma once

#include "gmpslab/diff/param_vector.hpp"
#include "gmpslab/envs/navigation.hpp"
#include "gmpslab/inner/trajectory.hpp"
#include "gmpslab/policy/gaussian_mlp.hpp"
#include "gmpslab/rng.hpp"

#include <memory>
#include <vector>

namespace gmpslab::experts {

/// Per-task expert: either a proportional controller towards the goal or a
/// trained contextual policy bound to the task's context.
class Expert {
 public:
  /// a = k (g - x), scaled down uniformly so no coordinate exceeds max_action.
  static Expert scripted(const envs::NavTask& task, double gain = 5.0, double max_action = 1.0);
  static Expert trained(const policy::GaussianMlp& base, diff::ParamVector params, const envs::NavTask& task);

  bool is_scripted() const { return policy_ == nullptr; }
  int task_id() const { return task_id_; }

  /// Deterministic labels, one column per state column.
  Eigen::MatrixXd mean_action(const Eigen::MatrixXd& states) const;
  /// Executed action: the mean for scripted experts, a policy sample otherwise.
  Eigen::MatrixXd act(const Eigen::MatrixXd& states, Rng& rng) const;

 private:
  Expert() = default;

  int task_id_ = 0;
  Eigen::Vector2d goal_ = Eigen::Vector2d::Zero();
  double gain_ = 5.0;
  double max_action_ = 1.0;
  std::shared_ptr<const policy::ContextualPolicy> policy_;
  diff::ParamVector params_;
};

/// Labels every state column with the expert's mean action.
Eigen::MatrixXd label_states(const Expert& expert, const Eigen::MatrixXd& states);

/// Expert episodes whose stored actions are the expert's labels. `noise` adds
/// Gaussian perturbations to the executed (not the stored) actions.
inner::Batch expert_rollouts(const envs::NavEnv& env, const Expert& expert, int k, double noise, Rng& rng);

/// Relabels trajectories collected by some other policy.
inner::Batch relabel(const Expert& expert, const inner::Batch& visited);

struct ExpertTrainConfig {
  policy::MlpSpec spec;
  std::int64_t budget = 0;
  int rollouts_per_task = 10;
  double learning_rate = 0.01;
  double gamma = 0.99;

  void validate() const;
};

struct TrainedExperts {
  policy::GaussianMlp base;
  diff::ParamVector params;
  /// Mean-action return per task after training.
  std::vector<double> returns;
  std::int64_t env_steps = 0;

  std::vector<Expert> experts(const std::vector<envs::NavTask>& tasks) const;
};

/// One context-conditioned policy trained with REINFORCE and Adam across all
/// tasks until the environment-step budget is spent. `cfg.spec` must take
/// 2 observation inputs plus the context.
TrainedExperts train_contextual_expert(const envs::NavFamily& family, const std::vector<envs::NavTask>& tasks,
                                       const ExpertTrainConfig& cfg, Rng& rng);

/// Mean-action return of an expert on its task.
double deterministic_return(const envs::NavEnv& env, const Expert& expert);

}  // namespace gmpslab::experts
