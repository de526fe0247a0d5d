#pragma once

#include "gmpslab/diff/graph.hpp"
#include "gmpslab/diff/param_vector.hpp"
#include "gmpslab/envs/navigation.hpp"
#include "gmpslab/experts/demos.hpp"
#include "gmpslab/experts/expert.hpp"
#include "gmpslab/inner/adapt.hpp"
#include "gmpslab/inner/rollout.hpp"
#include "gmpslab/policy/gaussian_mlp.hpp"
#include "gmpslab/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gmpslab::meta {

struct MetaConfig {
  /// Inner step size; with learn_alpha it is the initial value of exp(log_alpha).
  double alpha = 0.1;
  bool learn_alpha = true;
  /// Outer gradient-descent step and the norm the outer gradient is clipped to.
  double beta = 0.01;
  double grad_clip = 10.0;
  /// K: on-policy rollouts per task for each inner step.
  int rollouts = 20;
  /// Imitation steps per meta-iteration.
  int n_bc = 200;
  /// Expert-labelled pairs drawn per task for each imitation step.
  int val_batch = 64;
  /// Tasks per meta-iteration; 0 means all of them.
  int task_batch = 0;
  bool aggregation = true;
  /// Expert episodes per task that seed the demonstration set.
  int initial_demos = 20;
  /// Adapted-policy episodes per task labelled and appended each iteration.
  int agg_rollouts = 20;
  /// Std of Gaussian noise on the executed expert actions when seeding demos.
  double demo_noise = 0.0;
  policy::AdaptMode adapt_mode = policy::AdaptMode::kAll;
  bool adapt_log_std = true;
  int iterations = 50;
  inner::InnerConfig inner;

  void validate() const;
};

struct MetaState {
  /// Initial parameters; the mask marks the entries the inner step may change.
  diff::ParamVector theta;
  double log_alpha = std::log(0.1);
  experts::DemoSet demos;
  /// Training environment steps charged to this run, expert acquisition included.
  std::int64_t env_steps = 0;
  int iteration = 0;

  double alpha() const { return std::exp(log_alpha); }
};

struct IterationReport {
  int iteration = 0;
  std::int64_t env_steps = 0;
  /// Episode return and per-step reward of the rollouts collected at theta.
  double pre_update_return = 0.0;
  double pre_update_step_reward = 0.0;
  /// Mean outer loss over the iteration's updates (behaviour cloning for
  /// GMPS and imitation, policy-gradient surrogate for MAML and multitask RL).
  double outer_loss = 0.0;
  double alpha = 0.0;
  /// Pre-update mean return per task of this iteration's minibatch.
  std::vector<int> task_ids;
  std::vector<double> task_returns;
};

using IterationCallback = std::function<void(const IterationReport&, const MetaState&)>;

/// Mean negative log-likelihood of the expert actions under the policy at phi.
diff::Var bc_loss(const policy::Policy& pol, diff::Var phi, const Eigen::MatrixXd& states,
                  const Eigen::MatrixXd& actions);

/// Expert-labelled pairs of one task used by one imitation step.
struct LabelledBatch {
  int task_id = 0;
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
};

/// Up to `n` pairs of the task drawn uniformly without replacement.
LabelledBatch sample_pairs(const experts::DemoSet& demos, int task_id, int n, Rng& rng);

/// The GMPS objective on frozen rollouts:
///   L(theta, log_alpha) = mean_i L_BC(adapt_iw(theta; D_i^tr, theta_init), D_i^val)
/// with the inner step phi_i = theta - exp(log_alpha) * mask * grad.
class ImitationObjective {
 public:
  /// `train[i]` must have been collected at `theta_init` with behaviour log-probs.
  ImitationObjective(const policy::Policy& pol, diff::ParamVector theta_init, std::span<const inner::Batch> train,
                     const inner::InnerConfig& cfg);

  struct Value {
    double loss = 0.0;
    Eigen::VectorXd grad_theta;
    double grad_log_alpha = 0.0;
    bool nonsmooth = false;
  };

  /// `val[i]` pairs with `train[i]`.
  Value evaluate(const Eigen::VectorXd& theta, double log_alpha, std::span<const LabelledBatch> val) const;
  double loss(const Eigen::VectorXd& theta, double log_alpha, std::span<const LabelledBatch> val) const;

  std::size_t tasks() const { return data_.size(); }

 private:
  const policy::Policy& pol_;
  diff::ParamVector theta_init_;
  inner::InnerConfig cfg_;
  std::vector<inner::StackedBatch> data_;
  std::vector<Eigen::RowVectorXd> init_log_probs_;
};

struct MetaStepResult {
  MetaState state;
  IterationReport report;
};

/// One meta step: K rollouts per task at theta (reused from `collected`
/// when given; they must come from the current theta), then n_bc imitation
/// steps on the frozen rollouts. Throws kMissingData naming a task without
/// demonstrations.
MetaStepResult gmps_meta_step(const policy::Policy& pol, const envs::NavFamily& family,
                              std::span<const envs::NavTask> tasks, const MetaState& state, const MetaConfig& cfg,
                              const Rng& rng, const std::vector<inner::Batch>* collected = nullptr);

/// Fresh initial parameters carrying the configured adaptation mask.
MetaState initial_state(const policy::GaussianMlp& pol, const MetaConfig& cfg, const Rng& rng);

/// Expert episodes seeding the demonstration set. Returns the steps used.
std::int64_t seed_demos(experts::DemoSet& demos, const envs::NavFamily& family, std::span<const envs::NavTask> tasks,
                        std::span<const experts::Expert> experts, int episodes, double noise, const Rng& rng);

/// Full meta-training with aggregation. `expert_steps` are the environment
/// steps already spent to obtain the experts and are charged to the run.
/// When `demos` is non-empty it replaces the expert seeding rollouts.
MetaState gmps_train(const policy::GaussianMlp& pol, const envs::NavFamily& family,
                     std::span<const envs::NavTask> tasks, std::span<const experts::Expert> experts,
                     std::int64_t expert_steps, const MetaConfig& cfg, const Rng& rng,
                     const IterationCallback& on_iteration = {}, const experts::DemoSet& demos = {});

/// MAML objective on frozen data: mean_i surrogate(phi_i, D_i^val), where
/// phi_i adapts on D_i^tr and D_i^val was collected under phi_i.
struct MamlGradient {
  double loss = 0.0;
  Eigen::VectorXd grad_theta;
  double grad_log_alpha = 0.0;
};
MamlGradient maml_gradient(const policy::Policy& pol, const Eigen::VectorXd& theta, const diff::Mask& mask,
                           double log_alpha, std::span<const inner::Batch> train, std::span<const inner::Batch> val,
                           const inner::InnerConfig& cfg);

/// MAML with a policy-gradient outer objective and plain gradient descent.
MetaState maml_train(const policy::GaussianMlp& pol, const envs::NavFamily& family,
                     std::span<const envs::NavTask> tasks, const MetaConfig& cfg, const Rng& rng,
                     const IterationCallback& on_iteration = {});

/// One policy trained by policy gradient on all tasks, without adaptation.
MetaState multitask_train(const policy::GaussianMlp& pol, const envs::NavFamily& family,
                          std::span<const envs::NavTask> tasks, const MetaConfig& cfg, const Rng& rng,
                          const IterationCallback& on_iteration = {});

/// One policy cloned from the demonstrations of all tasks; iterations * n_bc
/// gradient steps. `demo_steps` are the steps spent collecting the demos.
MetaState multitask_imitation(const policy::GaussianMlp& pol, const experts::DemoSet& demos,
                              std::int64_t demo_steps, const MetaConfig& cfg, const Rng& rng,
                              const IterationCallback& on_iteration = {});

/// Statistics of each held-out task before adaptation and after each
/// on-policy gradient step; entry [i][k] is task i after k steps.
struct MetaTestResult {
  std::vector<std::vector<inner::BatchStats>> curves;

  std::size_t steps() const { return curves.empty() ? 0 : curves.front().size() - 1; }
  double mean_return(std::size_t k) const;
  double mean_step_reward(std::size_t k) const;
  double mean_final_distance(std::size_t k) const;
  double mean_success(std::size_t k) const;
};

/// Reward-only adaptation to each task: K rollouts, one policy-gradient step,
/// repeated n_grad_steps times, then K more rollouts to measure the result.
/// Runs under an evaluation scope, so its steps are not charged to training.
MetaTestResult meta_test(const policy::Policy& pol, const diff::ParamVector& theta, double alpha,
                         const envs::NavFamily& family, std::span<const envs::NavTask> tasks, int n_grad_steps, int k,
                         const inner::InnerConfig& cfg, const Rng& rng);

}  // namespace gmpslab::meta
