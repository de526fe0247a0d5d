#include "gmpslab/experts/expert.hpp"

#include "gmpslab/diff/graph.hpp"
#include "gmpslab/envs/step_counter.hpp"
#include "gmpslab/error.hpp"
#include "gmpslab/inner/adapt.hpp"
#include "gmpslab/inner/rollout.hpp"
#include "gmpslab/optim.hpp"

#include <string>

namespace gmpslab::experts {

Expert Expert::scripted(const envs::NavTask& task, double gain, double max_action) {
  if (!(gain > 0.0) || !(max_action > 0.0)) throw Error(ErrorKind::kInvalidArgument, "gain and max_action must be positive");
  Expert e;
  e.task_id_ = task.id;
  e.goal_ = task.goal;
  e.gain_ = gain;
  e.max_action_ = max_action;
  return e;
}

Expert Expert::trained(const policy::GaussianMlp& base, diff::ParamVector params, const envs::NavTask& task) {
  Expert e;
  e.task_id_ = task.id;
  e.goal_ = task.goal;
  e.policy_ = std::make_shared<const policy::ContextualPolicy>(base, task.context());
  e.params_ = std::move(params);
  return e;
}

Eigen::MatrixXd Expert::mean_action(const Eigen::MatrixXd& states) const {
  if (states.rows() != 2) throw Error(ErrorKind::kShapeMismatch, "expert expects 2-D positions");
  if (policy_) return policy_->mean(params_, states);
  Eigen::MatrixXd a = gain_ * ((-states).colwise() + goal_);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double peak = a.col(j).cwiseAbs().maxCoeff();
    if (peak > max_action_) a.col(j) *= max_action_ / peak;
  }
  return a;
}

Eigen::MatrixXd Expert::act(const Eigen::MatrixXd& states, Rng& rng) const {
  if (policy_) return policy_->act(params_, states, rng);
  return mean_action(states);
}

Eigen::MatrixXd label_states(const Expert& expert, const Eigen::MatrixXd& states) {
  if (states.cols() == 0) throw Error(ErrorKind::kInvalidArgument, "no states to label");
  return expert.mean_action(states);
}

inner::Batch relabel(const Expert& expert, const inner::Batch& visited) {
  inner::Batch out = visited;
  for (auto& tr : out) {
    tr.actions = label_states(expert, tr.states.leftCols(tr.steps()));
    tr.behavior_log_probs.resize(0);
  }
  return out;
}

inner::Batch expert_rollouts(const envs::NavEnv& env, const Expert& expert, int k, double noise, Rng& rng) {
  inner::Batch visited = inner::rollout(
      env, [&](const Eigen::MatrixXd& x) { return expert.act(x, rng); }, k, noise, rng);
  return relabel(expert, visited);
}

double deterministic_return(const envs::NavEnv& env, const Expert& expert) {
  const envs::EvaluationScope scope;
  envs::EnvState s = env.reset();
  double total = 0.0;
  for (int t = 1; t < env.horizon(); ++t) {
    const auto r = env.step(s, expert.mean_action(s.position).col(0));
    total += r.reward;
    s = r.state;
  }
  return total;
}

void ExpertTrainConfig::validate() const {
  spec.validate();
  if (budget < 0) throw Error(ErrorKind::kConfig, "expert budget must be non-negative");
  if (rollouts_per_task < 1) throw Error(ErrorKind::kConfig, "expert rollouts_per_task must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfig, "expert learning_rate must be positive");
}

std::vector<Expert> TrainedExperts::experts(const std::vector<envs::NavTask>& tasks) const {
  std::vector<Expert> out;
  for (const auto& t : tasks) out.push_back(Expert::trained(base, params, t));
  return out;
}

TrainedExperts train_contextual_expert(const envs::NavFamily& family, const std::vector<envs::NavTask>& tasks,
                                       const ExpertTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (tasks.empty()) throw Error(ErrorKind::kInvalidArgument, "no tasks to train experts on");
  const auto ctx_dim = tasks.front().context().size();
  if (cfg.spec.obs_dim != 2 + ctx_dim) {
    throw Error(ErrorKind::kConfig, "expert obs_dim must be 2 + context dimension (" + std::to_string(2 + ctx_dim) + ")");
  }
  TrainedExperts out{policy::GaussianMlp(cfg.spec), {}, {}, 0};
  Rng init_rng = rng.derive({stream::kInit});
  out.params = out.base.init(init_rng);

  std::vector<envs::NavEnv> envs_;
  std::vector<policy::ContextualPolicy> pols;
  for (const auto& t : tasks) {
    envs_.emplace_back(family, t);
    pols.emplace_back(out.base, t.context());
  }
  const std::int64_t per_iter =
      static_cast<std::int64_t>(tasks.size()) * cfg.rollouts_per_task * (family.horizon - 1);
  Adam adam(cfg.learning_rate);
  for (std::uint64_t it = 0; out.env_steps + per_iter <= cfg.budget; ++it) {
    diff::Graph g;
    diff::Var th = g.parameter(out.params.size());
    diff::Var total = g.scalar(0.0);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      Rng r = rng.derive({stream::kRollout, it, i});
      const inner::Batch b = inner::rollout(envs_[i], pols[i], out.params, cfg.rollouts_per_task, r);
      inner::StackedBatch data = inner::stack(b, inner::advantages(b, cfg.gamma));
      const double sd = std::sqrt((data.advantages.array().square()).mean());
      if (sd > 0.0) data.advantages /= sd;
      total = total + inner::surrogate_loss(pols[i], th, data, g.constant(Eigen::MatrixXd::Ones(1, data.size())));
    }
    out.env_steps += per_iter;
    diff::Var grad = diff::grad(total, th);
    diff::Bindings bind;
    bind.set(th, out.params.values());
    Eigen::VectorXd gv = g.evaluate(bind, {grad})[grad].col(0) / static_cast<double>(tasks.size());
    out.params = out.params.with_values(out.params.values() - adam.step(gv));
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out.returns.push_back(deterministic_return(envs_[i], Expert::trained(out.base, out.params, tasks[i])));
  }
  return out;
}

}  // namespace gmpslab::experts
