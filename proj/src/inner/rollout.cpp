#include "gmpslab/inner/rollout.hpp"

#include "gmpslab/envs/step_counter.hpp"
#include "gmpslab/error.hpp"

namespace gmpslab::inner {

namespace {

Batch allocate(int k, Eigen::Index obs_dim, Eigen::Index act_dim, Eigen::Index steps, int task_id, bool logp) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "need at least one rollout");
  Batch out(static_cast<std::size_t>(k));
  for (auto& tr : out) {
    tr.states.resize(obs_dim, steps + 1);
    tr.actions.resize(act_dim, steps);
    tr.rewards.resize(steps);
    if (logp) tr.behavior_log_probs.resize(steps);
    tr.task_id = task_id;
  }
  return out;
}

template <typename ActFn>
Batch nav_episodes(const envs::NavEnv& env, int k, bool logp, ActFn&& act) {
  const Eigen::Index steps = env.horizon() - 1;
  Batch out = allocate(k, 2, 2, steps, env.task().id, logp);
  Eigen::Matrix2Xd pos = env.reset().position.replicate(1, k);
  Eigen::MatrixXd a;
  Eigen::RowVectorXd lp;
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)].states.col(t) = pos.col(i);
    act(Eigen::MatrixXd(pos), a, lp);
    const Eigen::RowVectorXd r = env.step_batch(pos, a);
    for (int i = 0; i < k; ++i) {
      auto& tr = out[static_cast<std::size_t>(i)];
      tr.actions.col(t) = a.col(i);
      tr.rewards[t] = r[i];
      if (logp) tr.behavior_log_probs[t] = lp[i];
    }
  }
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)].states.col(steps) = pos.col(i);
  return out;
}

}  // namespace

Batch rollout(const envs::NavEnv& env, const policy::Policy& pol, const diff::ParamVector& params, int k, Rng& rng) {
  if (pol.obs_dim() != 2 || pol.act_dim() != 2) throw Error(ErrorKind::kShapeMismatch, "navigation needs a 2-D policy");
  return nav_episodes(env, k, true, [&](const Eigen::MatrixXd& obs, Eigen::MatrixXd& a, Eigen::RowVectorXd& lp) {
    a = pol.act(params, obs, rng);
    lp = pol.log_prob(params, obs, a);
  });
}

Batch rollout(const envs::NavEnv& env, const Controller& controller, int k, double noise, Rng& rng) {
  return nav_episodes(env, k, false, [&](const Eigen::MatrixXd& obs, Eigen::MatrixXd& a, Eigen::RowVectorXd&) {
    a = controller(obs);
    if (noise > 0.0) a += noise * rng.normal(a.rows(), a.cols());
  });
}

Batch rollout(const envs::ChainMdp& mdp, int task, const policy::Policy& pol, const diff::ParamVector& params, int k,
              Rng& rng) {
  if (pol.obs_dim() != 1 || pol.act_dim() != 1) throw Error(ErrorKind::kShapeMismatch, "chain MDPs need a tabular policy");
  const Eigen::Index steps = mdp.horizon;
  Batch out = allocate(k, 1, 1, steps, task, true);
  const auto& r = mdp.rewards.at(static_cast<std::size_t>(task));
  auto draw = [&](const Eigen::VectorXd& p) {
    double u = rng.uniform();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      u -= p[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
  };
  for (auto& tr : out) {
    int s = draw(mdp.initial);
    for (Eigen::Index t = 0; t < steps; ++t) {
      tr.states(0, t) = s;
      const Eigen::MatrixXd obs = Eigen::MatrixXd::Constant(1, 1, s);
      const Eigen::MatrixXd a = pol.act(params, obs, rng);
      const int ai = static_cast<int>(a(0, 0));
      tr.actions(0, t) = ai;
      tr.behavior_log_probs[t] = pol.log_prob(params, obs, a)[0];
      tr.rewards[t] = r(s, ai);
      s = draw(mdp.transitions[static_cast<std::size_t>(ai)].row(s).transpose());
    }
    tr.states(0, steps) = s;
  }
  envs::record_steps(static_cast<std::int64_t>(k) * steps);
  return out;
}

BatchStats summarize(const envs::NavEnv& env, std::span<const Trajectory> batch) {
  if (batch.empty()) throw Error(ErrorKind::kInvalidArgument, "summary of an empty batch");
  BatchStats st;
  for (const auto& tr : batch) {
    const Eigen::Vector2d last = tr.states.col(tr.states.cols() - 1);
    st.mean_return += tr.total_reward();
    st.mean_step_reward += tr.total_reward() / static_cast<double>(tr.steps());
    const double dist = (last - env.task().goal).norm();
    st.final_distance += dist;
    st.success_rate += envs::reached(env.family(), env.task(), last) ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(batch.size());
  st.mean_return /= n;
  st.mean_step_reward /= n;
  st.final_distance /= n;
  st.success_rate /= n;
  return st;
}

}  // namespace gmpslab::inner
