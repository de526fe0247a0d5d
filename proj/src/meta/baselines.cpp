#include "gmpslab/envs/step_counter.hpp"
#include "gmpslab/error.hpp"
#include "gmpslab/meta/metatrain.hpp"
#include "gmpslab/optim.hpp"
#include "gmpslab/parallel.hpp"

namespace gmpslab::meta {

using diff::Var;

namespace {

struct Gradient {
  double loss = 0.0;
  Eigen::VectorXd theta;
  double log_alpha = 0.0;
};

Gradient average(std::vector<Gradient>& per, Eigen::Index n) {
  Gradient out{0.0, Eigen::VectorXd::Zero(n), 0.0};
  for (const auto& g : per) {
    out.loss += g.loss;
    out.theta += g.theta;
    out.log_alpha += g.log_alpha;
  }
  const auto k = static_cast<double>(per.size());
  out.loss /= k;
  out.theta /= k;
  out.log_alpha /= k;
  return out;
}

void descend(MetaState& state, const Gradient& g, const MetaConfig& cfg, bool move_alpha) {
  Eigen::VectorXd v(g.theta.size() + 1);
  v << g.theta, (move_alpha ? g.log_alpha : 0.0);
  clip_norm(v, cfg.grad_clip);
  state.theta = state.theta.with_values(state.theta.values() - cfg.beta * v.head(g.theta.size()));
  state.log_alpha -= cfg.beta * v[g.theta.size()];
}

void summarize_into(IterationReport& rep, const envs::NavFamily& family, std::span<const envs::NavTask> tasks,
                    std::span<const inner::Batch> batches) {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto st = inner::summarize(envs::NavEnv(family, tasks[i]), batches[i]);
    rep.task_ids.push_back(tasks[i].id);
    rep.task_returns.push_back(st.mean_return);
    rep.pre_update_return += st.mean_return;
    rep.pre_update_step_reward += st.mean_step_reward;
  }
  rep.pre_update_return /= static_cast<double>(tasks.size());
  rep.pre_update_step_reward /= static_cast<double>(tasks.size());
}

std::vector<envs::NavTask> minibatch(std::span<const envs::NavTask> tasks, int batch, const Rng& rng, int iteration) {
  std::vector<envs::NavTask> all(tasks.begin(), tasks.end());
  if (batch <= 0 || static_cast<std::size_t>(batch) >= all.size()) return all;
  Rng r = rng.derive({stream::kBatch, static_cast<std::uint64_t>(iteration), 0xB});
  std::vector<envs::NavTask> pick;
  std::sample(all.begin(), all.end(), std::back_inserter(pick), static_cast<std::size_t>(batch), r.engine());
  return pick;
}

}  // namespace

MamlGradient maml_gradient(const policy::Policy& pol, const Eigen::VectorXd& theta, const diff::Mask& mask,
                           double log_alpha, std::span<const inner::Batch> train, std::span<const inner::Batch> val,
                           const inner::InnerConfig& cfg) {
  if (train.size() != val.size() || train.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "need matching, non-empty train and validation batches");
  }
  std::vector<Gradient> per(train.size());
  parallel_for(train.size(), [&](std::size_t i) {
    const inner::StackedBatch tr = inner::prepare(train[i], cfg);
    const inner::StackedBatch va = inner::prepare(val[i], cfg);
    diff::Graph g;
    Var th = g.parameter(theta.size());
    Var la = g.parameter(1);
    const inner::InnerStep st = inner::inner_step(pol, th, exp(la), mask, tr, nullptr, cfg);
    Var loss = inner::surrogate_loss(pol, st.phi, va, g.constant(Eigen::MatrixXd::Ones(1, va.size())));
    const auto grads = g.grad(loss, {th, la});
    diff::Bindings b;
    b.set(th, theta).set(la, Eigen::MatrixXd::Constant(1, 1, log_alpha));
    const diff::Evaluation ev = g.evaluate(b, {loss, grads[0], grads[1]});
    per[i] = {ev.scalar(loss), ev[grads[0]].col(0), ev.scalar(grads[1])};
  });
  const Gradient avg = average(per, theta.size());
  return {avg.loss, avg.theta, avg.log_alpha};
}

MetaState maml_train(const policy::GaussianMlp& pol, const envs::NavFamily& family,
                     std::span<const envs::NavTask> tasks, const MetaConfig& cfg, const Rng& rng,
                     const IterationCallback& on_iteration) {
  MetaState state = initial_state(pol, cfg, rng);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto batch = minibatch(tasks, cfg.task_batch, rng, iter);
    std::vector<inner::Batch> train(batch.size()), val(batch.size());
    const auto it = static_cast<std::uint64_t>(iter);
    parallel_for(batch.size(), [&](std::size_t i) {
      const envs::NavEnv env(family, batch[i]);
      const auto id = static_cast<std::uint64_t>(batch[i].id);
      Rng r0 = rng.derive({stream::kRollout, it, id});
      train[i] = inner::rollout(env, pol, state.theta, cfg.rollouts, r0);
      const diff::ParamVector phi =
          inner::adapt(pol, state.theta, train[i], state.alpha(), state.theta.mask(), cfg.inner);
      Rng r1 = rng.derive({stream::kRollout, it, id, 1});
      val[i] = inner::rollout(env, pol, phi, cfg.rollouts, r1);
    });
    state.env_steps += 2 * static_cast<std::int64_t>(cfg.rollouts) * static_cast<std::int64_t>(batch.size()) *
                       (family.horizon - 1);

    IterationReport rep;
    summarize_into(rep, family, batch, train);
    const MamlGradient mg =
        maml_gradient(pol, state.theta.values(), state.theta.mask(), state.log_alpha, train, val, cfg.inner);
    descend(state, {mg.loss, mg.grad_theta, mg.grad_log_alpha}, cfg, cfg.learn_alpha);
    state.iteration = iter + 1;
    rep.iteration = iter;
    rep.outer_loss = mg.loss;
    rep.env_steps = state.env_steps;
    rep.alpha = state.alpha();
    if (on_iteration) on_iteration(rep, state);
  }
  return state;
}

MetaState multitask_train(const policy::GaussianMlp& pol, const envs::NavFamily& family,
                          std::span<const envs::NavTask> tasks, const MetaConfig& cfg, const Rng& rng,
                          const IterationCallback& on_iteration) {
  MetaState state = initial_state(pol, cfg, rng);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto batch = minibatch(tasks, cfg.task_batch, rng, iter);
    std::vector<inner::Batch> train(batch.size());
    std::vector<Gradient> per(batch.size());
    const auto it = static_cast<std::uint64_t>(iter);
    parallel_for(batch.size(), [&](std::size_t i) {
      Rng r = rng.derive({stream::kRollout, it, static_cast<std::uint64_t>(batch[i].id)});
      train[i] = inner::rollout(envs::NavEnv(family, batch[i]), pol, state.theta, cfg.rollouts, r);
      const inner::StackedBatch data = inner::prepare(train[i], cfg.inner);
      diff::Graph g;
      Var th = g.parameter(state.theta.size());
      Var loss = inner::surrogate_loss(pol, th, data, g.constant(Eigen::MatrixXd::Ones(1, data.size())));
      Var grad = diff::grad(loss, th);
      diff::Bindings b;
      b.set(th, state.theta.values());
      const diff::Evaluation ev = g.evaluate(b, {loss, grad});
      per[i] = {ev.scalar(loss), ev[grad].col(0), 0.0};
    });
    state.env_steps +=
        static_cast<std::int64_t>(cfg.rollouts) * static_cast<std::int64_t>(batch.size()) * (family.horizon - 1);
    IterationReport rep;
    summarize_into(rep, family, batch, train);
    const Gradient avg = average(per, state.theta.size());
    descend(state, avg, cfg, false);
    state.iteration = iter + 1;
    rep.iteration = iter;
    rep.outer_loss = avg.loss;
    rep.env_steps = state.env_steps;
    rep.alpha = state.alpha();
    if (on_iteration) on_iteration(rep, state);
  }
  return state;
}

MetaState multitask_imitation(const policy::GaussianMlp& pol, const experts::DemoSet& demos,
                              std::int64_t demo_steps, const MetaConfig& cfg, const Rng& rng,
                              const IterationCallback& on_iteration) {
  const std::vector<int> ids = demos.task_ids();
  if (ids.empty()) throw Error(ErrorKind::kMissingData, "multitask imitation needs demonstrations");
  MetaState state = initial_state(pol, cfg, rng);
  state.demos = demos;
  state.env_steps = demo_steps;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    IterationReport rep;
    const auto it = static_cast<std::uint64_t>(iter);
    for (int n = 0; n < cfg.n_bc; ++n) {
      std::vector<Gradient> per(ids.size());
      parallel_for(ids.size(), [&](std::size_t i) {
        Rng r = rng.derive({stream::kBatch, it, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(ids[i])});
        const LabelledBatch lb = sample_pairs(demos, ids[i], cfg.val_batch, r);
        diff::Graph g;
        Var th = g.parameter(state.theta.size());
        Var loss = bc_loss(pol, th, lb.states, lb.actions);
        Var grad = diff::grad(loss, th);
        diff::Bindings b;
        b.set(th, state.theta.values());
        const diff::Evaluation ev = g.evaluate(b, {loss, grad});
        per[i] = {ev.scalar(loss), ev[grad].col(0), 0.0};
      });
      const Gradient avg = average(per, state.theta.size());
      descend(state, avg, cfg, false);
      rep.outer_loss += avg.loss;
    }
    if (cfg.n_bc > 0) rep.outer_loss /= cfg.n_bc;
    state.iteration = iter + 1;
    rep.iteration = iter;
    rep.task_ids = ids;
    rep.env_steps = state.env_steps;
    rep.alpha = state.alpha();
    if (on_iteration) on_iteration(rep, state);
  }
  return state;
}

namespace {

template <typename F>
double mean_over(const std::vector<std::vector<inner::BatchStats>>& curves, std::size_t k, F&& f) {
  if (curves.empty()) throw Error(ErrorKind::kInvalidArgument, "empty meta-test result");
  double s = 0.0;
  for (const auto& c : curves) s += f(c.at(k));
  return s / static_cast<double>(curves.size());
}

}  // namespace

double MetaTestResult::mean_return(std::size_t k) const {
  return mean_over(curves, k, [](const inner::BatchStats& s) { return s.mean_return; });
}
double MetaTestResult::mean_step_reward(std::size_t k) const {
  return mean_over(curves, k, [](const inner::BatchStats& s) { return s.mean_step_reward; });
}
double MetaTestResult::mean_final_distance(std::size_t k) const {
  return mean_over(curves, k, [](const inner::BatchStats& s) { return s.final_distance; });
}
double MetaTestResult::mean_success(std::size_t k) const {
  return mean_over(curves, k, [](const inner::BatchStats& s) { return s.success_rate; });
}

MetaTestResult meta_test(const policy::Policy& pol, const diff::ParamVector& theta, double alpha,
                         const envs::NavFamily& family, std::span<const envs::NavTask> tasks, int n_grad_steps, int k,
                         const inner::InnerConfig& cfg, const Rng& rng) {
  if (n_grad_steps < 0 || k < 1) throw Error(ErrorKind::kInvalidArgument, "meta-test needs n_grad_steps >= 0 and K >= 1");
  if (!(alpha >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "meta-test step size must be non-negative");
  const envs::EvaluationScope scope;
  MetaTestResult out;
  out.curves.resize(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const envs::NavEnv env(family, tasks[i]);
    Rng r = rng.derive({stream::kEval, static_cast<std::uint64_t>(tasks[i].id)});
    diff::ParamVector params = theta;
    for (int step = 0; step <= n_grad_steps; ++step) {
      const inner::Batch b = inner::rollout(env, pol, params, k, r);
      out.curves[i].push_back(inner::summarize(env, b));
      if (step < n_grad_steps) params = inner::adapt(pol, params, b, alpha, theta.mask(), cfg);
    }
  });
  return out;
}

}  // namespace gmpslab::meta
