#include "gmpslab/error.hpp"
#include "gmpslab/meta/metatrain.hpp"
#include "gmpslab/optim.hpp"
#include "gmpslab/parallel.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace gmpslab::meta {

using diff::Var;

void MetaConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::kConfig, what);
  };
  need(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive");
  need(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  need(grad_clip > 0.0, "grad_clip must be positive");
  need(rollouts >= 1, "rollouts (K) must be at least 1");
  need(n_bc >= 0, "n_bc must be non-negative");
  need(val_batch >= 1, "val_batch must be at least 1");
  need(task_batch >= 0, "task_batch must be non-negative");
  need(initial_demos >= 0, "initial_demos must be non-negative");
  need(agg_rollouts >= 1, "agg_rollouts must be at least 1");
  need(demo_noise >= 0.0, "demo_noise must be non-negative");
  need(iterations >= 0, "iterations must be non-negative");
  inner.validate();
}

Var bc_loss(const policy::Policy& pol, Var phi, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  if (states.cols() == 0) throw Error(ErrorKind::kInvalidArgument, "behaviour cloning needs at least one pair");
  return -mean(pol.log_prob(phi, states, actions));
}

LabelledBatch sample_pairs(const experts::DemoSet& demos, int task_id, int n, Rng& rng) {
  const experts::TaskDemos& td = demos.task(task_id);
  const auto total = static_cast<std::size_t>(td.pairs());
  std::vector<Eigen::Index> all(total);
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  std::vector<Eigen::Index> pick;
  std::sample(all.begin(), all.end(), std::back_inserter(pick), std::min<std::size_t>(total, static_cast<std::size_t>(n)),
              rng.engine());
  LabelledBatch out{task_id, td.states(Eigen::all, pick), td.actions(Eigen::all, pick)};
  return out;
}

ImitationObjective::ImitationObjective(const policy::Policy& pol, diff::ParamVector theta_init,
                                       std::span<const inner::Batch> train, const inner::InnerConfig& cfg)
    : pol_(pol), theta_init_(std::move(theta_init)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& b : train) {
    data_.push_back(inner::prepare(b, cfg_));
    init_log_probs_.push_back(inner::verified_init_log_probs(pol_, theta_init_, data_.back()));
  }
}

ImitationObjective::Value ImitationObjective::evaluate(const Eigen::VectorXd& theta, double log_alpha,
                                                       std::span<const LabelledBatch> val) const {
  if (val.size() != data_.size()) throw Error(ErrorKind::kShapeMismatch, "one labelled batch per task is required");
  std::vector<Value> per(data_.size());
  parallel_for(data_.size(), [&](std::size_t i) {
    diff::Graph g;
    Var th = g.parameter(theta.size());
    Var la = g.parameter(1);
    const inner::InnerStep st =
        inner::inner_step(pol_, th, exp(la), theta_init_.mask(), data_[i], &init_log_probs_[i], cfg_);
    Var loss = bc_loss(pol_, st.phi, val[i].states, val[i].actions);
    const auto grads = g.grad(loss, {th, la});
    diff::Bindings b;
    b.set(th, theta).set(la, Eigen::MatrixXd::Constant(1, 1, log_alpha));
    const diff::Evaluation ev = g.evaluate(b, {loss, grads[0], grads[1]});
    per[i] = {ev.scalar(loss), ev[grads[0]].col(0), ev.scalar(grads[1]), ev.nonsmooth()};
  });
  Value out{0.0, Eigen::VectorXd::Zero(theta.size()), 0.0, false};
  for (const auto& v : per) {
    out.loss += v.loss;
    out.grad_theta += v.grad_theta;
    out.grad_log_alpha += v.grad_log_alpha;
    out.nonsmooth = out.nonsmooth || v.nonsmooth;
  }
  const auto n = static_cast<double>(per.size());
  out.loss /= n;
  out.grad_theta /= n;
  out.grad_log_alpha /= n;
  return out;
}

double ImitationObjective::loss(const Eigen::VectorXd& theta, double log_alpha,
                                std::span<const LabelledBatch> val) const {
  if (val.size() != data_.size()) throw Error(ErrorKind::kShapeMismatch, "one labelled batch per task is required");
  double total = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    diff::Graph g;
    Var th = g.parameter(theta.size());
    const inner::InnerStep st = inner::inner_step(pol_, th, g.scalar(std::exp(log_alpha)), theta_init_.mask(),
                                                  data_[i], &init_log_probs_[i], cfg_);
    Var l = bc_loss(pol_, st.phi, val[i].states, val[i].actions);
    diff::Bindings b;
    b.set(th, theta);
    total += g.evaluate(b, {l}).scalar(l);
  }
  return total / static_cast<double>(data_.size());
}

namespace {

std::vector<std::size_t> choose_tasks(std::size_t n, int batch, const Rng& rng, int iteration) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (batch <= 0 || static_cast<std::size_t>(batch) >= n) return idx;
  Rng r = rng.derive({stream::kBatch, static_cast<std::uint64_t>(iteration), 0xB});
  std::vector<std::size_t> pick;
  std::sample(idx.begin(), idx.end(), std::back_inserter(pick), static_cast<std::size_t>(batch), r.engine());
  return pick;
}

std::int64_t episode_steps(const envs::NavFamily& family, std::int64_t episodes) {
  return episodes * (family.horizon - 1);
}

}  // namespace

MetaStepResult gmps_meta_step(const policy::Policy& pol, const envs::NavFamily& family,
                              std::span<const envs::NavTask> tasks, const MetaState& state, const MetaConfig& cfg,
                              const Rng& rng, const std::vector<inner::Batch>* collected) {
  cfg.validate();
  if (tasks.empty()) throw Error(ErrorKind::kInvalidArgument, "no meta-training tasks");
  if (collected != nullptr && collected->size() != tasks.size()) {
    throw Error(ErrorKind::kShapeMismatch, "collected rollouts must align with the tasks");
  }
  const auto it = static_cast<std::uint64_t>(state.iteration);
  const std::vector<std::size_t> chosen = choose_tasks(tasks.size(), cfg.task_batch, rng, state.iteration);
  for (std::size_t c : chosen) {
    if (state.demos.pairs(tasks[c].id) == 0) {
      throw Error(ErrorKind::kMissingData, "no demonstrations for task " + std::to_string(tasks[c].id));
    }
  }

  MetaStepResult out{state, {}};
  std::vector<inner::Batch> train(chosen.size());
  std::vector<char> fresh(chosen.size(), 0);
  parallel_for(chosen.size(), [&](std::size_t j) {
    const envs::NavTask& task = tasks[chosen[j]];
    if (collected != nullptr && !(*collected)[chosen[j]].empty()) {
      train[j] = (*collected)[chosen[j]];
      return;
    }
    Rng r = rng.derive({stream::kRollout, it, static_cast<std::uint64_t>(task.id)});
    train[j] = inner::rollout(envs::NavEnv(family, task), pol, state.theta, cfg.rollouts, r);
    fresh[j] = 1;
  });
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    if (fresh[j]) out.state.env_steps += episode_steps(family, cfg.rollouts);
  }

  IterationReport& rep = out.report;
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    const auto st = inner::summarize(envs::NavEnv(family, tasks[chosen[j]]), train[j]);
    rep.task_ids.push_back(tasks[chosen[j]].id);
    rep.task_returns.push_back(st.mean_return);
    rep.pre_update_return += st.mean_return;
    rep.pre_update_step_reward += st.mean_step_reward;
  }
  rep.pre_update_return /= static_cast<double>(chosen.size());
  rep.pre_update_step_reward /= static_cast<double>(chosen.size());

  const ImitationObjective objective(pol, state.theta, train, cfg.inner);
  Eigen::VectorXd theta = state.theta.values();
  double log_alpha = state.log_alpha;
  std::vector<LabelledBatch> val(chosen.size());
  for (int n = 0; n < cfg.n_bc; ++n) {
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const int id = tasks[chosen[j]].id;
      Rng r = rng.derive({stream::kBatch, it, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(id)});
      val[j] = sample_pairs(state.demos, id, cfg.val_batch, r);
    }
    const auto v = objective.evaluate(theta, log_alpha, val);
    Eigen::VectorXd g(theta.size() + 1);
    g << v.grad_theta, (cfg.learn_alpha ? v.grad_log_alpha : 0.0);
    clip_norm(g, cfg.grad_clip);
    theta -= cfg.beta * g.head(theta.size());
    log_alpha -= cfg.beta * g[theta.size()];
    rep.outer_loss += v.loss;
  }
  if (cfg.n_bc > 0) rep.outer_loss /= cfg.n_bc;

  out.state.theta = state.theta.with_values(theta);
  out.state.log_alpha = log_alpha;
  out.state.iteration = state.iteration + 1;
  rep.iteration = state.iteration;
  rep.env_steps = out.state.env_steps;
  rep.alpha = out.state.alpha();
  return out;
}

MetaState initial_state(const policy::GaussianMlp& pol, const MetaConfig& cfg, const Rng& rng) {
  cfg.validate();
  Rng r = rng.derive({stream::kInit});
  MetaState s;
  s.theta = pol.init(r).with_mask(pol.adaptation_mask(cfg.adapt_mode, cfg.adapt_log_std));
  s.log_alpha = std::log(cfg.alpha);
  return s;
}

std::int64_t seed_demos(experts::DemoSet& demos, const envs::NavFamily& family, std::span<const envs::NavTask> tasks,
                        std::span<const experts::Expert> experts, int episodes, double noise, const Rng& rng) {
  if (experts.size() != tasks.size()) throw Error(ErrorKind::kShapeMismatch, "one expert per task is required");
  if (episodes <= 0) return 0;
  std::vector<inner::Batch> labelled(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    Rng r = rng.derive({stream::kExpert, static_cast<std::uint64_t>(tasks[i].id)});
    labelled[i] = experts::expert_rollouts(envs::NavEnv(family, tasks[i]), experts[i], episodes, noise, r);
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) demos.append(labelled[i], tasks[i].context());
  return episode_steps(family, static_cast<std::int64_t>(episodes) * static_cast<std::int64_t>(tasks.size()));
}

MetaState gmps_train(const policy::GaussianMlp& pol, const envs::NavFamily& family,
                     std::span<const envs::NavTask> tasks, std::span<const experts::Expert> experts,
                     std::int64_t expert_steps, const MetaConfig& cfg, const Rng& rng,
                     const IterationCallback& on_iteration, const experts::DemoSet& demos) {
  cfg.validate();
  if (experts.size() != tasks.size()) throw Error(ErrorKind::kShapeMismatch, "one expert per task is required");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (experts[i].task_id() != tasks[i].id) {
      throw Error(ErrorKind::kInvalidArgument, "expert " + std::to_string(i) + " is bound to another task");
    }
  }
  MetaState state = initial_state(pol, cfg, rng);
  state.env_steps = expert_steps;
  if (!demos.empty()) {
    state.demos = demos;
  } else {
    state.env_steps += seed_demos(state.demos, family, tasks, experts, cfg.initial_demos, cfg.demo_noise, rng);
  }

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<inner::Batch> collected;
    if (cfg.aggregation) {
      // Adapt theta on fresh rollouts, run the adapted policies and have the
      // experts label what they visited. The rollouts at theta then serve as
      // this iteration's D^tr, since theta has not changed in between.
      collected.resize(tasks.size());
      std::vector<inner::Batch> visited(tasks.size());
      const auto it = static_cast<std::uint64_t>(iter);
      parallel_for(tasks.size(), [&](std::size_t i) {
        const envs::NavEnv env(family, tasks[i]);
        const auto id = static_cast<std::uint64_t>(tasks[i].id);
        Rng r0 = rng.derive({stream::kRollout, it, id});
        collected[i] = inner::rollout(env, pol, state.theta, cfg.rollouts, r0);
        const diff::ParamVector phi =
            inner::adapt(pol, state.theta, collected[i], state.alpha(), state.theta.mask(), cfg.inner);
        Rng r1 = rng.derive({stream::kAggregate, it, id});
        visited[i] = experts::relabel(experts[i], inner::rollout(env, pol, phi, cfg.agg_rollouts, r1));
      });
      for (std::size_t i = 0; i < tasks.size(); ++i) state.demos.append(visited[i], tasks[i].context());
      state.env_steps += episode_steps(
          family, static_cast<std::int64_t>(cfg.rollouts + cfg.agg_rollouts) * static_cast<std::int64_t>(tasks.size()));
    }
    MetaStepResult step = gmps_meta_step(pol, family, tasks, state, cfg, rng, cfg.aggregation ? &collected : nullptr);
    state = std::move(step.state);
    if (on_iteration) on_iteration(step.report, state);
  }
  return state;
}

}  // namespace gmpslab::meta
