#include "gmpslab/verify/verify.hpp"

#include "gmpslab/error.hpp"
#include "gmpslab/optim.hpp"
#include "gmpslab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gmpslab::verify {

using diff::Var;

double exact_return(const ChainMdp& mdp, int task, const TabularPolicy& policy) {
  return mdp.initial.dot(envs::solve_exact(mdp, task, policy).V.front());
}

TabularPolicy boltzmann_expert(const ChainMdp& mdp, int task, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::kInvalidArgument, "expert temperature must be positive");
  mdp.validate();
  const auto& r = mdp.rewards.at(static_cast<std::size_t>(task));
  const auto H = static_cast<std::size_t>(mdp.horizon);
  std::vector<Eigen::MatrixXd> pi(H);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.n_states);
  for (std::size_t t = H; t-- > 0;) {
    Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a) q.col(a) = r.col(a) + mdp.transitions[static_cast<std::size_t>(a)] * v;
    pi[t] = policy::softmax_rows(q / temperature);
    v = (pi[t].array() * q.array()).rowwise().sum();
  }
  return TabularPolicy(std::move(pi));
}

TabularPolicy greedy_expert(const ChainMdp& mdp, int task) {
  const envs::ValueTables vt = envs::solve_optimal(mdp, task);
  std::vector<Eigen::MatrixXd> pi;
  for (const auto& q : vt.Q) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
      Eigen::Index best = 0;
      q.row(s).maxCoeff(&best);
      p(s, best) = 1.0;
    }
    pi.push_back(std::move(p));
  }
  return TabularPolicy(std::move(pi));
}

Divergences divergences(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0) throw Error(ErrorKind::kShapeMismatch, "distributions differ in length");
  Divergences d;
  d.zero_one = 1.0 - p.cwiseMin(q).sum();
  d.tv = 0.5 * (p - q).cwiseAbs().sum();
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) return {d.zero_one, d.tv, std::numeric_limits<double>::infinity()};
    d.kl += p[k] * std::log(p[k] / q[k]);
  }
  d.kl = std::max(d.kl, 0.0);
  return d;
}

namespace {

void check_pairs(const ChainMdp& mdp, std::span<const TabularPolicy> adapted, std::span<const TabularPolicy> experts) {
  mdp.validate();
  if (adapted.size() != experts.size() || static_cast<int>(adapted.size()) != mdp.n_tasks()) {
    throw Error(ErrorKind::kShapeMismatch, "need one adapted policy and one expert per task");
  }
  for (std::size_t i = 0; i < adapted.size(); ++i) {
    adapted[i].validate(mdp.n_states, mdp.n_actions, mdp.horizon);
    experts[i].validate(mdp.n_states, mdp.n_actions, mdp.horizon);
  }
}

// delta * H * sqrt(eps), taken as zero when delta is, so that an infinite
// epsilon on a task without any cost spread does not produce NaN.
double bound_term(double delta, int horizon, double eps) {
  return delta == 0.0 ? 0.0 : delta * horizon * std::sqrt(eps);
}

Eigen::VectorXd row(const TabularPolicy& p, int t, int s) { return p.at(t).row(s).transpose(); }

double task_epsilon(const ChainMdp& mdp, const TabularPolicy& adapted, const TabularPolicy& expert) {
  const auto d = envs::occupancy(mdp, adapted);
  double total = 0.0;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int s = 0; s < mdp.n_states; ++s) {
      if (d[static_cast<std::size_t>(t)][s] > 0.0) {
        total += d[static_cast<std::size_t>(t)][s] * divergences(row(adapted, t, s), row(expert, t, s)).kl;
      }
    }
  }
  return total / mdp.horizon;
}

}  // namespace

std::vector<double> task_epsilons(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                                  std::span<const TabularPolicy> experts) {
  check_pairs(mdp, adapted, experts);
  std::vector<double> out(adapted.size());
  for (std::size_t i = 0; i < adapted.size(); ++i) out[i] = task_epsilon(mdp, adapted[i], experts[i]);
  return out;
}

double measure_epsilon(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                       std::span<const TabularPolicy> experts) {
  const auto e = task_epsilons(mdp, adapted, experts);
  return *std::max_element(e.begin(), e.end());
}

double measure_delta(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                     std::span<const TabularPolicy> experts) {
  check_pairs(mdp, adapted, experts);
  double delta = 0.0;
  for (std::size_t i = 0; i < adapted.size(); ++i) {
    const auto q = envs::solve_exact(mdp, static_cast<int>(i), experts[i]).Q;
    const auto d = envs::occupancy(mdp, adapted[i]);
    for (int t = 0; t < mdp.horizon; ++t) {
      const auto& qt = q[static_cast<std::size_t>(t)];
      for (int s = 0; s < mdp.n_states; ++s) {
        if (!(d[static_cast<std::size_t>(t)][s] > 0.0)) continue;
        if (adapted[i].at(t).row(s) == experts[i].at(t).row(s)) continue;
        delta = std::max(delta, qt.row(s).maxCoeff() - qt.row(s).minCoeff());
      }
    }
  }
  return delta;
}

BoundReport check_bound(const ChainMdp& mdp, std::span<const TabularPolicy> adapted,
                        std::span<const TabularPolicy> experts) {
  BoundReport rep;
  rep.task_epsilon = task_epsilons(mdp, adapted, experts);
  rep.epsilon = *std::max_element(rep.task_epsilon.begin(), rep.task_epsilon.end());
  rep.delta = measure_delta(mdp, adapted, experts);
  rep.horizon = mdp.horizon;
  const auto n = adapted.size();
  rep.min_task_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const int task = static_cast<int>(i);
    rep.task_j_expert.push_back(exact_return(mdp, task, experts[i]));
    rep.task_j_adapted.push_back(exact_return(mdp, task, adapted[i]));
    rep.j_expert += rep.task_j_expert.back() / static_cast<double>(n);
    rep.j_adapted += rep.task_j_adapted.back() / static_cast<double>(n);
    const double own = rep.task_j_adapted.back() -
                       (rep.task_j_expert.back() - bound_term(rep.delta, mdp.horizon, rep.task_epsilon[i]));
    rep.min_task_slack = std::min(rep.min_task_slack, own);
    for (int t = 0; t < mdp.horizon; ++t) {
      for (int s = 0; s < mdp.n_states; ++s) {
        const Divergences dv = divergences(row(adapted[i], t, s), row(experts[i], t, s));
        rep.chain_violation = std::max({rep.chain_violation, dv.zero_one - dv.tv, dv.tv - std::sqrt(dv.kl)});
      }
    }
  }
  rep.slack = rep.j_adapted - (rep.j_expert - bound_term(rep.delta, mdp.horizon, rep.epsilon));
  rep.verdict = rep.slack >= -1e-9;
  return rep;
}

MixtureSchedule::MixtureSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  for (std::size_t j = 0; j < betas_.size(); ++j) {
    if (!(betas_[j] >= 0.0 && betas_[j] <= 1.0)) {
      throw Error(ErrorKind::kConfig, "mixture beta at iteration " + std::to_string(j) + " must lie in [0, 1]");
    }
  }
}

double MixtureSchedule::at(int j) const {
  if (j < 0) throw Error(ErrorKind::kInvalidArgument, "negative iteration");
  return static_cast<std::size_t>(j) < betas_.size() ? betas_[static_cast<std::size_t>(j)] : 0.0;
}

void TabularGmpsConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::kConfig, what);
  };
  need(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive");
  need(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  need(grad_clip > 0.0, "grad_clip must be positive");
  need(iterations >= 0, "iterations must be non-negative");
  need(n_bc >= 0, "n_bc must be non-negative");
  need(init_scale >= 0.0, "init_scale must be non-negative");
}

double TabularGmpsResult::alpha() const { return std::exp(log_alpha); }

Var exact_return_graph(const policy::TabularSoftmax& pol, Var theta, const ChainMdp& mdp, int task) {
  const auto S = mdp.n_states;
  const auto A = mdp.n_actions;
  if (pol.n_states() != S || pol.n_actions() != A) throw Error(ErrorKind::kShapeMismatch, "policy does not fit the MDP");
  Var pi = exp(pol.log_probs(theta));
  Var r = diff::constant_like(theta, mdp.rewards.at(static_cast<std::size_t>(task)));
  Var d = diff::constant_like(theta, mdp.initial);
  Var total;
  for (int t = 0; t < mdp.horizon; ++t) {
    // m(s, a) = d_t(s) pi(a | s).
    Var m = cmul(broadcast(d, S, A), pi);
    Var step = sum(cmul(m, r));
    total = t == 0 ? step : total + step;
    if (t + 1 == mdp.horizon) break;
    Var next;
    for (int a = 0; a < A; ++a) {
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(A, 1);
      e(a, 0) = 1.0;
      Var flow = matmul(diff::constant_like(theta, mdp.transitions[static_cast<std::size_t>(a)]),
                        matmul(m, diff::constant_like(theta, e)), true, false);
      next = a == 0 ? flow : next + flow;
    }
    d = next;
  }
  return total;
}

Var exact_inner_step(const policy::TabularSoftmax& pol, Var theta, Var alpha, const ChainMdp& mdp, int task) {
  Var j = exact_return_graph(pol, theta, mdp, task);
  return theta + cmul(alpha, diff::grad(j, theta));
}

namespace {

// Expert labels on the states the mixture of expert and adapted policy visits.
LabelTable label_table(const ChainMdp& mdp, const TabularPolicy& expert, const Eigen::MatrixXd& adapted, double beta) {
  std::vector<Eigen::MatrixXd> mix;
  for (int t = 0; t < mdp.horizon; ++t) mix.push_back(beta * expert.at(t) + (1.0 - beta) * adapted);
  const auto d = envs::occupancy(mdp, TabularPolicy(std::move(mix)));
  LabelTable w = LabelTable::Zero(mdp.n_states, mdp.n_actions);
  for (int t = 0; t < mdp.horizon; ++t) {
    w += d[static_cast<std::size_t>(t)].asDiagonal() * expert.at(t);
  }
  return w;
}

struct ObjectiveGraph {
  diff::Graph g;
  Var theta;
  Var log_alpha;
  Var loss;
  Var grad_theta;
  Var grad_log_alpha;
};

void build_objective(ObjectiveGraph& og, const policy::TabularSoftmax& pol, const ChainMdp& mdp,
                     const std::vector<LabelTable>& labels) {
  og.theta = og.g.parameter(pol.layout().size());
  og.log_alpha = og.g.parameter(1);
  Var alpha = exp(og.log_alpha);
  Var total;
  for (int i = 0; i < mdp.n_tasks(); ++i) {
    Var phi = exact_inner_step(pol, og.theta, alpha, mdp, i);
    const LabelTable& w = labels[static_cast<std::size_t>(i)];
    Var li = -sum(cmul(diff::constant_like(og.theta, w / w.sum()), pol.log_probs(phi)));
    total = i == 0 ? li : total + li;
  }
  og.loss = total * (1.0 / mdp.n_tasks());
  const auto grads = og.g.grad(og.loss, {og.theta, og.log_alpha});
  og.grad_theta = grads[0];
  og.grad_log_alpha = grads[1];
}

Eigen::MatrixXd adapted_probs(const policy::TabularSoftmax& pol, const ChainMdp& mdp, const diff::ParamVector& theta,
                              double alpha, int task) {
  diff::Graph g;
  Var th = g.parameter(theta.size());
  Var phi = exact_inner_step(pol, th, g.scalar(alpha), mdp, task);
  diff::Bindings b;
  b.set(th, theta.values());
  return pol.probs(theta.with_values(g.evaluate(b, {phi})[phi].col(0)));
}

}  // namespace

TabularGmpsResult train_tabular_gmps(const ChainMdp& mdp, std::span<const TabularPolicy> experts,
                                     const TabularGmpsConfig& cfg, const Rng& rng) {
  cfg.validate();
  mdp.validate();
  if (static_cast<int>(experts.size()) != mdp.n_tasks()) throw Error(ErrorKind::kShapeMismatch, "one expert per task");
  const policy::TabularSoftmax pol(mdp.n_states, mdp.n_actions);
  Rng init = rng.derive({stream::kInit});
  TabularGmpsResult out;
  out.theta = pol.from_logits(cfg.init_scale * init.normal(mdp.n_states, mdp.n_actions));
  out.log_alpha = std::log(cfg.alpha);

  // Demonstrations: the expert's own state distribution.
  for (int i = 0; i < mdp.n_tasks(); ++i) {
    out.labels.push_back(label_table(mdp, experts[static_cast<std::size_t>(i)],
                                     experts[static_cast<std::size_t>(i)].at(0), 1.0));
  }
  for (int j = 0; j < cfg.iterations; ++j) {
    const double beta_j = cfg.mixture.at(j);
    std::vector<LabelTable> fresh(static_cast<std::size_t>(mdp.n_tasks()));
    parallel_for(fresh.size(), [&](std::size_t i) {
      const Eigen::MatrixXd phi = adapted_probs(pol, mdp, out.theta, out.alpha(), static_cast<int>(i));
      fresh[i] = label_table(mdp, experts[i], phi, beta_j);
    });
    for (std::size_t i = 0; i < fresh.size(); ++i) out.labels[i] += fresh[i];

    ObjectiveGraph og;
    build_objective(og, pol, mdp, out.labels);
    Eigen::VectorXd theta = out.theta.values();
    double la = out.log_alpha;
    double loss_sum = 0.0;
    for (int n = 0; n < cfg.n_bc; ++n) {
      diff::Bindings b;
      b.set(og.theta, theta).set(og.log_alpha, Eigen::MatrixXd::Constant(1, 1, la));
      const diff::Evaluation ev = og.g.evaluate(b, {og.loss, og.grad_theta, og.grad_log_alpha});
      Eigen::VectorXd g(theta.size() + 1);
      g << ev[og.grad_theta].col(0), (cfg.learn_alpha ? ev.scalar(og.grad_log_alpha) : 0.0);
      clip_norm(g, cfg.grad_clip);
      theta -= cfg.beta * g.head(theta.size());
      la -= cfg.beta * g[theta.size()];
      loss_sum += ev.scalar(og.loss);
    }
    out.theta = out.theta.with_values(theta);
    out.log_alpha = la;
    out.losses.push_back(cfg.n_bc > 0 ? loss_sum / cfg.n_bc : 0.0);
  }
  return out;
}

std::vector<TabularPolicy> adapted_policies(const ChainMdp& mdp, const TabularGmpsResult& result) {
  const policy::TabularSoftmax pol(mdp.n_states, mdp.n_actions);
  std::vector<TabularPolicy> out;
  for (int i = 0; i < mdp.n_tasks(); ++i) {
    out.emplace_back(adapted_probs(pol, mdp, result.theta, result.alpha(), i));
  }
  return out;
}

}  // namespace gmpslab::verify
