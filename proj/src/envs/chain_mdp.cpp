#include "gmpslab/envs/chain_mdp.hpp"

#include "gmpslab/envs/step_counter.hpp"
#include "gmpslab/error.hpp"

#include <cmath>
#include <string>

namespace gmpslab::envs {

namespace {

void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
  if (!p.allFinite() || (p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-12) {
    throw Error(ErrorKind::kInvalidArgument, what + " is not a probability distribution");
  }
}

int draw(const Eigen::VectorXd& p, Rng& rng) {
  double u = rng.uniform();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    u -= p[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  // Rounding left a sliver of mass; give it to the last supported outcome.
  for (Eigen::Index i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return static_cast<int>(i);
  return 0;
}

}  // namespace

void ChainMdp::validate() const {
  if (n_states < 1 || n_actions < 1 || horizon < 1) throw Error(ErrorKind::kInvalidArgument, "empty MDP");
  if (static_cast<int>(transitions.size()) != n_actions) {
    throw Error(ErrorKind::kShapeMismatch, "need one transition table per action");
  }
  for (int a = 0; a < n_actions; ++a) {
    const auto& p = transitions[static_cast<std::size_t>(a)];
    if (p.rows() != n_states || p.cols() != n_states) throw Error(ErrorKind::kShapeMismatch, "transition table shape");
    for (int s = 0; s < n_states; ++s) {
      check_distribution(p.row(s).transpose(), "transition row (s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")");
    }
  }
  if (rewards.empty()) throw Error(ErrorKind::kInvalidArgument, "MDP has no tasks");
  for (const auto& r : rewards) {
    if (r.rows() != n_states || r.cols() != n_actions) throw Error(ErrorKind::kShapeMismatch, "reward table shape");
    if (!r.allFinite() || (r.array() < 0.0).any() || (r.array() > 1.0).any()) {
      throw Error(ErrorKind::kInvalidArgument, "rewards must lie in [0, 1]");
    }
  }
  if (initial.size() != n_states) throw Error(ErrorKind::kShapeMismatch, "initial distribution size");
  check_distribution(initial, "initial distribution");
}

Eigen::MatrixXd ChainMdp::stacked_transitions() const {
  Eigen::MatrixXd out(n_states * n_actions, n_states);
  for (int a = 0; a < n_actions; ++a) out.middleRows(a * n_states, n_states) = transitions[static_cast<std::size_t>(a)];
  return out;
}

TabularPolicy::TabularPolicy(Eigen::MatrixXd stationary) { probs_.push_back(std::move(stationary)); }

TabularPolicy::TabularPolicy(std::vector<Eigen::MatrixXd> per_step) : probs_(std::move(per_step)) {
  if (probs_.empty()) throw Error(ErrorKind::kInvalidArgument, "policy needs at least one table");
}

const Eigen::MatrixXd& TabularPolicy::at(int t) const {
  if (probs_.empty()) throw Error(ErrorKind::kInvalidArgument, "empty tabular policy");
  return probs_.size() == 1 ? probs_.front() : probs_.at(static_cast<std::size_t>(t));
}

void TabularPolicy::validate(int n_states, int n_actions, int horizon) const {
  if (probs_.size() != 1 && static_cast<int>(probs_.size()) != horizon) {
    throw Error(ErrorKind::kShapeMismatch, "policy has " + std::to_string(probs_.size()) + " tables for horizon " +
                                               std::to_string(horizon));
  }
  for (const auto& p : probs_) {
    if (p.rows() != n_states || p.cols() != n_actions) throw Error(ErrorKind::kShapeMismatch, "policy table shape");
    for (int s = 0; s < n_states; ++s) check_distribution(p.row(s).transpose(), "policy row " + std::to_string(s));
  }
}

ValueTables solve_exact(const ChainMdp& mdp, int task, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate(mdp.n_states, mdp.n_actions, mdp.horizon);
  const auto& r = mdp.rewards.at(static_cast<std::size_t>(task));
  const auto H = static_cast<std::size_t>(mdp.horizon);
  ValueTables vt;
  vt.V.assign(H + 1, Eigen::VectorXd::Zero(mdp.n_states));
  vt.Q.assign(H, Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions));
  for (std::size_t t = H; t-- > 0;) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      vt.Q[t].col(a) = r.col(a) + mdp.transitions[static_cast<std::size_t>(a)] * vt.V[t + 1];
    }
    vt.V[t] = (vt.Q[t].array() * policy.at(static_cast<int>(t)).array()).rowwise().sum();
  }
  return vt;
}

ValueTables solve_optimal(const ChainMdp& mdp, int task) {
  mdp.validate();
  const auto& r = mdp.rewards.at(static_cast<std::size_t>(task));
  const auto H = static_cast<std::size_t>(mdp.horizon);
  ValueTables vt;
  vt.V.assign(H + 1, Eigen::VectorXd::Zero(mdp.n_states));
  vt.Q.assign(H, Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions));
  for (std::size_t t = H; t-- > 0;) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      vt.Q[t].col(a) = r.col(a) + mdp.transitions[static_cast<std::size_t>(a)] * vt.V[t + 1];
    }
    vt.V[t] = vt.Q[t].rowwise().maxCoeff();
  }
  return vt;
}

std::vector<Eigen::VectorXd> occupancy(const ChainMdp& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate(mdp.n_states, mdp.n_actions, mdp.horizon);
  std::vector<Eigen::VectorXd> d;
  d.reserve(static_cast<std::size_t>(mdp.horizon));
  d.push_back(mdp.initial);
  for (int t = 0; t + 1 < mdp.horizon; ++t) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(mdp.n_states);
    const auto& pi = policy.at(t);
    for (int a = 0; a < mdp.n_actions; ++a) {
      next += mdp.transitions[static_cast<std::size_t>(a)].transpose() * d.back().cwiseProduct(pi.col(a));
    }
    d.push_back(std::move(next));
  }
  return d;
}

ChainEpisode sample_episode(const ChainMdp& mdp, int task, const TabularPolicy& policy, Rng& rng) {
  const auto& r = mdp.rewards.at(static_cast<std::size_t>(task));
  ChainEpisode ep;
  int s = draw(mdp.initial, rng);
  ep.states.push_back(s);
  for (int t = 0; t < mdp.horizon; ++t) {
    const int a = draw(policy.at(t).row(s).transpose(), rng);
    ep.actions.push_back(a);
    ep.rewards.push_back(r(s, a));
    s = draw(mdp.transitions[static_cast<std::size_t>(a)].row(s).transpose(), rng);
    ep.states.push_back(s);
  }
  record_steps(mdp.horizon);
  return ep;
}

ChainMdp random_chain(int n_states, int n_actions, int n_tasks, int horizon, Rng& rng) {
  if (n_states < 1 || n_actions < 1 || n_tasks < 1 || horizon < 1) {
    throw Error(ErrorKind::kInvalidArgument, "random_chain sizes must be positive");
  }
  ChainMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.horizon = horizon;
  const double slip = rng.uniform(0.0, 0.2);
  for (int a = 0; a < n_actions; ++a) {
    // 0 moves left, 1 right, anything else stays.
    const int shift = a == 0 ? -1 : (a == 1 ? 1 : 0);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      const int target = std::clamp(s + shift, 0, n_states - 1);
      p(s, target) += 1.0 - slip;
      const int lo = std::max(s - 1, 0);
      const int hi = std::min(s + 1, n_states - 1);
      for (int j = lo; j <= hi; ++j) p(s, j) += slip / (hi - lo + 1);
    }
    mdp.transitions.push_back(std::move(p));
  }
  for (int i = 0; i < n_tasks; ++i) {
    const int goal = static_cast<int>(rng.index(static_cast<std::size_t>(n_states)));
    Eigen::MatrixXd r(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a) r(s, a) = rng.uniform(0.0, 0.2) + (s == goal ? 0.8 : 0.0);
    mdp.rewards.push_back(std::move(r));
  }
  Eigen::VectorXd init(n_states);
  for (int s = 0; s < n_states; ++s) init[s] = rng.uniform(0.1, 1.0);
  mdp.initial = init / init.sum();
  // Renormalise so the rounding in the division cannot break the 1e-12 check.
  mdp.initial[n_states - 1] = 1.0 - mdp.initial.head(n_states - 1).sum();
  mdp.validate();
  return mdp;
}

}  // namespace gmpslab::envs
