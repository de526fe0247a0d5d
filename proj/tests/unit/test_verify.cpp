#include "doctest.h"

#include "gmpslab/error.hpp"
#include "gmpslab/verify/verify.hpp"

#include <cmath>
#include <functional>

using namespace gmpslab;
using namespace gmpslab::verify;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_probs(int s, int a, Rng& rng, double scale = 1.0) {
  return policy::softmax_rows(scale * rng.normal(s, a));
}

std::vector<TabularPolicy> experts_of(const ChainMdp& mdp, double temperature) {
  std::vector<TabularPolicy> out;
  for (int i = 0; i < mdp.n_tasks(); ++i) out.push_back(boltzmann_expert(mdp, i, temperature));
  return out;
}

std::vector<TabularPolicy> stationary_policies(const ChainMdp& mdp, Rng& rng) {
  std::vector<TabularPolicy> out;
  for (int i = 0; i < mdp.n_tasks(); ++i) out.emplace_back(random_probs(mdp.n_states, mdp.n_actions, rng));
  return out;
}

// Q_t(s, a) of a time-dependent policy by summing over every continuation.
double enumerate_q(const ChainMdp& mdp, int task, const TabularPolicy& pi, int t, int s, int a) {
  const MatrixXd& r = mdp.rewards[static_cast<std::size_t>(task)];
  std::function<double(int, int)> value = [&](int tt, int ss) -> double {
    if (tt == mdp.horizon) return 0.0;
    double v = 0.0;
    for (int aa = 0; aa < mdp.n_actions; ++aa) {
      const double p = pi.at(tt)(ss, aa);
      if (p == 0.0) continue;
      double cont = r(ss, aa);
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double q = mdp.transitions[static_cast<std::size_t>(aa)](ss, s2);
        if (q > 0.0) cont += q * value(tt + 1, s2);
      }
      v += p * cont;
    }
    return v;
  };
  double q = r(s, a);
  for (int s2 = 0; s2 < mdp.n_states; ++s2) q += mdp.transitions[static_cast<std::size_t>(a)](s, s2) * value(t + 1, s2);
  return q;
}

ChainMdp two_state_symmetric(int horizon) {
  ChainMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.horizon = horizon;
  m.transitions = {MatrixXd(2, 2), MatrixXd(2, 2)};
  m.transitions[0] << 1.0, 0.0, 0.0, 1.0;
  m.transitions[1] << 0.0, 1.0, 1.0, 0.0;
  m.rewards = {MatrixXd(2, 2)};
  m.rewards[0] << 0.2, 0.6, 0.6, 0.2;
  m.initial = VectorXd::Constant(2, 0.5);
  return m;
}

}  // namespace

TEST_CASE("exact_return on hand-checkable cases") {
  // Mirror-symmetric dynamics and rewards: under the uniform policy both
  // states are worth the same, 0.4 per step.
  const ChainMdp m = two_state_symmetric(5);
  const TabularPolicy uniform(MatrixXd::Constant(2, 2, 0.5));
  const auto vt = envs::solve_exact(m, 0, uniform);
  CHECK(exact_return(m, 0, uniform) == doctest::Approx(0.5 * (vt.V[0][0] + vt.V[0][1])).epsilon(1e-14));
  CHECK(exact_return(m, 0, uniform) == doctest::Approx(5 * 0.4).epsilon(1e-14));

  Rng rng(4);
  ChainMdp one = envs::random_chain(4, 3, 1, 1, rng);
  const MatrixXd p = random_probs(4, 3, rng);
  double immediate = 0.0;
  for (int s = 0; s < 4; ++s) immediate += one.initial[s] * p.row(s).dot(one.rewards[0].row(s));
  CHECK(exact_return(one, 0, TabularPolicy(p)) == doctest::Approx(immediate).epsilon(1e-14));
}

TEST_CASE("exact_return agrees with Monte Carlo") {
  Rng rng(8);
  const ChainMdp m = envs::random_chain(5, 3, 2, 7, rng);
  const TabularPolicy pi = boltzmann_expert(m, 1, 0.3);
  const int n = 100000;
  double s1 = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto ep = envs::sample_episode(m, 1, pi, rng);
    double g = 0.0;
    for (double r : ep.rewards) g += r;
    s1 += g;
    s2 += g * g;
  }
  const double mean = s1 / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(exact_return(m, 1, pi) - mean) <= 3.0 * se);
}

TEST_CASE("greedy expert dominates every other policy on its task") {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const ChainMdp m = envs::random_chain(5, 3, 2, 6, rng);
    for (int i = 0; i < 2; ++i) {
      const double best = exact_return(m, i, greedy_expert(m, i));
      CHECK(best >= exact_return(m, i, boltzmann_expert(m, i, 0.2)) - 1e-9);
      for (int k = 0; k < 20; ++k) CHECK(best >= exact_return(m, i, TabularPolicy(random_probs(5, 3, rng, 3.0))) - 1e-9);
    }
  }
}

TEST_CASE("0-1 loss <= TV <= sqrt(KL) on random pairs") {
  Rng rng(21);
  int checked = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto n = static_cast<Eigen::Index>(2 + rng.index(5));
    const VectorXd p = policy::softmax_rows(2.0 * rng.normal(1, n)).transpose();
    const VectorXd q = policy::softmax_rows(2.0 * rng.normal(1, n)).transpose();
    const Divergences d = divergences(p, q);
    CHECK(d.zero_one <= d.tv + 1e-12);
    CHECK(d.tv <= std::sqrt(d.kl) + 1e-12);
    // Pinsker's sharper form also holds.
    CHECK(d.tv <= std::sqrt(d.kl / 2.0) + 1e-12);
    ++checked;
  }
  CHECK(checked == 1000);
  const VectorXd p = (VectorXd(2) << 0.5, 0.5).finished();
  const VectorXd q = (VectorXd(2) << 1.0, 0.0).finished();
  CHECK(std::isinf(divergences(p, q).kl));
  CHECK(divergences(q, p).kl == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(divergences(p, VectorXd::Ones(3) / 3.0), Error);
}

TEST_CASE("epsilon: zero on experts, monotone in a perturbation, symmetric in task order") {
  Rng rng(31);
  const ChainMdp m = envs::random_chain(4, 3, 3, 5, rng);
  const auto experts = experts_of(m, 0.5);
  CHECK(measure_epsilon(m, experts, experts) == 0.0);

  const auto adapted = stationary_policies(m, rng);
  const auto eps = task_epsilons(m, adapted, experts);
  // Push one expert's logits further from the adapted policy at every step.
  std::vector<MatrixXd> tables;
  const int worst = static_cast<int>(std::max_element(eps.begin(), eps.end()) - eps.begin());
  for (int t = 0; t < m.horizon; ++t) {
    const MatrixXd logits = experts[static_cast<std::size_t>(worst)].at(t).array().log().matrix() -
                            0.5 * adapted[static_cast<std::size_t>(worst)].at(t).array().log().matrix();
    tables.push_back(policy::softmax_rows(logits));
  }
  auto perturbed = experts;
  perturbed[static_cast<std::size_t>(worst)] = TabularPolicy(tables);
  CHECK(task_epsilons(m, adapted, perturbed)[static_cast<std::size_t>(worst)] > eps[static_cast<std::size_t>(worst)]);
  CHECK(measure_epsilon(m, adapted, perturbed) > measure_epsilon(m, adapted, experts));

  ChainMdp swapped = m;
  std::swap(swapped.rewards[0], swapped.rewards[2]);
  std::vector<TabularPolicy> a2{adapted[2], adapted[1], adapted[0]};
  std::vector<TabularPolicy> e2{experts[2], experts[1], experts[0]};
  CHECK(measure_epsilon(swapped, a2, e2) == doctest::Approx(measure_epsilon(m, adapted, experts)).epsilon(1e-14));
}

TEST_CASE("delta: zero against itself, immediate spread at H = 1, enumeration oracle") {
  Rng rng(41);
  const ChainMdp m = envs::random_chain(3, 2, 2, 4, rng);
  const auto experts = experts_of(m, 0.4);
  CHECK(measure_delta(m, experts, experts) == 0.0);

  const ChainMdp h1 = envs::random_chain(4, 3, 1, 1, rng);
  const std::vector<TabularPolicy> e1{boltzmann_expert(h1, 0, 0.3)};
  const std::vector<TabularPolicy> a1{TabularPolicy(random_probs(4, 3, rng))};
  double spread = 0.0;
  for (int s = 0; s < 4; ++s) spread = std::max(spread, h1.rewards[0].row(s).maxCoeff() - h1.rewards[0].row(s).minCoeff());
  CHECK(measure_delta(h1, a1, e1) == doctest::Approx(spread).epsilon(1e-14));

  const auto adapted = stationary_policies(m, rng);
  double oracle = 0.0;
  for (int i = 0; i < m.n_tasks(); ++i) {
    const auto d = envs::occupancy(m, adapted[static_cast<std::size_t>(i)]);
    for (int t = 0; t < m.horizon; ++t) {
      for (int s = 0; s < m.n_states; ++s) {
        if (!(d[static_cast<std::size_t>(t)][s] > 0.0)) continue;
        double hi = -1e300, lo = 1e300;
        for (int a = 0; a < m.n_actions; ++a) {
          const double q = enumerate_q(m, i, experts[static_cast<std::size_t>(i)], t, s, a);
          hi = std::max(hi, q);
          lo = std::min(lo, q);
        }
        oracle = std::max(oracle, hi - lo);
      }
    }
  }
  CHECK(measure_delta(m, adapted, experts) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("exact return graph value and gradient") {
  Rng rng(51);
  const ChainMdp m = envs::random_chain(5, 3, 2, 6, rng);
  const policy::TabularSoftmax pol(5, 3);
  const diff::ParamVector theta = pol.from_logits(rng.normal(5, 3));
  diff::Graph g;
  diff::Var th = g.parameter(theta.size());
  diff::Var j = exact_return_graph(pol, th, m, 1);
  diff::Var dj = diff::grad(j, th);
  diff::Bindings b;
  b.set(th, theta.values());
  const auto ev = g.evaluate(b, {j, dj});
  CHECK(ev.scalar(j) == doctest::Approx(exact_return(m, 1, pol.tabular(theta))).epsilon(1e-13));
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    VectorXd p = theta.values(), q = theta.values();
    p[k] += h;
    q[k] -= h;
    const double fd = (exact_return(m, 1, pol.tabular(theta.with_values(p))) -
                       exact_return(m, 1, pol.tabular(theta.with_values(q)))) / (2 * h);
    CHECK(ev[dj](k, 0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("the exact inner step improves every task's return for a small step") {
  Rng rng(55);
  const ChainMdp m = envs::random_chain(5, 3, 4, 8, rng);
  TabularGmpsResult r;
  const policy::TabularSoftmax pol(5, 3);
  r.theta = pol.from_logits(rng.normal(5, 3));
  r.log_alpha = std::log(0.05);
  const auto adapted = adapted_policies(m, r);
  for (int i = 0; i < m.n_tasks(); ++i) {
    CHECK(exact_return(m, i, adapted[static_cast<std::size_t>(i)]) > exact_return(m, i, pol.tabular(r.theta)));
  }
}

TEST_CASE("mixture schedule") {
  const MixtureSchedule none;
  CHECK(none.at(0) == 0.0);
  CHECK(none.at(7) == 0.0);
  const MixtureSchedule s({1.0, 0.5});
  CHECK(s.at(0) == 1.0);
  CHECK(s.at(1) == 0.5);
  CHECK(s.at(2) == 0.0);
  CHECK_THROWS_AS(MixtureSchedule({0.2, 1.5}), Error);
  CHECK_THROWS_AS(MixtureSchedule({-0.1}), Error);
  CHECK_THROWS_AS(s.at(-1), Error);
}

TEST_CASE("tabular GMPS aggregation and determinism") {
  Rng rng(61);
  const ChainMdp m = envs::random_chain(4, 3, 3, 5, rng);
  const auto experts = experts_of(m, 0.3);
  TabularGmpsConfig cfg;
  cfg.iterations = 4;
  cfg.n_bc = 10;
  const TabularGmpsResult a = train_tabular_gmps(m, experts, cfg, rng);
  const TabularGmpsResult b = train_tabular_gmps(m, experts, cfg, rng);
  CHECK(a.theta.values() == b.theta.values());
  CHECK(a.log_alpha == b.log_alpha);
  REQUIRE(a.losses.size() == 4);
  CHECK(a.losses.back() < a.losses.front());
  CHECK(a.alpha() > 0.0);
  // Each aggregation adds H units of state-time mass per task.
  for (const auto& w : a.labels) CHECK(w.sum() == doctest::Approx(m.horizon * (1 + cfg.iterations)).epsilon(1e-12));

  // A schedule of ones only ever collects the expert's own distribution.
  cfg.mixture = MixtureSchedule(std::vector<double>(4, 1.0));
  const TabularGmpsResult c = train_tabular_gmps(m, experts, cfg, rng);
  TabularGmpsConfig once = cfg;
  once.iterations = 0;
  const TabularGmpsResult seed = train_tabular_gmps(m, experts, once, rng);
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    CHECK((c.labels[i] - 5.0 * seed.labels[i]).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TabularGmpsConfig bad;
  bad.beta = 0.0;
  CHECK_THROWS_AS(train_tabular_gmps(m, experts, bad, rng), Error);
  CHECK_THROWS_AS(train_tabular_gmps(m, std::vector<TabularPolicy>{experts[0]}, cfg, rng), Error);
}

TEST_CASE("bound with zero training error is an equality") {
  Rng rng(71);
  const ChainMdp m = envs::random_chain(6, 3, 4, 10, rng);
  const auto experts = experts_of(m, 0.5);
  const BoundReport rep = check_bound(m, experts, experts);
  CHECK(rep.epsilon == 0.0);
  CHECK(rep.delta == 0.0);
  CHECK(std::abs(rep.j_adapted - rep.j_expert) <= 1e-9);
  CHECK(std::abs(rep.slack) <= 1e-9);
  CHECK(rep.verdict);
}

TEST_CASE("bound holds after training on random chain families") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(100 + seed);
    const ChainMdp m = envs::random_chain(5, 3, 4, 8, rng);
    const auto experts = experts_of(m, 0.3);
    TabularGmpsConfig cfg;
    cfg.iterations = 5;
    cfg.n_bc = 10;
    const auto res = train_tabular_gmps(m, experts, cfg, rng);
    const BoundReport rep = check_bound(m, adapted_policies(m, res), experts);
    CHECK(rep.epsilon > 0.0);
    CHECK(rep.delta > 0.0);
    CHECK(rep.verdict);
    CHECK(rep.min_task_slack >= -1e-9);
    CHECK(rep.chain_violation <= 1e-12);
  }
}

TEST_CASE("bound verdict is unchanged by a uniform reward shift") {
  Rng rng(81);
  ChainMdp m = envs::random_chain(4, 2, 3, 6, rng);
  for (auto& r : m.rewards) r *= 0.8;
  const auto experts = experts_of(m, 0.4);
  const auto adapted = stationary_policies(m, rng);
  const BoundReport a = check_bound(m, adapted, experts);
  ChainMdp shifted = m;
  for (auto& r : shifted.rewards) r.array() += 0.15;
  const BoundReport b = check_bound(shifted, adapted, experts);
  CHECK(b.j_expert == doctest::Approx(a.j_expert + 0.15 * m.horizon).epsilon(1e-12));
  CHECK(b.j_adapted == doctest::Approx(a.j_adapted + 0.15 * m.horizon).epsilon(1e-12));
  CHECK(b.delta == doctest::Approx(a.delta).epsilon(1e-12));
  CHECK(b.slack == doctest::Approx(a.slack).epsilon(1e-9));
  CHECK(a.verdict == b.verdict);
}

TEST_CASE("check_bound argument errors") {
  Rng rng(91);
  const ChainMdp m = envs::random_chain(3, 2, 2, 3, rng);
  const auto experts = experts_of(m, 0.4);
  CHECK_THROWS_AS(check_bound(m, std::vector<TabularPolicy>{experts[0]}, experts), Error);
  CHECK_THROWS_AS(boltzmann_expert(m, 0, 0.0), Error);
}
