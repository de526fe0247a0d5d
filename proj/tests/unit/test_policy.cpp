#include "doctest.h"

#include "gmpslab/diff/derivatives.hpp"
#include "gmpslab/error.hpp"
#include "gmpslab/policy/gaussian_mlp.hpp"
#include "gmpslab/policy/tabular.hpp"

#include <cmath>
#include <limits>
#include <numbers>

using namespace gmpslab;
using namespace gmpslab::policy;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MlpSpec small_spec() {
  MlpSpec s;
  s.obs_dim = 2;
  s.act_dim = 2;
  s.hidden = {5, 4};
  s.bias_transform_dim = 2;
  return s;
}

diff::ParamVector randomised(const GaussianMlp& pol, Rng& rng) {
  diff::ParamVector p = pol.init(rng);
  return p.with_values(p.values() + 0.3 * rng.normal(p.size(), 1).col(0));
}

// Product of univariate normal densities, written out directly.
double density_oracle(const VectorXd& mu, const VectorXd& log_std, const VectorXd& a) {
  double p = 1.0;
  for (Eigen::Index d = 0; d < mu.size(); ++d) {
    const double s = std::exp(log_std[d]);
    p *= std::exp(-(a[d] - mu[d]) * (a[d] - mu[d]) / (2 * s * s)) / (s * std::sqrt(2 * std::numbers::pi));
  }
  return std::log(p);
}

// Forward pass written independently of the policy class.
MatrixXd mean_oracle(const diff::ParamVector& p, const MatrixXd& obs) {
  const MatrixXd w0 = p.block("w0");
  MatrixXd in(4, obs.cols());
  in.topRows(2) = obs;
  in.bottomRows(2) = VectorXd(p.block("bias_transform")).replicate(1, obs.cols());
  MatrixXd h = (w0 * in).colwise() + VectorXd(p.block("b0"));
  h = h.array().tanh();
  h = ((MatrixXd(p.block("w1")) * h).colwise() + VectorXd(p.block("b1"))).array().tanh();
  return (MatrixXd(p.block("w_out")) * h).colwise() + VectorXd(p.block("b_out"));
}

}  // namespace

TEST_CASE("Gaussian MLP mean and density match independent formulas") {
  GaussianMlp pol(small_spec());
  Rng rng(1);
  const auto p = randomised(pol, rng);
  const MatrixXd obs = rng.normal(2, 9);
  const MatrixXd act = rng.normal(2, 9);
  const MatrixXd mu = pol.mean(p, obs);
  CHECK((mu - mean_oracle(p, obs)).lpNorm<Eigen::Infinity>() <= 1e-12);
  const Eigen::RowVectorXd lp = pol.log_prob(p, obs, act);
  for (int j = 0; j < 9; ++j) {
    CHECK(std::abs(lp[j] - density_oracle(mu.col(j), pol.log_std(p), act.col(j))) <= 1e-12);
  }
  // Graph route agrees with the plain route.
  diff::Graph g;
  diff::Var th = g.parameter(p.size());
  g.set_output(sum(pol.log_prob(th, obs, act)));
  CHECK(diff::evaluate(g, p)(0, 0) == doctest::Approx(lp.sum()).epsilon(1e-12));
}

TEST_CASE("density special cases") {
  GaussianMlp pol(small_spec());
  Rng rng(2);
  const auto p = randomised(pol, rng);
  const MatrixXd obs = rng.normal(2, 3);
  const MatrixXd mu = pol.mean(p, obs);
  const VectorXd ls = pol.log_std(p);
  const double mode = -(ls.array() + 0.5 * std::log(2 * std::numbers::pi)).sum();
  const Eigen::RowVectorXd at_mode = pol.log_prob(p, obs, mu);
  for (int j = 0; j < 3; ++j) CHECK(at_mode[j] == doctest::Approx(mode).epsilon(1e-13));

  const MatrixXd a = rng.normal(2, 3);
  const VectorXd v = rng.normal(2, 1).col(0);
  const Eigen::RowVectorXd base = gaussian_log_density(mu, ls, a);
  const Eigen::RowVectorXd moved = gaussian_log_density(mu.colwise() + v, ls, a.colwise() + v);
  CHECK((base - moved).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("density integrates to one") {
  const VectorXd mu = VectorXd::Constant(1, 0.4);
  const VectorXd ls = VectorXd::Constant(1, std::log(0.7));
  const int n = 20001;
  const double lo = -8.0, hi = 8.0, h = (hi - lo) / (n - 1);
  MatrixXd grid(1, n);
  for (int i = 0; i < n; ++i) grid(0, i) = lo + i * h;
  const Eigen::RowVectorXd lp = gaussian_log_density(mu.replicate(1, n), ls, grid);
  const double mass = lp.array().exp().sum() * h;
  CHECK(std::abs(mass - 1.0) <= 1e-3);
}

TEST_CASE("sampling") {
  GaussianMlp pol(small_spec());
  Rng rng(3);
  auto p = randomised(pol, rng);
  const MatrixXd obs = rng.normal(2, 1);
  Rng a(10), b(10);
  CHECK(pol.act(p, obs, a) == pol.act(p, obs, b));

  const int n = 100000;
  const MatrixXd many = pol.act(p, obs.replicate(1, n), rng);
  const VectorXd mu = pol.mean(p, obs).col(0);
  const VectorXd sd = pol.log_std(p).array().exp();
  const VectorXd emp = many.rowwise().mean();
  for (int d = 0; d < 2; ++d) CHECK(std::abs(emp[d] - mu[d]) <= 4 * sd[d] / std::sqrt(double(n)));

  // Degenerate Gaussian collapses onto the mean.
  VectorXd v = p.values();
  const auto& blk = pol.layout().find("log_std");
  v.segment(blk.offset, blk.size()).setConstant(-std::numeric_limits<double>::infinity());
  const auto det = p.with_values(v);
  CHECK(pol.act(det, obs, rng) == pol.mean(det, obs));

  CHECK_THROWS_AS(pol.act(p, MatrixXd::Zero(3, 1), rng), Error);
}

TEST_CASE("Gaussian KL") {
  VectorXd z = VectorXd::Zero(1), one = VectorXd::Ones(1);
  CHECK(kl_diag_gaussian(z, z, one, z) == doctest::Approx(0.5));
  CHECK(kl_diag_gaussian(one, z, one, z) == 0.0);
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const VectorXd m1 = rng.normal(3, 1), m2 = rng.normal(3, 1), l1 = rng.normal(3, 1), l2 = rng.normal(3, 1);
    REQUIRE(kl_diag_gaussian(m1, l1, m2, l2) >= 0.0);
  }
  GaussianMlp pol(small_spec());
  const auto p = randomised(pol, rng);
  const MatrixXd states = rng.normal(2, 5);
  CHECK(kl_on_states(pol, p, pol, p, states) == 0.0);
  CHECK_THROWS_AS(kl_on_states(pol, p, pol, p, MatrixXd(2, 0)), Error);
}

TEST_CASE("graph log-prob gradient agrees with finite differences") {
  GaussianMlp pol(small_spec());
  Rng rng(5);
  const auto p = randomised(pol, rng);
  const MatrixXd obs = rng.normal(2, 6);
  const MatrixXd act = rng.normal(2, 6);
  diff::Graph g;
  diff::Var th = g.parameter(p.size());
  g.set_output(sum(pol.log_prob(th, obs, act)));
  const VectorXd an = diff::gradient(g, p);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    VectorXd up = p.values(), dn = p.values();
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    const double fd = (pol.log_prob(p.with_values(up), obs, act).sum() - pol.log_prob(p.with_values(dn), obs, act).sum()) / 2e-6;
    CHECK(an[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("relu network and adaptation masks") {
  MlpSpec s = small_spec();
  s.nonlinearity = Nonlinearity::kRelu;
  s.bias_transform_dim = 0;
  GaussianMlp pol(s);
  CHECK_FALSE(pol.layout().contains("bias_transform"));
  Rng rng(6);
  const auto p = pol.init(rng);
  CHECK(pol.mean(p, rng.normal(2, 3)).allFinite());

  GaussianMlp bt(small_spec());
  const auto all = bt.adaptation_mask(AdaptMode::kAll, true);
  CHECK(all.all());
  const auto fc = bt.adaptation_mask(AdaptMode::kFcOnly, false);
  const auto& w0 = bt.layout().find("w0");
  const auto& ls = bt.layout().find("log_std");
  CHECK_FALSE(fc.segment(w0.offset, w0.size()).any());
  CHECK_FALSE(fc.segment(ls.offset, ls.size()).any());
  CHECK(fc.segment(bt.layout().find("w1").offset, 4).all());
  CHECK(fc.segment(bt.layout().find("bias_transform").offset, 2).all());
}

TEST_CASE("contextual policy appends the context") {
  MlpSpec s = small_spec();
  s.obs_dim = 4;
  GaussianMlp base(s);
  Rng rng(7);
  const auto p = randomised(base, rng);
  VectorXd ctx(2);
  ctx << 1.5, -0.5;
  ContextualPolicy cp(base, ctx);
  CHECK(cp.obs_dim() == 2);
  const MatrixXd obs = rng.normal(2, 4);
  MatrixXd full(4, 4);
  full << obs, ctx.replicate(1, 4);
  CHECK(cp.mean(p, obs) == base.mean(p, full));
  CHECK_THROWS_AS(cp.with_context(VectorXd::Zero(3)), Error);
}

TEST_CASE("tabular softmax") {
  TabularSoftmax pol(3, 4);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const MatrixXd logits = 30.0 * rng.normal(3, 4);
    const MatrixXd pr = pol.probs(pol.from_logits(logits));
    REQUIRE((pr.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    MatrixXd shifted = logits;
    shifted.row(1).array() += 17.0;
    const MatrixXd ps = pol.probs(pol.from_logits(shifted));
    Eigen::Index a1, a2;
    pr.row(1).maxCoeff(&a1);
    ps.row(1).maxCoeff(&a2);
    REQUIRE(a1 == a2);
    REQUIRE((pr - ps).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  const auto p = pol.from_logits(rng.normal(3, 4));
  MatrixXd obs(1, 5), act(1, 5);
  obs << 0, 1, 2, 2, 1;
  act << 3, 0, 1, 2, 2;
  const Eigen::RowVectorXd lp = pol.log_prob(p, obs, act);
  const MatrixXd pr = pol.probs(p);
  for (int j = 0; j < 5; ++j) CHECK(lp[j] == doctest::Approx(std::log(pr(int(obs(0, j)), int(act(0, j))))).epsilon(1e-12));
  diff::Graph g;
  diff::Var th = g.parameter(p.size());
  g.set_output(sum(pol.log_prob(th, obs, act)));
  CHECK(diff::evaluate(g, p)(0, 0) == doctest::Approx(lp.sum()).epsilon(1e-12));

  // Empirical action frequencies.
  const int n = 40000;
  const MatrixXd samples = pol.act(p, MatrixXd::Ones(1, n), rng);
  for (int a = 0; a < 4; ++a) {
    const double freq = (samples.array() == a).cast<double>().sum() / n;
    CHECK(std::abs(freq - pr(1, a)) <= 4 * std::sqrt(pr(1, a) * (1 - pr(1, a)) / n));
  }
  MatrixXd bad(1, 1);
  bad << 3;
  CHECK_THROWS_AS(pol.log_prob(p, bad, MatrixXd::Zero(1, 1)), Error);

  CHECK(kl_on_states(pr, pr, {0, 1, 2}) == 0.0);
  CHECK_THROWS_AS(kl_on_states(pr, pr, {}), Error);
}
