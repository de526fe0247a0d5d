#include "gmpslab/policy/tabular.hpp"

#include "gmpslab/error.hpp"

#include <cmath>
#include <string>

namespace gmpslab::policy {

using diff::Var;

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  const Eigen::MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const Eigen::MatrixXd e = shifted.array().exp();
  return e.array().colwise() / e.rowwise().sum().array();
}

double kl_on_states(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const std::vector<int>& states) {
  if (states.empty()) throw Error(ErrorKind::kInvalidArgument, "kl_on_states needs at least one state");
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw Error(ErrorKind::kShapeMismatch, "tables differ in shape");
  double total = 0.0;
  for (int s : states) total += kl_categorical(p.row(s).transpose(), q.row(s).transpose());
  return total / static_cast<double>(states.size());
}

TabularSoftmax::TabularSoftmax(Eigen::Index n_states, Eigen::Index n_actions)
    : n_states_(n_states), n_actions_(n_actions) {
  if (n_states < 1 || n_actions < 1) throw Error(ErrorKind::kInvalidArgument, "empty tabular policy");
  layout_.add("logits", n_states, n_actions);
}

Eigen::MatrixXd TabularSoftmax::logits(const diff::ParamVector& params) const {
  check_params(params);
  return params.block("logits");
}

Eigen::MatrixXd TabularSoftmax::probs(const diff::ParamVector& params) const { return softmax_rows(logits(params)); }

diff::ParamVector TabularSoftmax::from_logits(const Eigen::MatrixXd& logits) const {
  if (logits.rows() != n_states_ || logits.cols() != n_actions_) {
    throw Error(ErrorKind::kShapeMismatch, "logit table shape");
  }
  return diff::ParamVector(layout_, logits.reshaped());
}

Var TabularSoftmax::log_probs(Var theta) const { return log_softmax_rows(segment(theta, 0, n_states_, n_actions_)); }

Eigen::Index TabularSoftmax::index(double v, Eigen::Index bound, const char* what) const {
  const auto i = static_cast<Eigen::Index>(v);
  if (static_cast<double>(i) != v || i < 0 || i >= bound) {
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + " index " + std::to_string(v) + " out of range");
  }
  return i;
}

Eigen::RowVectorXd TabularSoftmax::log_prob(const diff::ParamVector& params, const Eigen::MatrixXd& obs,
                                            const Eigen::MatrixXd& actions) const {
  check_pair(obs, actions);
  const Eigen::MatrixXd lg = logits(params);
  const Eigen::MatrixXd shifted = lg.colwise() - lg.rowwise().maxCoeff();
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  Eigen::RowVectorXd out(obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    const auto s = index(obs(0, j), n_states_, "state");
    const auto a = index(actions(0, j), n_actions_, "action");
    out[j] = shifted(s, a) - lse[s];
  }
  return out;
}

Var TabularSoftmax::log_prob(Var theta, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const {
  check_pair(obs, actions);
  Eigen::MatrixXd s_hot = Eigen::MatrixXd::Zero(n_states_, obs.cols());
  Eigen::MatrixXd a_hot = Eigen::MatrixXd::Zero(n_actions_, obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    s_hot(index(obs(0, j), n_states_, "state"), j) = 1.0;
    a_hot(index(actions(0, j), n_actions_, "action"), j) = 1.0;
  }
  // (A x S)(S x N) picks each sample's state row; the action one-hot selects within it.
  Var per_state = matmul(log_probs(theta), diff::constant_like(theta, s_hot), true, false);
  return col_sum(cmul(per_state, diff::constant_like(theta, a_hot)));
}

Eigen::MatrixXd TabularSoftmax::act(const diff::ParamVector& params, const Eigen::MatrixXd& obs, Rng& rng) const {
  check_obs(obs);
  const Eigen::MatrixXd p = probs(params);
  Eigen::MatrixXd out(1, obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    const auto s = index(obs(0, j), n_states_, "state");
    double u = rng.uniform();
    Eigen::Index a = n_actions_ - 1;
    for (Eigen::Index k = 0; k < n_actions_; ++k) {
      u -= p(s, k);
      if (u < 0.0) {
        a = k;
        break;
      }
    }
    out(0, j) = static_cast<double>(a);
  }
  return out;
}

}  // namespace gmpslab::policy
