#include "gmpslab/policy/gaussian_mlp.hpp"

#include "gmpslab/error.hpp"

#include <cmath>
#include <string>

namespace gmpslab::policy {

using diff::Var;

namespace {

std::string layer(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

Eigen::MatrixXd activate(const Eigen::MatrixXd& x, Nonlinearity nl) {
  return nl == Nonlinearity::kTanh ? Eigen::MatrixXd(x.array().tanh()) : Eigen::MatrixXd(x.array().max(0.0));
}

Var activate(Var x, Nonlinearity nl) { return nl == Nonlinearity::kTanh ? tanh(x) : relu(x); }

}  // namespace

void MlpSpec::validate() const {
  if (obs_dim < 1 || act_dim < 1) throw Error(ErrorKind::kConfig, "observation and action dimensions must be positive");
  if (hidden.empty()) throw Error(ErrorKind::kConfig, "need at least one hidden layer");
  for (auto h : hidden)
    if (h < 1) throw Error(ErrorKind::kConfig, "hidden layer sizes must be positive");
  if (bias_transform_dim < 0) throw Error(ErrorKind::kConfig, "bias_transform_dim must be non-negative");
  if (!std::isfinite(init_log_std)) throw Error(ErrorKind::kConfig, "init_log_std must be finite");
}

GaussianMlp::GaussianMlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.bias_transform_dim > 0) layout_.add("bias_transform", spec_.bias_transform_dim, 1);
  Eigen::Index in = spec_.obs_dim + spec_.bias_transform_dim;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    layout_.add(layer("w", i), spec_.hidden[i], in);
    layout_.add(layer("b", i), spec_.hidden[i], 1);
    in = spec_.hidden[i];
  }
  layout_.add("w_out", spec_.act_dim, in);
  layout_.add("b_out", spec_.act_dim, 1);
  layout_.add("log_std", spec_.act_dim, 1);
}

diff::ParamVector GaussianMlp::init(Rng& rng) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout_.size());
  for (const auto& b : layout_.blocks()) {
    const bool weight = b.name.front() == 'w';
    if (weight) {
      // Glorot-scaled normal; the output layer starts small so initial
      // actions are close to zero-mean noise.
      double sd = std::sqrt(2.0 / static_cast<double>(b.rows + b.cols));
      if (b.name == "w_out") sd *= 0.1;
      v.segment(b.offset, b.size()) = sd * rng.normal(b.size(), 1).col(0);
    } else if (b.name == "log_std") {
      v.segment(b.offset, b.size()).setConstant(spec_.init_log_std);
    }
  }
  return diff::ParamVector(layout_, std::move(v));
}

diff::Mask GaussianMlp::adaptation_mask(AdaptMode mode, bool adapt_log_std) const {
  diff::Mask m = diff::Mask::Constant(layout_.size(), true);
  auto freeze = [&](const std::string& name) {
    const auto& b = layout_.find(name);
    m.segment(b.offset, b.size()).setConstant(false);
  };
  if (mode == AdaptMode::kFcOnly) {
    freeze("w0");
    freeze("b0");
  }
  if (!adapt_log_std) freeze("log_std");
  return m;
}

Eigen::MatrixXd GaussianMlp::mean(const diff::ParamVector& params, const Eigen::MatrixXd& obs) const {
  check_params(params);
  check_obs(obs);
  const auto w0 = params.block("w0");
  Eigen::VectorXd shift = params.block("b0");
  if (spec_.bias_transform_dim > 0) shift += w0.rightCols(spec_.bias_transform_dim) * params.block("bias_transform");
  Eigen::MatrixXd h = activate((w0.leftCols(spec_.obs_dim) * obs).colwise() + shift, spec_.nonlinearity);
  for (std::size_t i = 1; i < spec_.hidden.size(); ++i) {
    h = activate((params.block(layer("w", i)) * h).colwise() + Eigen::VectorXd(params.block(layer("b", i))),
                 spec_.nonlinearity);
  }
  return (params.block("w_out") * h).colwise() + Eigen::VectorXd(params.block("b_out"));
}

Eigen::VectorXd GaussianMlp::log_std(const diff::ParamVector& params) const {
  check_params(params);
  return params.block("log_std");
}

Var GaussianMlp::mean(Var theta, const Eigen::MatrixXd& obs) const {
  check_obs(obs);
  auto blk = [&](const std::string& name) {
    const auto& b = layout_.find(name);
    return segment(theta, b.offset, b.rows, b.cols);
  };
  const auto& w0 = layout_.find("w0");
  Var shift = blk("b0");
  if (spec_.bias_transform_dim > 0) {
    Var wz = segment(theta, w0.offset + w0.rows * spec_.obs_dim, w0.rows, spec_.bias_transform_dim);
    shift = matmul(wz, blk("bias_transform")) + shift;
  }
  Var wx = segment(theta, w0.offset, w0.rows, spec_.obs_dim);
  Var h = activate(matmul(wx, diff::constant_like(theta, obs)) + shift, spec_.nonlinearity);
  for (std::size_t i = 1; i < spec_.hidden.size(); ++i) {
    h = activate(matmul(blk(layer("w", i)), h) + blk(layer("b", i)), spec_.nonlinearity);
  }
  return matmul(blk("w_out"), h) + blk("b_out");
}

Var GaussianMlp::log_std(Var theta) const {
  const auto& b = layout_.find("log_std");
  return segment(theta, b.offset, b.rows, 1);
}

ContextualPolicy::ContextualPolicy(GaussianMlp base, Eigen::VectorXd context)
    : base_(std::move(base)), context_(std::move(context)) {
  if (context_.size() >= base_.obs_dim()) {
    throw Error(ErrorKind::kShapeMismatch, "context leaves no room for the observation");
  }
}

ContextualPolicy ContextualPolicy::with_context(Eigen::VectorXd context) const {
  if (context.size() != context_.size()) throw Error(ErrorKind::kShapeMismatch, "context dimension changed");
  return ContextualPolicy(base_, std::move(context));
}

Eigen::MatrixXd ContextualPolicy::augment(const Eigen::MatrixXd& obs) const {
  check_obs(obs);
  Eigen::MatrixXd full(base_.obs_dim(), obs.cols());
  full.topRows(obs.rows()) = obs;
  full.bottomRows(context_.size()) = context_.replicate(1, obs.cols());
  return full;
}

Eigen::MatrixXd ContextualPolicy::mean(const diff::ParamVector& params, const Eigen::MatrixXd& obs) const {
  return base_.mean(params, augment(obs));
}

Eigen::VectorXd ContextualPolicy::log_std(const diff::ParamVector& params) const { return base_.log_std(params); }

Var ContextualPolicy::mean(Var theta, const Eigen::MatrixXd& obs) const { return base_.mean(theta, augment(obs)); }

Var ContextualPolicy::log_std(Var theta) const { return base_.log_std(theta); }

}  // namespace gmpslab::policy
