#pragma once

#include "gmpslab/policy/policy.hpp"

#include <vector>

namespace gmpslab::policy {

enum class Nonlinearity { kTanh, kRelu };

enum class AdaptMode {
  kAll,
  /// First hidden layer frozen in the inner loop; the bias transform still adapts.
  kFcOnly,
};

struct MlpSpec {
  Eigen::Index obs_dim = 2;
  Eigen::Index act_dim = 2;
  std::vector<Eigen::Index> hidden{32, 32};
  Nonlinearity nonlinearity = Nonlinearity::kTanh;
  /// Length of the learned vector concatenated to the observation; 0 disables it.
  Eigen::Index bias_transform_dim = 2;
  double init_log_std = 0.0;

  void validate() const;
};

/// Gaussian policy whose mean is an MLP of [observation; bias transform].
/// Parameter blocks: bias_transform, w0, b0, ..., w_out, b_out, log_std.
class GaussianMlp : public GaussianPolicy {
 public:
  explicit GaussianMlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  const diff::Layout& layout() const override { return layout_; }
  Eigen::Index obs_dim() const override { return spec_.obs_dim; }
  Eigen::Index act_dim() const override { return spec_.act_dim; }

  /// Random weights, zero biases and bias transform, log-std at its initial value.
  diff::ParamVector init(Rng& rng) const;
  /// Which entries the inner loop may change.
  diff::Mask adaptation_mask(AdaptMode mode, bool adapt_log_std) const;

  Eigen::MatrixXd mean(const diff::ParamVector& params, const Eigen::MatrixXd& obs) const override;
  Eigen::VectorXd log_std(const diff::ParamVector& params) const override;
  diff::Var mean(diff::Var theta, const Eigen::MatrixXd& obs) const override;
  diff::Var log_std(diff::Var theta) const override;

 private:
  MlpSpec spec_;
  diff::Layout layout_;
};

/// An MLP policy conditioned on a fixed task context appended to every
/// observation. Used for experts only; meta-learned policies never see it.
class ContextualPolicy : public GaussianPolicy {
 public:
  /// `base` must take obs_dim + context.size() inputs.
  ContextualPolicy(GaussianMlp base, Eigen::VectorXd context);

  const GaussianMlp& base() const { return base_; }
  const Eigen::VectorXd& context() const { return context_; }
  ContextualPolicy with_context(Eigen::VectorXd context) const;

  const diff::Layout& layout() const override { return base_.layout(); }
  Eigen::Index obs_dim() const override { return base_.obs_dim() - context_.size(); }
  Eigen::Index act_dim() const override { return base_.act_dim(); }

  Eigen::MatrixXd mean(const diff::ParamVector& params, const Eigen::MatrixXd& obs) const override;
  Eigen::VectorXd log_std(const diff::ParamVector& params) const override;
  diff::Var mean(diff::Var theta, const Eigen::MatrixXd& obs) const override;
  diff::Var log_std(diff::Var theta) const override;

 private:
  Eigen::MatrixXd augment(const Eigen::MatrixXd& obs) const;

  GaussianMlp base_;
  Eigen::VectorXd context_;
};

}  // namespace gmpslab::policy
