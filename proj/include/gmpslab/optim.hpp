#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace gmpslab {

/// Adam update rule; returns the step to subtract from the parameters.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  Eigen::VectorXd step(const Eigen::VectorXd& grad) {
    if (m_.size() != grad.size()) {
      m_ = Eigen::VectorXd::Zero(grad.size());
      v_ = Eigen::VectorXd::Zero(grad.size());
      t_ = 0;
    }
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    return lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_);
  }

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

/// Rescales `g` in place so its Euclidean norm is at most `max_norm`.
inline void clip_norm(Eigen::VectorXd& g, double max_norm) {
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
}

}  // namespace gmpslab
