#pragma once

#include "gmpslab/rng.hpp"

#include <Eigen/Dense>

namespace gmpslab::envs {

enum class RewardVariant { kDense, kSparse };

/// Point-mass navigation towards a goal on an arc. Defaults give goals on the
/// radius-2 quarter circle between 0 and 90 degrees, a 50-step horizon and
/// per-step displacement of at most 0.1 per axis.
struct NavFamily {
  RewardVariant variant = RewardVariant::kDense;
  double radius = 2.0;
  double min_angle = 0.0;
  double max_angle = 1.5707963267948966;
  int horizon = 50;
  double dt = 0.1;
  double max_action = 1.0;
  double success_radius = 0.8;
  double reward_offset = 4.0;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();

  void validate() const;
};

struct NavTask {
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  RewardVariant variant = RewardVariant::kDense;
  int id = 0;

  /// Task context ω. Only expert training may look at it.
  Eigen::VectorXd context() const { return goal; }
};

NavTask sample_task(const NavFamily& family, Rng& rng, int id = 0);
NavTask task_at_angle(const NavFamily& family, double angle, int id = 0);

double reward_dense(const Eigen::Vector2d& x, const Eigen::Vector2d& goal, double offset = 4.0);
/// Dense value inside the success radius, otherwise the constant -m + offset
/// where m is the l1 distance from the episode start to the goal.
double reward_sparse(const Eigen::Vector2d& x, const Eigen::Vector2d& goal, double m, double success_radius = 0.8,
                     double offset = 4.0);

struct EnvState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  int t = 1;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

class NavEnv {
 public:
  NavEnv(NavFamily family, NavTask task);

  const NavFamily& family() const { return family_; }
  const NavTask& task() const { return task_; }
  int horizon() const { return family_.horizon; }
  /// l1 distance from the start to the goal; the sparse penalty.
  double initial_distance() const { return m_; }

  EnvState reset() const;
  /// Reward is evaluated at the position reached by the step.
  StepResult step(const EnvState& s, const Eigen::Vector2d& action) const;
  /// The agent only observes its position.
  Eigen::VectorXd observe(const EnvState& s) const { return s.position; }

  double reward(const Eigen::Vector2d& x) const;
  /// Vectorised step of many episodes at once: positions and actions are 2xN.
  /// Returns rewards (1xN); counts N environment steps.
  Eigen::RowVectorXd step_batch(Eigen::Matrix2Xd& positions, const Eigen::Matrix2Xd& actions) const;

 private:
  NavFamily family_;
  NavTask task_;
  double m_;
};

bool reached(const NavFamily& family, const NavTask& task, const Eigen::Vector2d& x);

}  // namespace gmpslab::envs
