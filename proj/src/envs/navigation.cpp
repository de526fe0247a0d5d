#include "gmpslab/envs/navigation.hpp"

#include "gmpslab/envs/step_counter.hpp"
#include "gmpslab/error.hpp"

#include <cmath>
#include <string>

namespace gmpslab::envs {

namespace {
thread_local bool evaluating = false;
}

StepCounter& global_step_counter() {
  static StepCounter counter;
  return counter;
}

StepCounter& evaluation_step_counter() {
  static StepCounter counter;
  return counter;
}

EvaluationScope::EvaluationScope(bool active) : previous_(evaluating) { evaluating = active; }
EvaluationScope::~EvaluationScope() { evaluating = previous_; }

bool evaluation_active() { return evaluating; }

void record_steps(std::int64_t n) { (evaluating ? evaluation_step_counter() : global_step_counter()).add(n); }

void NavFamily::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw Error(ErrorKind::kConfig, "radius must be positive");
  if (!(min_angle <= max_angle)) throw Error(ErrorKind::kConfig, "min_angle exceeds max_angle");
  if (horizon < 2) throw Error(ErrorKind::kConfig, "horizon must be at least 2");
  if (!(dt > 0.0) || !(max_action > 0.0)) throw Error(ErrorKind::kConfig, "dt and max_action must be positive");
  if (!(success_radius > 0.0)) throw Error(ErrorKind::kConfig, "success_radius must be positive");
  if (!start.allFinite()) throw Error(ErrorKind::kConfig, "start position must be finite");
}

NavTask task_at_angle(const NavFamily& family, double angle, int id) {
  NavTask task;
  task.goal = family.radius * Eigen::Vector2d(std::cos(angle), std::sin(angle));
  task.variant = family.variant;
  task.id = id;
  return task;
}

NavTask sample_task(const NavFamily& family, Rng& rng, int id) {
  family.validate();
  return task_at_angle(family, rng.uniform(family.min_angle, family.max_angle), id);
}

double reward_dense(const Eigen::Vector2d& x, const Eigen::Vector2d& goal, double offset) {
  return -(x - goal).lpNorm<1>() + offset;
}

double reward_sparse(const Eigen::Vector2d& x, const Eigen::Vector2d& goal, double m, double success_radius,
                     double offset) {
  if ((x - goal).norm() <= success_radius) return reward_dense(x, goal, offset);
  return -m + offset;
}

bool reached(const NavFamily& family, const NavTask& task, const Eigen::Vector2d& x) {
  return (x - task.goal).norm() <= family.success_radius;
}

NavEnv::NavEnv(NavFamily family, NavTask task)
    : family_(std::move(family)), task_(std::move(task)), m_((family_.start - task_.goal).lpNorm<1>()) {
  family_.validate();
}

EnvState NavEnv::reset() const { return EnvState{family_.start, 1}; }

double NavEnv::reward(const Eigen::Vector2d& x) const {
  if (task_.variant == RewardVariant::kDense) return reward_dense(x, task_.goal, family_.reward_offset);
  return reward_sparse(x, task_.goal, m_, family_.success_radius, family_.reward_offset);
}

StepResult NavEnv::step(const EnvState& s, const Eigen::Vector2d& action) const {
  if (s.t >= family_.horizon) {
    throw Error(ErrorKind::kInvalidArgument, "step called on a finished episode (t = " + std::to_string(s.t) + ")");
  }
  if (!action.allFinite()) throw Error(ErrorKind::kNonFinite, "action is not finite");
  StepResult r;
  r.state.position = s.position + family_.dt * action.cwiseMax(-family_.max_action).cwiseMin(family_.max_action);
  r.state.t = s.t + 1;
  r.reward = reward(r.state.position);
  r.done = r.state.t == family_.horizon;
  record_steps(1);
  return r;
}

Eigen::RowVectorXd NavEnv::step_batch(Eigen::Matrix2Xd& positions, const Eigen::Matrix2Xd& actions) const {
  if (positions.cols() != actions.cols()) throw Error(ErrorKind::kShapeMismatch, "positions and actions differ in count");
  if (!actions.allFinite()) throw Error(ErrorKind::kNonFinite, "action is not finite");
  positions += family_.dt * actions.cwiseMax(-family_.max_action).cwiseMin(family_.max_action);
  Eigen::RowVectorXd r(positions.cols());
  for (Eigen::Index j = 0; j < positions.cols(); ++j) r[j] = reward(positions.col(j));
  record_steps(positions.cols());
  return r;
}

}  // namespace gmpslab::envs
