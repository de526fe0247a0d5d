#pragma once

#include "gmpslab/inner/trajectory.hpp"

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <vector>

namespace gmpslab::experts {

inline constexpr int kDemoSchemaVersion = 1;

/// Expert-labelled data of one task. Each trajectory's `actions` are expert
/// labels for its first steps() states; `states`/`actions` below hold every
/// pair side by side.
struct TaskDemos {
  int task_id = 0;
  Eigen::VectorXd context;
  std::vector<inner::Trajectory> trajectories;
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;

  Eigen::Index pairs() const { return states.cols(); }
};

/// Append-only per-task store of expert-labelled states.
class DemoSet {
 public:
  void append(const inner::Trajectory& labelled, const Eigen::VectorXd& context);
  void append(const inner::Batch& labelled, const Eigen::VectorXd& context);

  bool contains(int task_id) const { return tasks_.count(task_id) != 0; }
  /// Throws kMissingData naming the task when it has no data.
  const TaskDemos& task(int task_id) const;
  Eigen::Index pairs(int task_id) const { return contains(task_id) ? tasks_.at(task_id).pairs() : 0; }
  std::vector<int> task_ids() const;
  bool empty() const { return tasks_.empty(); }

  friend bool operator==(const DemoSet& a, const DemoSet& b);

 private:
  std::map<int, TaskDemos> tasks_;
};

/// One JSON object per line: schema_version, task_id, context, states,
/// actions, rewards. Doubles are written with round-trip precision.
void write_demos(const std::filesystem::path& path, const DemoSet& demos);
DemoSet read_demos(const std::filesystem::path& path);

}  // namespace gmpslab::experts
