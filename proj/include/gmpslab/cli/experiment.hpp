#pragma once

#include "gmpslab/cli/config.hpp"
#include "gmpslab/cli/metrics.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gmpslab::cli {

enum class Algo { kGmps, kMaml, kMultitask, kMultitaskImitation };

Algo parse_algo(const std::string& name);
std::string algo_name(Algo a);

struct TaskSets {
  std::vector<envs::NavTask> train;
  /// Held-out tasks; ids start at 1000.
  std::vector<envs::NavTask> test;
};

/// Training tasks from the seed's task stream, held-out tasks from a separate one.
TaskSets make_tasks(const ExperimentConfig& cfg, std::uint64_t seed);

struct ExpertBundle {
  std::vector<experts::Expert> experts;
  /// Environment steps spent obtaining the experts.
  std::int64_t env_steps = 0;
  double gain = 5.0;
  std::optional<experts::TrainedExperts> trained;
};

ExpertBundle obtain_experts(const ExperimentConfig& cfg, const std::vector<envs::NavTask>& tasks, std::uint64_t seed);

void save_experts(const std::filesystem::path& path, const ExpertBundle& bundle);
/// Rebinds saved experts to `tasks`.
ExpertBundle load_experts(const std::filesystem::path& path, const std::vector<envs::NavTask>& tasks);

/// Expert-labelled demonstrations of the training tasks and the steps they cost.
struct Demos {
  experts::DemoSet set;
  std::int64_t env_steps = 0;
};
Demos collect_demos(const ExperimentConfig& cfg, const TaskSets& tasks, const ExpertBundle& experts,
                    std::uint64_t seed);
/// Steps behind a demo file: one per stored pair.
std::int64_t demo_steps(const experts::DemoSet& demos);

struct RunResult {
  meta::MetaState state;
  std::vector<MetricsRecord> records;
};

using RecordSink = std::function<void(const MetricsRecord&)>;

/// Meta-trains with the chosen algorithm, evaluating on the held-out tasks
/// every cfg.eval.every iterations and after the last one. `experts` and
/// `demos` override what the config would otherwise produce.
RunResult run_meta_train(const ExperimentConfig& cfg, Algo algo, std::uint64_t seed, const RecordSink& sink = {},
                         const ExpertBundle* experts = nullptr, const Demos* demos = nullptr);

/// Held-out adaptation of saved parameters.
meta::MetaTestResult run_meta_test(const ExperimentConfig& cfg, const diff::ParamVector& theta, double alpha,
                                   std::uint64_t seed, int grad_steps);

void save_theta(const std::filesystem::path& path, Algo algo, std::uint64_t seed, const meta::MetaState& state);
/// Parameters and step size written by save_theta, checked against the policy config.
std::pair<diff::ParamVector, double> load_theta(const std::filesystem::path& path, const ExperimentConfig& cfg);

/// Tabular verification of one seed: random chain family, Boltzmann experts,
/// exact GMPS, bound check.
verify::BoundReport run_verify(const VerifyConfig& cfg, std::uint64_t seed);

std::string run_id(const ExperimentConfig& cfg, Algo algo);

}  // namespace gmpslab::cli
