#pragma once

#include "gmpslab/envs/navigation.hpp"
#include "gmpslab/experts/expert.hpp"
#include "gmpslab/meta/metatrain.hpp"
#include "gmpslab/policy/gaussian_mlp.hpp"
#include "gmpslab/verify/verify.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gmpslab::cli {

struct FamilyConfig {
  envs::NavFamily nav;
  int train_tasks = 10;
  int test_tasks = 20;
};

enum class ExpertKind { kScripted, kTrained };

struct ExpertConfig {
  ExpertKind kind = ExpertKind::kScripted;
  /// Scripted experts: proportional gain towards the goal.
  double gain = 5.0;
  /// Trained experts: a context-conditioned policy trained by policy gradient.
  experts::ExpertTrainConfig train;
  /// Optional demonstration file; when set, meta-training reads it instead
  /// of rolling out the experts.
  std::string demos;
};

struct EvalConfig {
  /// Evaluate on the held-out tasks every this many iterations.
  int every = 1;
  int rollouts = 20;
  int grad_steps = 1;
};

struct VerifyConfig {
  int states = 6;
  int actions = 3;
  int tasks = 10;
  int horizon = 10;
  double temperature = 0.3;
  verify::TabularGmpsConfig gmps;
};

struct ExperimentConfig {
  std::string name = "run";
  std::string out = "runs";
  std::vector<std::uint64_t> seeds{0};
  FamilyConfig family;
  policy::MlpSpec policy;
  meta::MetaConfig meta;
  ExpertConfig expert;
  EvalConfig eval;
  VerifyConfig verify;

  void validate() const;
};

/// Parses the YAML text of an experiment config. Unknown keys, wrong types
/// and out-of-range values raise kConfig naming the dotted key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace gmpslab::cli
