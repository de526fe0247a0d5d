#include "gmpslab/cli/config.hpp"

#include "gmpslab/error.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace gmpslab::cli {

namespace {

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

// Reads the keys of one mapping; rejects every key it was not asked about.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) throw Error(ErrorKind::kConfig, "config key '" + path_ + "' must be a mapping");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_[key]) return;
    try {
      out = node_[key].template as<T>();
    } catch (const YAML::Exception&) {
      throw Error(ErrorKind::kConfig, "config key '" + join(path_, key) + "' has the wrong type");
    }
  }

  template <typename T>
  void choice(const char* key, T& out, std::initializer_list<std::pair<const char*, T>> options) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    for (const auto& [name, value] : options) {
      if (s == name) {
        out = value;
        return;
      }
    }
    throw Error(ErrorKind::kConfig, "config key '" + join(path_, key) + "' has unknown value '" + s + "'");
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(node_ ? node_[key] : YAML::Node(), join(path_, key));
  }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw Error(ErrorKind::kConfig, "unknown config key '" + join(path_, key) + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kConfig, "config key '" + key + "' " + what);
}

std::vector<Eigen::Index> to_sizes(const std::vector<int>& v, const std::string& key) {
  std::vector<Eigen::Index> out;
  for (int n : v) {
    require(n > 0, key, "must list positive layer widths");
    out.push_back(n);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!name.empty(), "name", "must not be empty");
  require(!seeds.empty(), "seeds", "must list at least one seed");
  require(family.train_tasks >= 1, "family.train_tasks", "must be at least 1");
  require(family.test_tasks >= 1, "family.test_tasks", "must be at least 1");
  require(eval.every >= 1, "eval.every", "must be at least 1");
  require(eval.rollouts >= 1, "eval.rollouts", "must be at least 1");
  require(eval.grad_steps >= 0, "eval.grad_steps", "must be non-negative");
  require(expert.gain > 0.0, "expert.gain", "must be positive");
  require(verify.states >= 1 && verify.actions >= 1 && verify.tasks >= 1 && verify.horizon >= 1, "verify",
          "sizes must be positive");
  require(verify.temperature > 0.0, "verify.temperature", "must be positive");
  family.nav.validate();
  policy.validate();
  meta.validate();
  verify.gmps.validate();
  if (expert.kind == ExpertKind::kTrained) expert.train.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kParse, std::string("config is not valid YAML: ") + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  ExperimentConfig c;
  Section top(root, "");
  top.get("name", c.name);
  top.get("out", c.out);
  top.get("seeds", c.seeds);

  {
    Section s = top.child("family");
    s.choice("reward", c.family.nav.variant, {{"dense", envs::RewardVariant::kDense}, {"sparse", envs::RewardVariant::kSparse}});
    s.get("radius", c.family.nav.radius);
    s.get("min_angle", c.family.nav.min_angle);
    s.get("max_angle", c.family.nav.max_angle);
    s.get("horizon", c.family.nav.horizon);
    s.get("success_radius", c.family.nav.success_radius);
    s.get("train_tasks", c.family.train_tasks);
    s.get("test_tasks", c.family.test_tasks);
    s.finish();
  }
  {
    Section s = top.child("policy");
    std::vector<int> hidden(c.policy.hidden.begin(), c.policy.hidden.end());
    s.get("hidden", hidden);
    c.policy.hidden = to_sizes(hidden, "policy.hidden");
    s.choice("nonlinearity", c.policy.nonlinearity,
             {{"tanh", policy::Nonlinearity::kTanh}, {"relu", policy::Nonlinearity::kRelu}});
    int bt = static_cast<int>(c.policy.bias_transform_dim);
    s.get("bias_transform_dim", bt);
    require(bt >= 0, "policy.bias_transform_dim", "must be non-negative");
    c.policy.bias_transform_dim = bt;
    s.get("init_log_std", c.policy.init_log_std);
    s.finish();
  }
  {
    Section s = top.child("meta");
    meta::MetaConfig& m = c.meta;
    s.get("alpha", m.alpha);
    s.get("learn_alpha", m.learn_alpha);
    s.get("beta", m.beta);
    s.get("grad_clip", m.grad_clip);
    s.get("rollouts", m.rollouts);
    s.get("n_bc", m.n_bc);
    s.get("val_batch", m.val_batch);
    s.get("task_batch", m.task_batch);
    s.get("aggregation", m.aggregation);
    s.get("initial_demos", m.initial_demos);
    s.get("agg_rollouts", m.agg_rollouts);
    s.get("demo_noise", m.demo_noise);
    s.choice("adapt", m.adapt_mode, {{"all", policy::AdaptMode::kAll}, {"fc_only", policy::AdaptMode::kFcOnly}});
    s.get("adapt_log_std", m.adapt_log_std);
    s.get("iterations", m.iterations);
    s.get("gamma", m.inner.gamma);
    s.get("ratio_lo", m.inner.ratio_lo);
    s.get("ratio_hi", m.inner.ratio_hi);
    s.get("normalize_advantages", m.inner.normalize_advantages);
    s.finish();
  }
  {
    Section s = top.child("expert");
    s.choice("kind", c.expert.kind, {{"scripted", ExpertKind::kScripted}, {"trained", ExpertKind::kTrained}});
    s.get("gain", c.expert.gain);
    std::int64_t budget = c.expert.train.budget;
    s.get("budget", budget);
    c.expert.train.budget = budget;
    s.get("rollouts_per_task", c.expert.train.rollouts_per_task);
    s.get("learning_rate", c.expert.train.learning_rate);
    std::vector<int> hidden(c.expert.train.spec.hidden.begin(), c.expert.train.spec.hidden.end());
    s.get("hidden", hidden);
    c.expert.train.spec.hidden = to_sizes(hidden, "expert.hidden");
    s.get("demos", c.expert.demos);
    s.finish();
    // The expert sees the position and the goal.
    c.expert.train.spec.obs_dim = 4;
    c.expert.train.spec.bias_transform_dim = 0;
    c.expert.train.gamma = c.meta.inner.gamma;
  }
  {
    Section s = top.child("eval");
    s.get("every", c.eval.every);
    s.get("rollouts", c.eval.rollouts);
    s.get("grad_steps", c.eval.grad_steps);
    s.finish();
  }
  {
    Section s = top.child("verify");
    VerifyConfig& v = c.verify;
    s.get("states", v.states);
    s.get("actions", v.actions);
    s.get("tasks", v.tasks);
    s.get("horizon", v.horizon);
    s.get("temperature", v.temperature);
    s.get("alpha", v.gmps.alpha);
    s.get("learn_alpha", v.gmps.learn_alpha);
    s.get("beta", v.gmps.beta);
    s.get("iterations", v.gmps.iterations);
    s.get("n_bc", v.gmps.n_bc);
    std::vector<double> mixture;
    s.get("mixture", mixture);
    v.gmps.mixture = verify::MixtureSchedule(mixture);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace gmpslab::cli
