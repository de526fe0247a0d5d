#include "gmpslab/cli/experiment.hpp"

#include "gmpslab/error.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

namespace gmpslab::cli {

using nlohmann::json;

Algo parse_algo(const std::string& name) {
  if (name == "gmps") return Algo::kGmps;
  if (name == "maml") return Algo::kMaml;
  if (name == "multitask") return Algo::kMultitask;
  if (name == "multitask-imitation") return Algo::kMultitaskImitation;
  throw Error(ErrorKind::kInvalidArgument, "unknown algorithm '" + name + "'");
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::kGmps: return "gmps";
    case Algo::kMaml: return "maml";
    case Algo::kMultitask: return "multitask";
    case Algo::kMultitaskImitation: return "multitask-imitation";
  }
  return "?";
}

std::string run_id(const ExperimentConfig& cfg, Algo algo) { return cfg.name + "-" + algo_name(algo); }

TaskSets make_tasks(const ExperimentConfig& cfg, std::uint64_t seed) {
  TaskSets out;
  Rng train = Rng(seed).derive({stream::kTasks});
  for (int i = 0; i < cfg.family.train_tasks; ++i) out.train.push_back(envs::sample_task(cfg.family.nav, train, i));
  Rng test = Rng(seed).derive({stream::kHeldOut});
  for (int i = 0; i < cfg.family.test_tasks; ++i) out.test.push_back(envs::sample_task(cfg.family.nav, test, 1000 + i));
  return out;
}

ExpertBundle obtain_experts(const ExperimentConfig& cfg, const std::vector<envs::NavTask>& tasks, std::uint64_t seed) {
  ExpertBundle b;
  b.gain = cfg.expert.gain;
  if (cfg.expert.kind == ExpertKind::kScripted) {
    for (const auto& t : tasks) b.experts.push_back(experts::Expert::scripted(t, cfg.expert.gain));
    return b;
  }
  Rng r = Rng(seed).derive({stream::kExpert});
  b.trained = experts::train_contextual_expert(cfg.family.nav, tasks, cfg.expert.train, r);
  b.experts = b.trained->experts(tasks);
  b.env_steps = b.trained->env_steps;
  return b;
}

namespace {

json spec_json(const policy::MlpSpec& s) {
  return {{"obs_dim", s.obs_dim},
          {"act_dim", s.act_dim},
          {"hidden", s.hidden},
          {"nonlinearity", s.nonlinearity == policy::Nonlinearity::kTanh ? "tanh" : "relu"},
          {"bias_transform_dim", s.bias_transform_dim},
          {"init_log_std", s.init_log_std}};
}

policy::MlpSpec spec_from(const json& j) {
  policy::MlpSpec s;
  s.obs_dim = j.at("obs_dim").get<Eigen::Index>();
  s.act_dim = j.at("act_dim").get<Eigen::Index>();
  s.hidden = j.at("hidden").get<std::vector<Eigen::Index>>();
  s.nonlinearity = j.at("nonlinearity").get<std::string>() == "relu" ? policy::Nonlinearity::kRelu
                                                                     : policy::Nonlinearity::kTanh;
  s.bias_transform_dim = j.at("bias_transform_dim").get<Eigen::Index>();
  s.init_log_std = j.at("init_log_std").get<double>();
  return s;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json read_json(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, std::string("cannot read ") + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace

void save_experts(const std::filesystem::path& path, const ExpertBundle& b) {
  json j{{"schema", 1}, {"env_steps", b.env_steps}};
  if (b.trained) {
    j["kind"] = "trained";
    j["spec"] = spec_json(b.trained->base.spec());
    j["params"] = to_std(b.trained->params.values());
    j["returns"] = b.trained->returns;
  } else {
    j["kind"] = "scripted";
    j["gain"] = b.gain;
  }
  write_json(path, j);
}

ExpertBundle load_experts(const std::filesystem::path& path, const std::vector<envs::NavTask>& tasks) {
  const json j = read_json(path, "experts");
  try {
    if (j.at("schema") != 1) throw Error(ErrorKind::kSchema, path.string() + ": unsupported experts schema");
    ExpertBundle b;
    b.env_steps = j.at("env_steps").get<std::int64_t>();
    if (j.at("kind") == "scripted") {
      b.gain = j.at("gain").get<double>();
      for (const auto& t : tasks) b.experts.push_back(experts::Expert::scripted(t, b.gain));
      return b;
    }
    policy::GaussianMlp base(spec_from(j.at("spec")));
    const Eigen::VectorXd v = to_eigen(j.at("params").get<std::vector<double>>());
    if (v.size() != base.layout().size()) throw Error(ErrorKind::kShapeMismatch, path.string() + ": parameter count");
    b.trained = experts::TrainedExperts{base, diff::ParamVector(base.layout(), v), j.at("returns").get<std::vector<double>>(),
                                        b.env_steps};
    b.experts = b.trained->experts(tasks);
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

std::int64_t demo_steps(const experts::DemoSet& demos) {
  std::int64_t n = 0;
  for (int id : demos.task_ids()) n += demos.pairs(id);
  return n;
}

Demos collect_demos(const ExperimentConfig& cfg, const TaskSets& tasks, const ExpertBundle& experts, std::uint64_t seed) {
  Demos d;
  d.env_steps = meta::seed_demos(d.set, cfg.family.nav, tasks.train, experts.experts, cfg.meta.initial_demos,
                                 cfg.meta.demo_noise, Rng(seed));
  return d;
}

namespace {

Demos configured_demos(const ExperimentConfig& cfg, const TaskSets& tasks, const ExpertBundle& experts,
                       std::uint64_t seed) {
  if (!cfg.expert.demos.empty()) {
    if (!std::filesystem::exists(cfg.expert.demos)) {
      throw Error(ErrorKind::kIo, "demo file " + cfg.expert.demos + " does not exist");
    }
    Demos d;
    d.set = experts::read_demos(cfg.expert.demos);
    d.env_steps = demo_steps(d.set);
    return d;
  }
  return collect_demos(cfg, tasks, experts, seed);
}

}  // namespace

RunResult run_meta_train(const ExperimentConfig& cfg, Algo algo, std::uint64_t seed, const RecordSink& sink,
                         const ExpertBundle* experts, const Demos* demos) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const TaskSets tasks = make_tasks(cfg, seed);
  const policy::GaussianMlp pol(cfg.policy);
  const Rng rng(seed);
  const std::string id = run_id(cfg, algo);

  RunResult out;
  const int last = cfg.meta.iterations - 1;
  auto on_iteration = [&](const meta::IterationReport& rep, const meta::MetaState& state) {
    MetricsRecord r;
    r.run_id = id;
    r.seed = seed;
    r.iteration = rep.iteration;
    r.env_steps = state.env_steps;
    r.pre_return = rep.pre_update_return;
    r.bc_loss = rep.outer_loss;
    r.alpha = rep.alpha;
    r.task_ids = rep.task_ids;
    r.task_returns = rep.task_returns;
    if ((rep.iteration + 1) % cfg.eval.every == 0 || rep.iteration == last) {
      const auto mt = meta::meta_test(pol, state.theta, state.alpha(), cfg.family.nav, tasks.test, cfg.eval.grad_steps,
                                      cfg.eval.rollouts, cfg.meta.inner,
                                      rng.derive({stream::kEval, static_cast<std::uint64_t>(rep.iteration)}));
      const auto k = static_cast<std::size_t>(cfg.eval.grad_steps);
      r.post_return = mt.mean_return(k);
      r.post_step_reward = mt.mean_step_reward(k);
      r.post_success = mt.mean_success(k);
      r.post_distance = mt.mean_final_distance(k);
    }
    r.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.records.push_back(r);
    if (sink) sink(r);
  };

  ExpertBundle own;
  auto need_experts = [&]() -> const ExpertBundle& {
    if (experts != nullptr) return *experts;
    own = obtain_experts(cfg, tasks.train, seed);
    return own;
  };

  switch (algo) {
    case Algo::kGmps: {
      const ExpertBundle& ex = need_experts();
      if (demos != nullptr || !cfg.expert.demos.empty()) {
        const Demos d = demos != nullptr ? *demos : configured_demos(cfg, tasks, ex, seed);
        out.state = meta::gmps_train(pol, cfg.family.nav, tasks.train, ex.experts, ex.env_steps + d.env_steps, cfg.meta,
                                     rng, on_iteration, d.set);
      } else {
        out.state = meta::gmps_train(pol, cfg.family.nav, tasks.train, ex.experts, ex.env_steps, cfg.meta, rng,
                                     on_iteration);
      }
      break;
    }
    case Algo::kMaml:
      out.state = meta::maml_train(pol, cfg.family.nav, tasks.train, cfg.meta, rng, on_iteration);
      break;
    case Algo::kMultitask:
      out.state = meta::multitask_train(pol, cfg.family.nav, tasks.train, cfg.meta, rng, on_iteration);
      break;
    case Algo::kMultitaskImitation: {
      const ExpertBundle& ex = need_experts();
      const Demos d = demos != nullptr ? *demos : configured_demos(cfg, tasks, ex, seed);
      out.state = meta::multitask_imitation(pol, d.set, ex.env_steps + d.env_steps, cfg.meta, rng, on_iteration);
      break;
    }
  }
  return out;
}

meta::MetaTestResult run_meta_test(const ExperimentConfig& cfg, const diff::ParamVector& theta, double alpha,
                                   std::uint64_t seed, int grad_steps) {
  const TaskSets tasks = make_tasks(cfg, seed);
  const policy::GaussianMlp pol(cfg.policy);
  return meta::meta_test(pol, theta, alpha, cfg.family.nav, tasks.test, grad_steps, cfg.eval.rollouts, cfg.meta.inner,
                         Rng(seed).derive({stream::kEval, 0xFFFFu}));
}

void save_theta(const std::filesystem::path& path, Algo algo, std::uint64_t seed, const meta::MetaState& state) {
  std::vector<bool> mask(static_cast<std::size_t>(state.theta.size()));
  for (Eigen::Index i = 0; i < state.theta.size(); ++i) mask[static_cast<std::size_t>(i)] = state.theta.mask()[i];
  write_json(path, {{"schema", 1},
                    {"algo", algo_name(algo)},
                    {"seed", seed},
                    {"iteration", state.iteration},
                    {"env_steps", state.env_steps},
                    {"log_alpha", state.log_alpha},
                    {"values", to_std(state.theta.values())},
                    {"mask", mask}});
}

std::pair<diff::ParamVector, double> load_theta(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  const json j = read_json(path, "parameters");
  const policy::GaussianMlp pol(cfg.policy);
  try {
    if (j.at("schema") != 1) throw Error(ErrorKind::kSchema, path.string() + ": unsupported parameter schema");
    const Eigen::VectorXd v = to_eigen(j.at("values").get<std::vector<double>>());
    const auto m = j.at("mask").get<std::vector<bool>>();
    if (v.size() != pol.layout().size() || m.size() != static_cast<std::size_t>(v.size())) {
      throw Error(ErrorKind::kShapeMismatch, path.string() + ": parameters do not fit the configured policy");
    }
    diff::Mask mask(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) mask[i] = m[static_cast<std::size_t>(i)];
    return {diff::ParamVector(pol.layout(), v, mask), std::exp(j.at("log_alpha").get<double>())};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
}

verify::BoundReport run_verify(const VerifyConfig& cfg, std::uint64_t seed) {
  const Rng rng(seed);
  Rng family = rng.derive({stream::kTasks});
  const envs::ChainMdp mdp = envs::random_chain(cfg.states, cfg.actions, cfg.tasks, cfg.horizon, family);
  std::vector<envs::TabularPolicy> experts;
  for (int i = 0; i < mdp.n_tasks(); ++i) experts.push_back(verify::boltzmann_expert(mdp, i, cfg.temperature));
  const auto res = verify::train_tabular_gmps(mdp, experts, cfg.gmps, rng);
  return verify::check_bound(mdp, verify::adapted_policies(mdp, res), experts);
}

}  // namespace gmpslab::cli
