#include "doctest.h"

#include "gmpslab/cli/config.hpp"
#include "gmpslab/cli/experiment.hpp"
#include "gmpslab/cli/metrics.hpp"
#include "gmpslab/cli/plot.hpp"
#include "gmpslab/error.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace gmpslab;
using namespace gmpslab::cli;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(
name: tiny
seeds: [3]
family:
  horizon: 10
  train_tasks: 2
  test_tasks: 2
policy:
  hidden: [8]
meta:
  rollouts: 3
  n_bc: 2
  val_batch: 16
  initial_demos: 2
  agg_rollouts: 2
  iterations: 2
eval:
  rollouts: 3
verify:
  states: 4
  actions: 2
  tasks: 3
  horizon: 5
  iterations: 2
  n_bc: 5
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmpslab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void expect_config_error(const std::string& text, ErrorKind kind, const std::string& fragment) {
  try {
    parse_config(text);
    FAIL("expected a config error for: " << text);
  } catch (const Error& e) {
    CHECK(e.kind() == kind);
    CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
  }
}

MetricsRecord sample_record(const std::string& run, std::uint64_t seed, int it, std::int64_t steps, double post) {
  MetricsRecord r;
  r.run_id = run;
  r.seed = seed;
  r.iteration = it;
  r.env_steps = steps;
  r.pre_return = -10.5;
  r.post_return = post;
  r.bc_loss = 0.25;
  r.alpha = 0.1;
  r.task_ids = {0, 1};
  r.task_returns = {-1.0, -2.0};
  r.wall_clock = 1.5;
  return r;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GMPSLAB_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const ExperimentConfig d = parse_config("");
  CHECK(d.meta.n_bc == 200);
  CHECK(d.meta.val_batch == 64);
  CHECK(d.meta.alpha == 0.1);
  CHECK(d.meta.learn_alpha);
  CHECK(d.family.train_tasks == 10);
  CHECK(d.family.test_tasks == 20);
  CHECK(d.verify.gmps.mixture.at(0) == 0.0);

  const ExperimentConfig c = parse_config(kTiny);
  CHECK(c.name == "tiny");
  CHECK(c.seeds == std::vector<std::uint64_t>{3});
  CHECK(c.family.nav.horizon == 10);
  CHECK(c.policy.hidden == std::vector<Eigen::Index>{8});
  CHECK(c.meta.iterations == 2);
  CHECK(c.verify.tasks == 3);

  const ExperimentConfig s = parse_config("family: {reward: sparse}\nmeta: {adapt: fc_only, normalize_advantages: false}\n"
                                          "expert: {kind: trained, budget: 1000, hidden: [16]}\nverify: {mixture: [1, 0.5]}\n");
  CHECK(s.family.nav.variant == envs::RewardVariant::kSparse);
  CHECK(s.meta.adapt_mode == policy::AdaptMode::kFcOnly);
  CHECK_FALSE(s.meta.inner.normalize_advantages);
  CHECK(s.expert.kind == ExpertKind::kTrained);
  CHECK(s.expert.train.budget == 1000);
  CHECK(s.expert.train.spec.obs_dim == 4);
  CHECK(s.verify.gmps.mixture.at(1) == 0.5);
}

TEST_CASE("config errors name the offending key") {
  expect_config_error("meta:\n  leraning_rate: 0.1\n", ErrorKind::kConfig, "meta.leraning_rate");
  expect_config_error("colour: red\n", ErrorKind::kConfig, "colour");
  expect_config_error("meta:\n  n_bc: lots\n", ErrorKind::kConfig, "meta.n_bc");
  expect_config_error("meta:\n  beta: -1\n", ErrorKind::kConfig, "beta");
  expect_config_error("family:\n  reward: medium\n", ErrorKind::kConfig, "family.reward");
  expect_config_error("policy: [1, 2]\n", ErrorKind::kConfig, "policy");
  expect_config_error("policy:\n  hidden: [8, 0]\n", ErrorKind::kConfig, "policy.hidden");
  expect_config_error("eval:\n  every: 0\n", ErrorKind::kConfig, "eval.every");
  expect_config_error("seeds: []\n", ErrorKind::kConfig, "seeds");
  expect_config_error("verify:\n  mixture: [2]\n", ErrorKind::kConfig, "mixture");
  expect_config_error("meta: {alpha: 0.1\n", ErrorKind::kParse, "YAML");
  CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), Error);
}

TEST_CASE("metrics records round-trip, including absent and infinite values") {
  const fs::path dir = scratch("roundtrip");
  MetricsRecord a = sample_record("r", 1, 0, 100, 2.5);
  MetricsRecord b = sample_record("r", 1, 1, 200, 0.0);
  b.post_return.reset();
  BoundRecord bound;
  bound.run_id = "v";
  bound.report.epsilon = std::numeric_limits<double>::infinity();
  bound.report.task_epsilon = {0.1, std::numeric_limits<double>::infinity()};
  bound.report.task_j_expert = {1.0, 2.0};
  bound.report.task_j_adapted = {0.9, 1.9};
  bound.report.verdict = true;
  {
    MetricsWriter w(dir / "m.jsonl");
    w.write(a);
    w.write(b);
    w.write(bound);
  }
  const std::string text = slurp(dir / "m.jsonl");
  CHECK(text.find("\"schema\":1") != std::string::npos);
  const MetricsFile f = read_metrics(dir / "m.jsonl");
  CHECK_FALSE(f.truncated);
  REQUIRE(f.records.size() == 2);
  CHECK(f.records[0] == a);
  CHECK(f.records[1] == b);
  REQUIRE(f.bounds.size() == 1);
  CHECK(std::isinf(f.bounds[0].report.epsilon));
  CHECK(f.bounds[0].report.verdict);
}

TEST_CASE("a truncated final line is reported and earlier records survive") {
  const fs::path dir = scratch("truncated");
  const std::string l1 = to_line(sample_record("r", 0, 0, 10, 1.0));
  const std::string l2 = to_line(sample_record("r", 0, 1, 20, 1.5));
  std::ofstream(dir / "m.jsonl") << l1 << '\n' << l2.substr(0, l2.size() / 2);
  const MetricsFile f = read_metrics(dir / "m.jsonl");
  REQUIRE(f.truncated);
  CHECK(f.truncated->find("line 2") != std::string::npos);
  CHECK(f.records.size() == 1);

  std::ofstream(dir / "bad.jsonl") << l1 << "\n{oops\n" << l2 << '\n';
  try {
    read_metrics(dir / "bad.jsonl");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::ofstream(dir / "v2.jsonl") << std::regex_replace(l1, std::regex("\"schema\":1"), "\"schema\":2") << '\n';
  CHECK_THROWS_AS(read_metrics(dir / "v2.jsonl"), Error);
  CHECK_THROWS_AS(read_metrics(dir / "missing.jsonl"), Error);
}

TEST_CASE("learning curves pool seeds with the sample standard error") {
  std::vector<MetricsRecord> recs;
  const double ys[3] = {1.0, 2.0, 4.0};
  for (std::uint64_t s = 0; s < 3; ++s) {
    recs.push_back(sample_record("a", s, 0, 100, ys[s]));
    recs.push_back(sample_record("a", s, 1, 200, ys[s] + 1.0));
  }
  MetricsRecord skipped = sample_record("a", 0, 2, 300, 0.0);
  skipped.post_return.reset();
  recs.push_back(skipped);
  const auto curves = learning_curves(recs);
  REQUIRE(curves.size() == 1);
  REQUIRE(curves[0].points.size() == 2);
  // Mean 7/3; deviations -4/3, -1/3, 5/3 give s^2 = (16 + 1 + 25) / 9 / 2 = 7/3.
  const auto& p = curves[0].points[0];
  CHECK(p.n == 3);
  CHECK(p.x == doctest::Approx(100.0));
  CHECK(p.mean == doctest::Approx(7.0 / 3.0));
  CHECK(p.se == doctest::Approx(std::sqrt(7.0 / 3.0) / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(curves[0].points[1].se == doctest::Approx(p.se).epsilon(1e-12));
}

TEST_CASE("plots: one point, two legend entries, embedded data, empty input") {
  const fs::path dir = scratch("plot");
  {
    MetricsWriter w(dir / "one.jsonl");
    w.write(sample_record("solo", 0, 0, 50, 1.25));
  }
  emit_plot({dir / "one.jsonl"}, dir / "one.svg");
  const std::string one = slurp(dir / "one.svg");
  CHECK(one.rfind("<svg", 0) == 0);
  CHECK(one.find("solo\t50\t1.25\t0\t1") != std::string::npos);
  std::smatch m;
  const std::string series = one.substr(one.find("class=\"series\""));
  CHECK(std::regex_search(series, m, std::regex("<circle")));

  {
    MetricsWriter w(dir / "two.jsonl");
    w.write(sample_record("other", 0, 0, 60, 2.0));
  }
  emit_plot({dir / "one.jsonl", dir / "two.jsonl"}, dir / "two.svg");
  const std::string two = slurp(dir / "two.svg");
  std::size_t legends = 0;
  for (std::size_t pos = 0; (pos = two.find("class=\"legend\"", pos)) != std::string::npos; ++pos) ++legends;
  CHECK(legends == 2);

  {
    MetricsWriter w(dir / "empty.jsonl");
  }
  CHECK_THROWS_AS(emit_plot({dir / "empty.jsonl"}, dir / "empty.svg"), Error);
  CHECK_THROWS_AS(emit_plot({}, dir / "none.svg"), Error);
}

TEST_CASE("meta-training emits one record per iteration, deterministically") {
  const ExperimentConfig cfg = parse_config(kTiny);
  for (Algo algo : {Algo::kGmps, Algo::kMaml, Algo::kMultitask, Algo::kMultitaskImitation}) {
    const RunResult a = run_meta_train(cfg, algo, 3);
    const RunResult b = run_meta_train(cfg, algo, 3);
    REQUIRE(a.records.size() == 2);
    std::int64_t prev = -1;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].iteration == static_cast<int>(i));
      CHECK(a.records[i].env_steps >= prev);
      prev = a.records[i].env_steps;
      CHECK(a.records[i].post_return.has_value());
      MetricsRecord x = a.records[i], y = b.records[i];
      x.wall_clock = y.wall_clock = 0.0;
      CHECK(to_line(x) == to_line(y));
    }
    CHECK(a.records[0].run_id == "tiny-" + algo_name(algo));
  }
  CHECK_THROWS_AS(parse_algo("reptile"), Error);
}

TEST_CASE("demonstrations from a file are charged and a missing file is an error") {
  const fs::path dir = scratch("demos");
  ExperimentConfig cfg = parse_config(kTiny);
  const TaskSets tasks = make_tasks(cfg, 3);
  const ExpertBundle ex = obtain_experts(cfg, tasks.train, 3);
  const Demos d = collect_demos(cfg, tasks, ex, 3);
  CHECK(demo_steps(d.set) == d.env_steps);
  experts::write_demos(dir / "demos.jsonl", d.set);
  cfg.expert.demos = (dir / "demos.jsonl").string();
  const RunResult from_file = run_meta_train(cfg, Algo::kGmps, 3);
  const RunResult direct = run_meta_train(parse_config(kTiny), Algo::kGmps, 3);
  CHECK(from_file.state.env_steps == direct.state.env_steps);
  CHECK(from_file.state.theta.values() == direct.state.theta.values());

  cfg.expert.demos = (dir / "nope.jsonl").string();
  CHECK_THROWS_AS(run_meta_train(cfg, Algo::kGmps, 3), Error);
}

TEST_CASE("saved parameters and experts load back") {
  const fs::path dir = scratch("saved");
  ExperimentConfig cfg = parse_config(kTiny);
  const RunResult r = run_meta_train(cfg, Algo::kGmps, 3);
  save_theta(dir / "theta.json", Algo::kGmps, 3, r.state);
  const auto [theta, alpha] = load_theta(dir / "theta.json", cfg);
  CHECK(theta.values() == r.state.theta.values());
  CHECK((theta.mask() == r.state.theta.mask()).all());
  CHECK(alpha == doctest::Approx(r.state.alpha()).epsilon(1e-15));
  ExperimentConfig wider = cfg;
  wider.policy.hidden = {9};
  CHECK_THROWS_AS(load_theta(dir / "theta.json", wider), Error);

  const TaskSets tasks = make_tasks(cfg, 3);
  cfg.expert.kind = ExpertKind::kTrained;
  cfg.expert.train.spec.hidden = {8};
  cfg.expert.train.budget = 2 * 10 * 9 * 2;
  const ExpertBundle trained = obtain_experts(cfg, tasks.train, 3);
  CHECK(trained.env_steps == cfg.expert.train.budget);
  save_experts(dir / "experts.json", trained);
  const ExpertBundle back = load_experts(dir / "experts.json", tasks.train);
  REQUIRE(back.trained);
  CHECK(back.env_steps == trained.env_steps);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
  CHECK(back.experts[1].mean_action(x) == trained.experts[1].mean_action(x));
}

TEST_CASE("verification run produces a report with a verdict") {
  const ExperimentConfig cfg = parse_config(kTiny);
  const verify::BoundReport rep = run_verify(cfg.verify, 0);
  CHECK(rep.verdict);
  CHECK(rep.task_epsilon.size() == 3);
}

TEST_CASE("command-line tool end to end") {
  const fs::path dir = scratch("cli");
  std::ofstream(dir / "tiny.yaml") << kTiny;
  const std::string base = "--config " + (dir / "tiny.yaml").string() + " --out " + (dir / "out").string();
  const fs::path log = dir / "log.txt";

  CHECK(run_cli("meta-train --algo gmps " + base, log) == 0);
  const MetricsFile m = read_metrics(dir / "out" / "metrics_gmps_seed3.jsonl");
  CHECK(m.records.size() == 2);
  CHECK(fs::exists(dir / "out" / "theta_gmps_seed3.json"));

  CHECK(run_cli("meta-test --algo gmps " + base, log) == 0);
  CHECK(fs::exists(dir / "out" / "metatest_gmps_seed3.json"));

  CHECK(run_cli("verify-theorem " + base, log) == 0);
  const MetricsFile v = read_metrics(dir / "out" / "verify.jsonl");
  REQUIRE(v.bounds.size() == 1);
  CHECK(slurp(dir / "out" / "verify.jsonl").find("\"verdict\":") != std::string::npos);

  CHECK(run_cli("train-experts " + base, log) == 0);
  CHECK(fs::exists(dir / "out" / "experts_seed3.json"));
  CHECK(run_cli("collect-demos " + base, log) == 0);
  CHECK(fs::exists(dir / "out" / "demos_seed3.jsonl"));
  CHECK(run_cli("plot " + base, log) == 0);
  CHECK(fs::exists(dir / "out" / "curves.svg"));

  CHECK(run_cli("meta-train --algo maml --seed 5 " + base, log) == 0);
  CHECK(fs::exists(dir / "out" / "metrics_maml_seed5.jsonl"));

  CHECK(run_cli("fly " + base, log) != 0);
  CHECK(run_cli("meta-train --bogus " + base, log) != 0);
  CHECK(run_cli("meta-train --algo reptile " + base, log) != 0);
  CHECK(run_cli("meta-train --config " + (dir / "absent.yaml").string(), log) != 0);

  std::ofstream(dir / "typo.yaml") << "meta:\n  leraning_rate: 0.1\n";
  CHECK(run_cli("meta-train --config " + (dir / "typo.yaml").string() + " --out " + (dir / "out").string(), log) != 0);
  CHECK(slurp(log).find("meta.leraning_rate") != std::string::npos);

  std::ofstream(dir / "demos.yaml") << kTiny << "expert:\n  demos: " << (dir / "missing.jsonl").string() << "\n";
  CHECK(run_cli("meta-train --config " + (dir / "demos.yaml").string() + " --out " + (dir / "out").string(), log) != 0);
  CHECK(slurp(log).find("missing.jsonl") != std::string::npos);
}
