// Command-line front end: experts, demonstrations, meta-training, held-out
// adaptation, the tabular bound check and learning-curve plots.

#include "gmpslab/cli/config.hpp"
#include "gmpslab/cli/experiment.hpp"
#include "gmpslab/cli/metrics.hpp"
#include "gmpslab/cli/plot.hpp"
#include "gmpslab/error.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

namespace fs = std::filesystem;
using namespace gmpslab;
using namespace gmpslab::cli;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string algo = "gmps";
  std::vector<std::string> inputs;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out;
  std::vector<std::uint64_t> seeds;
};

Context context(const Options& o) {
  Context c;
  c.cfg = load_config(o.config);
  c.out = o.out.empty() ? fs::path(c.cfg.out) : fs::path(o.out);
  c.seeds = o.seed ? std::vector<std::uint64_t>{*o.seed} : c.cfg.seeds;
  fs::create_directories(c.out);
  return c;
}

fs::path seeded(const fs::path& dir, const std::string& stem, std::uint64_t seed, const char* ext) {
  return dir / fmt::format("{}_seed{}{}", stem, seed, ext);
}

ExpertBundle experts_for(const Context& c, const TaskSets& tasks, std::uint64_t seed) {
  const fs::path saved = seeded(c.out, "experts", seed, ".json");
  if (fs::exists(saved)) return load_experts(saved, tasks.train);
  return obtain_experts(c.cfg, tasks.train, seed);
}

void train_experts(const Options& o) {
  const Context c = context(o);
  for (auto seed : c.seeds) {
    const TaskSets tasks = make_tasks(c.cfg, seed);
    const ExpertBundle b = obtain_experts(c.cfg, tasks.train, seed);
    const fs::path path = seeded(c.out, "experts", seed, ".json");
    save_experts(path, b);
    fmt::print("seed {}: {} experts, {} env steps -> {}\n", seed, b.experts.size(), b.env_steps, path.string());
  }
}

void collect(const Options& o) {
  const Context c = context(o);
  for (auto seed : c.seeds) {
    const TaskSets tasks = make_tasks(c.cfg, seed);
    const Demos d = collect_demos(c.cfg, tasks, experts_for(c, tasks, seed), seed);
    const fs::path path = seeded(c.out, "demos", seed, ".jsonl");
    experts::write_demos(path, d.set);
    fmt::print("seed {}: {} env steps of demonstrations -> {}\n", seed, d.env_steps, path.string());
  }
}

void meta_train(const Options& o) {
  const Context c = context(o);
  const Algo algo = parse_algo(o.algo);
  for (auto seed : c.seeds) {
    const TaskSets tasks = make_tasks(c.cfg, seed);
    std::optional<ExpertBundle> ex;
    if (algo == Algo::kGmps || algo == Algo::kMultitaskImitation) ex = experts_for(c, tasks, seed);
    const fs::path metrics = seeded(c.out, "metrics_" + algo_name(algo), seed, ".jsonl");
    MetricsWriter writer(metrics);
    const RunResult res = run_meta_train(
        c.cfg, algo, seed,
        [&](const MetricsRecord& r) {
          writer.write(r);
          fmt::print("{} seed {} it {:4d} steps {:9d} pre {:8.3f} post {:>8} loss {:8.4f}\n", r.run_id, seed, r.iteration,
                     r.env_steps, r.pre_return, r.post_return ? fmt::format("{:.3f}", *r.post_return) : "-",
                     r.bc_loss);
        },
        ex ? &*ex : nullptr);
    const fs::path theta = seeded(c.out, "theta_" + algo_name(algo), seed, ".json");
    save_theta(theta, algo, seed, res.state);
    fmt::print("wrote {} and {}\n", metrics.string(), theta.string());
  }
}

void meta_test_cmd(const Options& o) {
  const Context c = context(o);
  const Algo algo = parse_algo(o.algo);
  for (auto seed : c.seeds) {
    const fs::path theta_path = seeded(c.out, "theta_" + algo_name(algo), seed, ".json");
    const auto [theta, alpha] = load_theta(theta_path, c.cfg);
    const auto mt = run_meta_test(c.cfg, theta, alpha, seed, c.cfg.eval.grad_steps);
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t k = 0; k <= mt.steps(); ++k) {
      steps.push_back({{"grad_steps", k},
                       {"mean_return", mt.mean_return(k)},
                       {"mean_step_reward", mt.mean_step_reward(k)},
                       {"success_rate", mt.mean_success(k)},
                       {"final_distance", mt.mean_final_distance(k)}});
      fmt::print("{} seed {} after {} steps: return {:.3f} success {:.2f} distance {:.3f}\n", algo_name(algo), seed, k,
                 mt.mean_return(k), mt.mean_success(k), mt.mean_final_distance(k));
    }
    const fs::path path = seeded(c.out, "metatest_" + algo_name(algo), seed, ".json");
    std::ofstream(path) << nlohmann::json{{"schema", 1}, {"algo", algo_name(algo)}, {"seed", seed}, {"steps", steps}}.dump(1)
                        << '\n';
  }
}

void verify_theorem(const Options& o) {
  const Context c = context(o);
  const fs::path path = c.out / "verify.jsonl";
  MetricsWriter writer(path);
  int held = 0;
  for (auto seed : c.seeds) {
    const BoundRecord rec{c.cfg.name + "-verify", seed, run_verify(c.cfg.verify, seed)};
    writer.write(rec);
    held += rec.report.verdict ? 1 : 0;
    fmt::print("seed {}: eps {:.4g} delta {:.4g} J* {:.4f} J {:.4f} slack {:.4g} verdict {}\n", seed,
               rec.report.epsilon, rec.report.delta, rec.report.j_expert, rec.report.j_adapted, rec.report.slack,
               rec.report.verdict);
  }
  fmt::print("bound held on {}/{} seeds -> {}\n", held, c.seeds.size(), path.string());
}

void plot(const Options& o) {
  std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
  fs::path out_dir = o.out;
  if (!o.config.empty()) {
    const Context c = context(o);
    out_dir = c.out;
    if (inputs.empty()) {
      for (const auto& e : fs::directory_iterator(c.out)) {
        const auto name = e.path().filename().string();
        if (name.rfind("metrics_", 0) == 0 && e.path().extension() == ".jsonl") inputs.push_back(e.path());
      }
      std::sort(inputs.begin(), inputs.end());
    }
  }
  if (out_dir.empty()) out_dir = ".";
  fs::create_directories(out_dir);
  for (const auto& p : inputs) {
    const auto f = read_metrics(p);
    if (f.truncated) fmt::print(stderr, "warning: {}\n", *f.truncated);
  }
  const fs::path svg = out_dir / "curves.svg";
  emit_plot(inputs, svg);
  fmt::print("wrote {}\n", svg.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided meta-policy search lab"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool need_config = true) {
    auto* opt = sub->add_option("--config", o.config, "experiment config (YAML)");
    if (need_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run only this seed");
    sub->add_option("--out", o.out, "output directory (overrides the config)");
  };
  common(app.add_subcommand("train-experts", "train or script the per-task experts"));
  common(app.add_subcommand("collect-demos", "roll out the experts and store labelled demonstrations"));
  auto* train = app.add_subcommand("meta-train", "meta-train and write per-iteration metrics");
  common(train);
  train->add_option("--algo", o.algo, "gmps, maml, multitask or multitask-imitation")
      ->check(CLI::IsMember({"gmps", "maml", "multitask", "multitask-imitation"}));
  auto* test = app.add_subcommand("meta-test", "adapt saved parameters on the held-out tasks");
  common(test);
  test->add_option("--algo", o.algo, "which saved run to load")
      ->check(CLI::IsMember({"gmps", "maml", "multitask", "multitask-imitation"}));
  common(app.add_subcommand("verify-theorem", "check the imitation bound on random tabular families"));
  auto* pl = app.add_subcommand("plot", "learning curves with standard-error bands");
  common(pl, false);
  pl->add_option("metrics", o.inputs, "metrics files (default: every metrics_*.jsonl under --out)");

  CLI11_PARSE(app, argc, argv);
  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train-experts") train_experts(o);
    else if (cmd == "collect-demos") collect(o);
    else if (cmd == "meta-train") meta_train(o);
    else if (cmd == "meta-test") meta_test_cmd(o);
    else if (cmd == "verify-theorem") verify_theorem(o);
    else if (cmd == "plot") plot(o);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
