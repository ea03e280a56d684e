// Experiment driver: qlsched run --config <file> [overrides...]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qlsched/experiment.hpp"

namespace {

struct RunOptions {
  std::string config;
  std::vector<std::string> policies;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  std::optional<std::string> out;
  std::optional<double> failure_ratio;
  std::optional<std::int64_t> range;
  std::optional<double> gamma;
  std::optional<double> epsilon0;
  std::optional<long> repeater_max;
  bool quiet = false;
};

qlsched::ExperimentPlan build_plan(const RunOptions& o) {
  using qlsched::ConfigError;
  auto plan = qlsched::parse_config_file(o.config);
  if (!o.policies.empty()) {
    plan.policies.clear();
    for (const auto& name : o.policies) {
      auto p = qlsched::parse_policy(name);
      if (!p) throw ConfigError("--policy", "unknown policy '" + name + "'");
      plan.policies.push_back(*p);
    }
  }
  if (o.seed) plan.base_seed = *o.seed;
  if (o.replications) plan.replications = *o.replications;
  if (o.out) plan.output_dir = *o.out;
  if (o.failure_ratio) plan.failure_ratios = {*o.failure_ratio};
  if (o.range) plan.length_range = *o.range;
  if (o.gamma) plan.learner.gamma = *o.gamma;
  if (o.epsilon0) plan.learner.epsilon0 = *o.epsilon0;
  if (o.repeater_max) plan.learner.repeater_threshold = *o.repeater_max;
  plan.validate();
  return plan;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloud task-scheduling simulator with a tabular Q-learning broker"};
  app.require_subcommand(1);

  RunOptions opt;
  auto* run = app.add_subcommand("run", "run an experiment plan and write runs/summary/convergence CSVs");
  run->add_option("--config", opt.config, "YAML experiment plan")->required();
  run->add_option("--policy", opt.policies, "policy to run (repeatable): qlearn random fifo mixed greedy qsch");
  run->add_option("--seed", opt.seed, "base seed");
  run->add_option("--replications", opt.replications, "replications per sweep point");
  run->add_option("--out", opt.out, "output directory");
  run->add_option("--failure-ratio", opt.failure_ratio, "single task failure ratio (replaces the sweep)");
  run->add_option("--range", opt.range, "length discretization range in MI");
  run->add_option("--gamma", opt.gamma, "discount factor");
  run->add_option("--epsilon0", opt.epsilon0, "initial exploration probability");
  run->add_option("--repeater-max", opt.repeater_max, "repeater threshold (cycles)");
  run->add_flag("--quiet", opt.quiet, "suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  qlsched::ExperimentPlan plan;
  try {
    plan = build_plan(opt);
  } catch (const qlsched::ConfigError& e) {
    std::cerr << "qlsched: " << e.what() << '\n';
    return 1;
  }

  try {
    auto progress = [&](const std::string& msg) {
      if (!opt.quiet) std::cerr << "[qlsched] " << msg << '\n';
    };
    const auto result = qlsched::run_plan(plan, progress);
    qlsched::write_outputs(result, plan, plan.output_dir);
    if (!opt.quiet) std::cerr << "[qlsched] wrote " << plan.output_dir << "/{runs,summary,convergence}.csv\n";
  } catch (const std::exception& e) {
    std::cerr << "qlsched: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
