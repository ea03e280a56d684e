#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "qlsched/cloud_model.hpp"
#include "qlsched/environment.hpp"
#include "qlsched/errors.hpp"
#include "qlsched/metrics.hpp"
#include "qlsched/policies.hpp"
#include "qlsched/qlearn.hpp"
#include "qlsched/random.hpp"
#include "qlsched/simulation.hpp"
#include "qlsched/workload.hpp"

namespace qlsched {

struct ExperimentPlan {
  ScenarioConfig scenario;
  std::vector<PolicyKind> policies{kAllPolicies.begin(), kAllPolicies.end()};
  std::vector<int> task_counts;       // empty: scenario.num_tasks
  std::vector<int> buffer_sizes;      // empty: scenario.buffer_max
  std::vector<double> failure_ratios{0.0};
  int replications = 20;
  std::uint64_t base_seed = 1;
  LearnerConfig learner;
  std::int64_t length_range = kDefaultLengthRange;
  int length_cap = kDefaultLengthCap;
  QschConfig qsch;
  int max_attempts = 10;
  std::string output_dir = "out";

  void normalize() {
    if (task_counts.empty()) task_counts.push_back(scenario.num_tasks);
    if (buffer_sizes.empty()) buffer_sizes.push_back(scenario.buffer_max);
  }

  void validate() const {
    scenario.validate();
    learner.validate();
    if (policies.empty()) throw ConfigError("policies", "must not be empty");
    if (task_counts.empty()) throw ConfigError("task_counts", "must not be empty");
    if (buffer_sizes.empty()) throw ConfigError("buffer_sizes", "must not be empty");
    if (failure_ratios.empty()) throw ConfigError("failure_ratios", "must not be empty");
    for (int n : task_counts)
      if (n < 1) throw ConfigError("task_counts", "entries must be >= 1");
    for (int b : buffer_sizes)
      if (b < 1) throw ConfigError("buffer_sizes", "entries must be >= 1");
    for (double f : failure_ratios)
      if (!(f >= 0 && f <= 1)) throw ConfigError("failure_ratios", "entries must be in [0, 1]");
    if (replications < 1) throw ConfigError("replications", "must be >= 1");
    if (length_range < 1) throw ConfigError("range", "must be >= 1");
    if (length_cap < 0) throw ConfigError("length_cap", "must be >= 0");
    if (max_attempts < 1) throw ConfigError("max_attempts", "must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// YAML config

namespace detail {

template <class T>
T yaml_get(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key, "malformed value");
  }
}

inline void check_keys(const YAML::Node& node, const std::string& prefix,
                       const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
  }
}

inline void parse_scenario(const YAML::Node& n, ScenarioConfig& s) {
  check_keys(n, "scenario",
             {"preset", "num_tasks", "length_min", "length_max", "num_vms", "vm_mips", "vm_ram_mb",
              "vm_bandwidth_mbps", "buffer_min", "buffer_max", "num_pes", "num_datacenters",
              "num_hosts", "arrival_mode", "arrival_mean", "arrival_max", "arrival_persistence",
              "slot_seconds"});
  if (n["preset"]) {
    const auto p = yaml_get<std::string>(n["preset"], "scenario.preset");
    if (p == "scenario1") s = ScenarioConfig::scenario1();
    else if (p == "scenario2") s = ScenarioConfig::scenario2();
    else throw ConfigError("scenario.preset", "unknown preset '" + p + "'");
  }
  auto set = [&](const char* key, auto& field) {
    if (n[key]) field = yaml_get<std::remove_reference_t<decltype(field)>>(n[key], std::string("scenario.") + key);
  };
  set("num_tasks", s.num_tasks);
  set("length_min", s.length_min);
  set("length_max", s.length_max);
  set("num_vms", s.num_vms);
  set("vm_mips", s.vm_mips);
  set("vm_ram_mb", s.vm_ram_mb);
  set("vm_bandwidth_mbps", s.vm_bandwidth_mbps);
  set("buffer_min", s.buffer_min);
  set("buffer_max", s.buffer_max);
  set("num_pes", s.num_pes);
  set("num_datacenters", s.num_datacenters);
  set("num_hosts", s.num_hosts);
  set("arrival_mean", s.arrival_mean);
  set("arrival_max", s.arrival_max);
  set("arrival_persistence", s.arrival_persistence);
  set("slot_seconds", s.slot_seconds);
  if (n["arrival_mode"]) {
    const auto m = yaml_get<std::string>(n["arrival_mode"], "scenario.arrival_mode");
    if (m == "iid") s.arrival_mode = ArrivalMode::iid;
    else if (m == "markov") s.arrival_mode = ArrivalMode::markov;
    else throw ConfigError("scenario.arrival_mode", "expected iid or markov");
  }
}

inline void parse_learner(const YAML::Node& n, LearnerConfig& l) {
  check_keys(n, "learner",
             {"gamma", "epsilon0", "total_cycles", "repeater_max", "lr_exponent",
              "episodes_per_cycle", "max_steps_per_episode"});
  auto set = [&](const char* key, auto& field) {
    if (n[key]) field = yaml_get<std::remove_reference_t<decltype(field)>>(n[key], std::string("learner.") + key);
  };
  set("gamma", l.gamma);
  set("epsilon0", l.epsilon0);
  set("total_cycles", l.total_cycles);
  set("repeater_max", l.repeater_threshold);
  set("lr_exponent", l.lr_exponent);
  set("episodes_per_cycle", l.episodes_per_cycle);
  set("max_steps_per_episode", l.max_steps_per_episode);
}

}  // namespace detail

// Parses a YAML experiment description. Omitted keys keep their defaults;
// unknown keys and out-of-range values raise ConfigError naming the key.
inline ExperimentPlan parse_config(std::istream& in) {
  YAML::Node root;
  try {
    root = YAML::Load(in);
  } catch (const YAML::Exception& e) {
    throw ConfigError("<file>", e.what());
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  detail::check_keys(root, "",
                     {"scenario", "policies", "task_counts", "buffer_sizes", "failure_ratios",
                      "replications", "seed", "output", "range", "length_cap", "max_attempts",
                      "learner", "qsch"});

  ExperimentPlan plan;
  if (root["scenario"]) detail::parse_scenario(root["scenario"], plan.scenario);
  if (root["learner"]) detail::parse_learner(root["learner"], plan.learner);
  if (root["qsch"]) {
    detail::check_keys(root["qsch"], "qsch", {"w_buffer", "w_wait"});
    if (root["qsch"]["w_buffer"]) plan.qsch.w_buffer = detail::yaml_get<double>(root["qsch"]["w_buffer"], "qsch.w_buffer");
    if (root["qsch"]["w_wait"]) plan.qsch.w_wait = detail::yaml_get<double>(root["qsch"]["w_wait"], "qsch.w_wait");
  }
  if (root["policies"]) {
    plan.policies.clear();
    for (const auto& name : detail::yaml_get<std::vector<std::string>>(root["policies"], "policies")) {
      auto p = parse_policy(name);
      if (!p) throw ConfigError("policies", "unknown policy '" + name + "'");
      plan.policies.push_back(*p);
    }
  }
  if (root["task_counts"]) plan.task_counts = detail::yaml_get<std::vector<int>>(root["task_counts"], "task_counts");
  if (root["buffer_sizes"]) plan.buffer_sizes = detail::yaml_get<std::vector<int>>(root["buffer_sizes"], "buffer_sizes");
  if (root["failure_ratios"]) plan.failure_ratios = detail::yaml_get<std::vector<double>>(root["failure_ratios"], "failure_ratios");
  if (root["replications"]) plan.replications = detail::yaml_get<int>(root["replications"], "replications");
  if (root["seed"]) plan.base_seed = detail::yaml_get<std::uint64_t>(root["seed"], "seed");
  if (root["output"]) plan.output_dir = detail::yaml_get<std::string>(root["output"], "output");
  if (root["range"]) plan.length_range = detail::yaml_get<std::int64_t>(root["range"], "range");
  if (root["length_cap"]) plan.length_cap = detail::yaml_get<int>(root["length_cap"], "length_cap");
  if (root["max_attempts"]) plan.max_attempts = detail::yaml_get<int>(root["max_attempts"], "max_attempts");

  plan.normalize();
  plan.validate();
  return plan;
}

inline ExperimentPlan parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Running

struct SweepPoint {
  int tasks = 0;
  int buffer = 0;
  double failure_ratio = 0.0;
};

struct RunRow {
  PolicyKind policy{};
  std::uint64_t seed = 0;
  SweepPoint point;
  MetricsReport report;
};

struct SummaryRow {
  PolicyKind policy{};
  SweepPoint point;
  AggregateReport agg;
};

struct ConvergenceRow {
  PolicyKind policy{};
  SweepPoint point;
  CycleStats stats;
};

struct PlanResult {
  std::vector<RunRow> runs;
  std::vector<SummaryRow> summary;
  std::vector<ConvergenceRow> convergence;
};

inline SimulationConfig make_simulation_config(const ExperimentPlan& plan, const SweepPoint& pt) {
  SimulationConfig cfg;
  cfg.vms = make_vms(plan.scenario, pt.buffer);
  cfg.slot_seconds = plan.scenario.slot_seconds;
  cfg.failure_ratio = pt.failure_ratio;
  cfg.max_attempts = plan.max_attempts;
  return cfg;
}

inline ScenarioConfig workload_config(const ExperimentPlan& plan, const SweepPoint& pt) {
  ScenarioConfig s = plan.scenario;
  s.num_tasks = pt.tasks;
  return s;
}

inline std::uint64_t workload_seed(const ExperimentPlan& plan, int replication) {
  return plan.base_seed + static_cast<std::uint64_t>(replication);
}

inline std::uint64_t point_seed(const ExperimentPlan& plan, const SweepPoint& pt) {
  std::uint64_t s = mix_seed(plan.base_seed, static_cast<std::uint64_t>(pt.tasks));
  s = mix_seed(s, static_cast<std::uint64_t>(pt.buffer));
  return mix_seed(s, static_cast<std::uint64_t>(std::llround(pt.failure_ratio * 1e6)));
}

// Learning policies are trained once per sweep point on fresh workloads from
// the same generator, then evaluated greedily on the replication workloads.
struct TrainedPolicies {
  std::optional<TrainResult> qlearn;
  std::optional<TrainResult> qsch;
};

inline QlFeatures ql_features(const ExperimentPlan& plan) {
  return QlFeatures{plan.length_range, plan.length_cap};
}

inline TrainResult train_policy(const ExperimentPlan& plan, const SweepPoint& pt, PolicyKind kind) {
  const std::uint64_t seed = mix_seed(point_seed(plan, pt), 0x7ea1 + static_cast<std::uint64_t>(kind));
  if (kind == PolicyKind::qlearn) {
    SchedulingEnv<QlFeatures> env(make_simulation_config(plan, pt), workload_config(plan, pt),
                                  ql_features(plan));
    return train(env, plan.learner, seed);
  }
  if (kind == PolicyKind::qsch) {
    SchedulingEnv<QschFeatures> env(make_simulation_config(plan, pt), workload_config(plan, pt),
                                    QschFeatures{plan.qsch});
    return train(env, plan.learner, seed);
  }
  throw DomainError("policy " + to_string(kind) + " does not learn");
}

inline TrainedPolicies train_point(const ExperimentPlan& plan, const SweepPoint& pt) {
  TrainedPolicies t;
  for (PolicyKind p : plan.policies) {
    if (p == PolicyKind::qlearn && !t.qlearn) t.qlearn = train_policy(plan, pt, p);
    if (p == PolicyKind::qsch && !t.qsch) t.qsch = train_policy(plan, pt, p);
  }
  return t;
}

// Simulates one replication under `kind` and returns its metrics.
inline MetricsReport run_replication(const ExperimentPlan& plan, const SweepPoint& pt,
                                     PolicyKind kind, int replication,
                                     const TrainedPolicies& trained) {
  const std::uint64_t wseed = workload_seed(plan, replication);
  Simulation sim(make_simulation_config(plan, pt), generate_workload(workload_config(plan, pt), wseed),
                 mix_seed(wseed, 0xfa11));
  Rng rng(mix_seed(wseed, 0x9000 + static_cast<std::uint64_t>(kind)));
  const QlFeatures features = ql_features(plan);

  std::function<std::optional<int>(const Cluster&)> choose;
  switch (kind) {
    case PolicyKind::random: choose = [&](const Cluster& c) { return random_select(c, rng); }; break;
    case PolicyKind::fifo: choose = [](const Cluster& c) { return fifo_select(c); }; break;
    case PolicyKind::mixed: choose = [&](const Cluster& c) { return mixed_select(c, rng); }; break;
    case PolicyKind::greedy: choose = [](const Cluster& c) { return greedy_select(c); }; break;
    case PolicyKind::qlearn:
      if (!trained.qlearn) throw DomainError("qlearn policy has not been trained");
      choose = [&](const Cluster& c) { return qlearn_select(c, trained.qlearn->table, 0.0, rng, features); };
      break;
    case PolicyKind::qsch:
      if (!trained.qsch) throw DomainError("qsch policy has not been trained");
      choose = [&](const Cluster& c) { return qsch_select(c, trained.qsch->table, 0.0, rng); };
      break;
  }
  const auto& records = sim.run([&](const Cluster& c, const TaskSpec&) {
    auto vm = choose(c);
    if (!vm) throw AllBuffersFull();
    return *vm;
  });
  return compute_report(records, sim.cluster().specs());
}

inline std::vector<SweepPoint> sweep_points(const ExperimentPlan& plan) {
  std::vector<SweepPoint> pts;
  for (double f : plan.failure_ratios)
    for (int b : plan.buffer_sizes)
      for (int n : plan.task_counts) pts.push_back(SweepPoint{n, b, f});
  return pts;
}

// Runs every (sweep point, policy, replication) in a fixed order.
inline PlanResult run_plan(const ExperimentPlan& plan,
                           const std::function<void(const std::string&)>& progress = {}) {
  plan.validate();
  PlanResult out;
  for (const SweepPoint& pt : sweep_points(plan)) {
    if (progress)
      progress("tasks=" + std::to_string(pt.tasks) + " buffer=" + std::to_string(pt.buffer) +
               " failure=" + std::to_string(pt.failure_ratio));
    const TrainedPolicies trained = train_point(plan, pt);
    for (PolicyKind p : plan.policies) {
      const TrainResult* tr = p == PolicyKind::qlearn ? (trained.qlearn ? &*trained.qlearn : nullptr)
                              : p == PolicyKind::qsch ? (trained.qsch ? &*trained.qsch : nullptr)
                                                      : nullptr;
      if (tr)
        for (const auto& st : tr->trace) out.convergence.push_back(ConvergenceRow{p, pt, st});

      std::vector<MetricsReport> reports;
      for (int r = 0; r < plan.replications; ++r) {
        reports.push_back(run_replication(plan, pt, p, r, trained));
        out.runs.push_back(RunRow{p, workload_seed(plan, r), pt, reports.back()});
      }
      out.summary.push_back(SummaryRow{p, pt, aggregate(reports)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline void write_runs_csv(std::ostream& out, const std::vector<RunRow>& rows, int num_vms) {
  out << "policy,seed,tasks,avg_response_s,avg_wait_s,makespan_s";
  for (int k = 0; k < num_vms; ++k) out << ",util_vm" << k;
  for (int k = 0; k < num_vms; ++k) out << ",load_vm" << k;
  out << ",aborts,buffer_size,failure_ratio\n";
  for (const auto& r : rows) {
    out << to_string(r.policy) << ',' << r.seed << ',' << r.point.tasks << ','
        << detail::fmt(r.report.avg_response_s) << ',' << detail::fmt(r.report.avg_wait_s) << ','
        << detail::fmt(r.report.makespan_s);
    for (double u : r.report.utilization) out << ',' << detail::fmt(u);
    for (double l : r.report.load_share) out << ',' << detail::fmt(l);
    out << ',' << r.report.abort_count << ',' << r.point.buffer << ','
        << detail::fmt(r.point.failure_ratio) << '\n';
  }
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, int num_vms) {
  out << "policy,tasks,buffer_size,failure_ratio,replications,avg_response_mean,avg_response_sd,"
         "avg_wait_mean,avg_wait_sd,makespan_mean,makespan_sd";
  for (int k = 0; k < num_vms; ++k) out << ",util_vm" << k << "_mean";
  for (int k = 0; k < num_vms; ++k) out << ",load_vm" << k << "_mean";
  out << ",aborts_mean\n";
  for (const auto& r : rows) {
    const auto& a = r.agg;
    out << to_string(r.policy) << ',' << r.point.tasks << ',' << r.point.buffer << ','
        << detail::fmt(r.point.failure_ratio) << ',' << a.replications << ','
        << detail::fmt(a.avg_response_s.mean) << ',' << detail::fmt(a.avg_response_s.sd) << ','
        << detail::fmt(a.avg_wait_s.mean) << ',' << detail::fmt(a.avg_wait_s.sd) << ','
        << detail::fmt(a.makespan_s.mean) << ',' << detail::fmt(a.makespan_s.sd);
    for (const auto& u : a.utilization) out << ',' << detail::fmt(u.mean);
    for (const auto& l : a.load_share) out << ',' << detail::fmt(l.mean);
    out << ',' << detail::fmt(a.abort_count.mean) << '\n';
  }
}

inline void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows) {
  out << "policy,tasks,buffer_size,failure_ratio,cycle,epsilon,avg_wait_s,mean_reward,states\n";
  for (const auto& r : rows)
    out << to_string(r.policy) << ',' << r.point.tasks << ',' << r.point.buffer << ','
        << detail::fmt(r.point.failure_ratio) << ',' << r.stats.cycle << ','
        << detail::fmt(r.stats.epsilon) << ',' << detail::fmt(r.stats.mean_episode_metric) << ','
        << detail::fmt(r.stats.mean_reward) << ',' << r.stats.states << '\n';
}

inline void write_outputs(const PlanResult& result, const ExperimentPlan& plan,
                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write '" + (dir / name).string() + "'");
    return f;
  };
  {
    auto f = open("runs.csv");
    write_runs_csv(f, result.runs, plan.scenario.num_vms);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, result.summary, plan.scenario.num_vms);
  }
  {
    auto f = open("convergence.csv");
    write_convergence_csv(f, result.convergence);
  }
}

}  // namespace qlsched
