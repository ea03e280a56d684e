#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "qlsched/errors.hpp"
#include "qlsched/mdp.hpp"
#include "qlsched/random.hpp"

namespace qlsched {

struct QEntry {
  double q = 0.0;
  std::uint64_t visits = 0;

  friend bool operator==(const QEntry&, const QEntry&) = default;
};

// Sparse table: entries are materialized on first update and read as 0
// otherwise.
class QTable {
 public:
  using Row = std::map<int, QEntry>;

  double q(const StateKey& s, int a) const {
    const Row* r = row(s);
    if (!r) return 0.0;
    auto it = r->find(a);
    return it == r->end() ? 0.0 : it->second.q;
  }

  std::uint64_t visits(const StateKey& s, int a) const {
    const Row* r = row(s);
    if (!r) return 0;
    auto it = r->find(a);
    return it == r->end() ? 0 : it->second.visits;
  }

  const Row* row(const StateKey& s) const {
    auto it = table_.find(s);
    return it == table_.end() ? nullptr : &it->second.row;
  }

  // Mutable access marks the state as touched (see take_touched).
  QEntry& entry(const StateKey& s, int a) {
    auto it = table_.try_emplace(s).first;
    if (!it->second.touched) {
      it->second.touched = true;
      touched_.push_back(&it->first);
    }
    return it->second.row[a];
  }

  // States written through entry() since the previous call.
  std::vector<const StateKey*> take_touched() {
    std::vector<const StateKey*> out;
    out.swap(touched_);
    for (const StateKey* k : out) table_.find(*k)->second.touched = false;
    return out;
  }

  std::size_t state_count() const { return table_.size(); }

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& [_, slot] : table_) n += slot.row.size();
    return n;
  }

  double max_abs_q() const {
    double m = 0;
    for (const auto& [_, slot] : table_)
      for (const auto& [a, e] : slot.row) m = std::max(m, std::abs(e.q));
    return m;
  }

  // Best materialized action for s (lowest index on ties).
  std::optional<int> greedy_action(const StateKey& s) const {
    const Row* r = row(s);
    if (!r || r->empty()) return std::nullopt;
    auto best = r->begin();
    for (auto it = r->begin(); it != r->end(); ++it)
      if (it->second.q > best->second.q) best = it;
    return best->first;
  }

  std::map<StateKey, int> greedy_policy() const {
    std::map<StateKey, int> out;
    for (const auto& [s, slot] : table_)
      if (auto a = greedy_action(s)) out.emplace(s, *a);
    return out;
  }

  // CSV with columns state,action,q,visits; rows sorted by state then action.
  void write_csv(std::ostream& out) const {
    std::map<StateKey, const Row*> sorted;
    for (const auto& [s, slot] : table_) sorted.emplace(s, &slot.row);
    const auto old_prec = out.precision(17);
    out << "state,action,q,visits\n";
    for (const auto& [s, r] : sorted)
      for (const auto& [a, e] : *r) out << key_to_string(s) << ',' << a << ',' << e.q << ',' << e.visits << '\n';
    out.precision(old_prec);
  }

  friend bool operator==(const QTable& x, const QTable& y) {
    if (x.table_.size() != y.table_.size()) return false;
    for (const auto& [s, slot] : x.table_) {
      const Row* other = y.row(s);
      if (!other || *other != slot.row) return false;
    }
    return true;
  }

  QTable() = default;
  QTable(const QTable& o) : table_(o.table_) { rebuild_touched(); }
  QTable& operator=(const QTable& o) {
    table_ = o.table_;
    rebuild_touched();
    return *this;
  }
  QTable(QTable&&) noexcept = default;
  QTable& operator=(QTable&&) noexcept = default;

 private:
  struct Slot {
    Row row;
    bool touched = false;
  };

  void rebuild_touched() {
    touched_.clear();
    for (const auto& [s, slot] : table_)
      if (slot.touched) touched_.push_back(&s);
  }

  std::unordered_map<StateKey, Slot, StateKeyHash> table_;
  std::vector<const StateKey*> touched_;  // keys live in table_'s nodes
};

inline constexpr double kDefaultLrExponent = 0.65;

// beta = 1 / (1 + visits^exponent)
inline double learning_rate(std::uint64_t visits, double exponent = kDefaultLrExponent) {
  return 1.0 / (1.0 + std::pow(static_cast<double>(visits), exponent));
}

// Epsilon-greedy over `feasible`; greedy ties are broken uniformly at random.
inline int select_action(const StateKey& s, std::span<const int> feasible, const QTable& table,
                         double epsilon, Rng& rng) {
  if (feasible.empty()) throw AllBuffersFull();
  if (epsilon > 0.0 && uniform01(rng) < epsilon)
    return feasible[uniform_index(rng, static_cast<int>(feasible.size()))];

  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> ties;
  for (int a : feasible) {
    const double v = table.q(s, a);
    if (v > best) {
      best = v;
      ties.assign(1, a);
    } else if (v == best) {
      ties.push_back(a);
    }
  }
  if (ties.size() == 1) return ties.front();
  return ties[uniform_index(rng, static_cast<int>(ties.size()))];
}

inline double max_q(const QTable& table, const StateKey& s, std::span<const int> actions) {
  if (actions.empty()) return 0.0;
  double m = -std::numeric_limits<double>::infinity();
  for (int a : actions) m = std::max(m, table.q(s, a));
  return m;
}

// q(s,a) <- (1 - beta) q(s,a) + beta [r + gamma max_a' q(s',a')], with beta
// from the visit count before this update. Terminal transitions drop the
// bootstrap term. Returns the new q(s,a).
inline double update_q(QTable& table, const StateKey& s, int a, double r, const StateKey& s_next,
                       std::span<const int> next_feasible, double gamma, bool terminal = false,
                       double lr_exponent = kDefaultLrExponent) {
  const double bootstrap = terminal ? 0.0 : max_q(table, s_next, next_feasible);
  QEntry& e = table.entry(s, a);
  const double beta = learning_rate(e.visits, lr_exponent);
  e.q = (1.0 - beta) * e.q + beta * (r + gamma * bootstrap);
  ++e.visits;
  assert(std::abs(r) > 1.0 || std::abs(e.q) <= 1.0 / (1.0 - gamma) + 1e-9);
  return e.q;
}

// Linear decay from epsilon0 at cycle 0 to 0 at total_cycles.
inline double decay_epsilon(double epsilon0, long cycle, long total_cycles) {
  if (total_cycles <= 0) throw DomainError("total_cycles must be > 0");
  if (cycle < 0) throw DomainError("cycle must be >= 0");
  if (cycle >= total_cycles) return 0.0;
  return epsilon0 * (1.0 - static_cast<double>(cycle) / static_cast<double>(total_cycles));
}

enum class ConvergenceVerdict { proceed, stop };

struct ConvergenceMonitor {
  long repeater = 0;
  bool has_snapshot = false;
  std::unordered_map<StateKey, int, StateKeyHash> best_actions;  // per visited state
};

// Stops once the greedy action of every visited state matches the previous
// cycle's snapshot, or once the repeater budget is exhausted. Only states
// written since the last call can have changed, so only those are compared.
inline ConvergenceVerdict check_convergence(ConvergenceMonitor& m, QTable& table, long threshold) {
  if (m.repeater > threshold) return ConvergenceVerdict::stop;
  bool changed = !m.has_snapshot;
  for (const StateKey* s : table.take_touched()) {
    const auto a = table.greedy_action(*s);
    if (!a) continue;
    auto [it, inserted] = m.best_actions.try_emplace(*s, *a);
    if (inserted || it->second != *a) {
      it->second = *a;
      changed = true;
    }
  }
  if (m.has_snapshot && !changed) return ConvergenceVerdict::stop;
  m.has_snapshot = true;
  ++m.repeater;
  return ConvergenceVerdict::proceed;
}

struct LearnerConfig {
  double gamma = 0.9;
  double epsilon0 = 1.0;
  long total_cycles = 10000;
  long repeater_threshold = 500;
  double lr_exponent = kDefaultLrExponent;
  int episodes_per_cycle = 20;
  long max_steps_per_episode = 0;  // 0: run to the terminal state

  void validate() const {
    if (!(gamma >= 0 && gamma < 1)) throw ConfigError("gamma", "must be in [0, 1)");
    if (!(epsilon0 >= 0 && epsilon0 <= 1)) throw ConfigError("epsilon0", "must be in [0, 1]");
    if (total_cycles < 1) throw ConfigError("total_cycles", "must be >= 1");
    if (repeater_threshold < 1) throw ConfigError("repeater_max", "must be >= 1");
    if (!(lr_exponent > 0)) throw ConfigError("lr_exponent", "must be > 0");
    if (episodes_per_cycle < 1) throw ConfigError("episodes_per_cycle", "must be >= 1");
    if (max_steps_per_episode < 0) throw ConfigError("max_steps_per_episode", "must be >= 0");
  }
};

struct StepResult {
  double reward = 0.0;
  StateKey next;
  bool terminal = false;
};

template <class E>
concept LearningEnvironment = requires(E env, Rng& rng, int a) {
  { env.reset(rng) } -> std::convertible_to<StateKey>;
  { env.feasible_actions() } -> std::convertible_to<std::vector<int>>;
  { env.step(a, rng) } -> std::same_as<StepResult>;
};

struct CycleStats {
  long cycle = 0;
  double epsilon = 0.0;
  double mean_reward = 0.0;          // per step
  double mean_episode_metric = 0.0;  // env-defined, e.g. average waiting time
  std::size_t states = 0;
};

struct TrainResult {
  QTable table;
  std::map<StateKey, int> policy;
  std::vector<CycleStats> trace;
  long cycles = 0;
  bool stable = false;  // stopped because the greedy policy stopped changing
  double max_abs_q_seen = 0.0;
};

// Episodic Q-learning: per episode, reset, then select/act/update until the
// environment reports a terminal state; after each cycle of episodes decay
// epsilon and consult the convergence monitor.
template <LearningEnvironment Env>
TrainResult train(Env& env, const LearnerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  TrainResult out;
  ConvergenceMonitor monitor;

  for (long cycle = 0;; ++cycle) {
    const double eps = decay_epsilon(cfg.epsilon0, cycle, cfg.total_cycles);
    double reward_sum = 0;
    long steps = 0;
    double metric_sum = 0;

    for (int ep = 0; ep < cfg.episodes_per_cycle; ++ep) {
      StateKey s = env.reset(rng);
      for (long t = 0;; ++t) {
        const std::vector<int> feasible = env.feasible_actions();
        const int a = select_action(s, feasible, out.table, eps, rng);
        StepResult res = env.step(a, rng);
        const std::vector<int> next_feasible = env.feasible_actions();
        const double q = update_q(out.table, s, a, res.reward, res.next, next_feasible, cfg.gamma,
                                  res.terminal, cfg.lr_exponent);
        out.max_abs_q_seen = std::max(out.max_abs_q_seen, std::abs(q));
        reward_sum += res.reward;
        ++steps;
        s = std::move(res.next);
        if (res.terminal) break;
        if (cfg.max_steps_per_episode > 0 && t + 1 >= cfg.max_steps_per_episode) break;
      }
      if constexpr (requires { env.episode_metric(); }) metric_sum += env.episode_metric();
    }

    CycleStats st;
    st.cycle = cycle;
    st.epsilon = eps;
    st.mean_reward = steps ? reward_sum / static_cast<double>(steps) : 0.0;
    st.mean_episode_metric = metric_sum / cfg.episodes_per_cycle;
    st.states = out.table.state_count();
    out.trace.push_back(st);
    out.cycles = cycle + 1;

    const bool stable_before = monitor.has_snapshot;
    const auto verdict = check_convergence(monitor, out.table, cfg.repeater_threshold);
    if (verdict == ConvergenceVerdict::stop) {
      out.stable = stable_before && monitor.repeater <= cfg.repeater_threshold;
      break;
    }
    if (cycle + 1 >= cfg.total_cycles) break;
  }
  out.policy = out.table.greedy_policy();
  return out;
}

}  // namespace qlsched
