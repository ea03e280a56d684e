#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qlsched/cloud_model.hpp"
#include "qlsched/errors.hpp"
#include "qlsched/mdp.hpp"
#include "qlsched/qlearn.hpp"
#include "qlsched/random.hpp"

namespace qlsched {

enum class PolicyKind { random, fifo, mixed, greedy, qsch, qlearn };

inline constexpr std::array<PolicyKind, 6> kAllPolicies{
    PolicyKind::qlearn, PolicyKind::random, PolicyKind::fifo,
    PolicyKind::mixed,  PolicyKind::greedy, PolicyKind::qsch};

inline std::string to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::random: return "random";
    case PolicyKind::fifo: return "fifo";
    case PolicyKind::mixed: return "mixed";
    case PolicyKind::greedy: return "greedy";
    case PolicyKind::qsch: return "qsch";
    case PolicyKind::qlearn: return "qlearn";
  }
  return "?";
}

inline std::optional<PolicyKind> parse_policy(std::string_view name) {
  for (PolicyKind p : kAllPolicies)
    if (to_string(p) == name) return p;
  return std::nullopt;
}

inline bool is_learning(PolicyKind p) { return p == PolicyKind::qsch || p == PolicyKind::qlearn; }

inline std::vector<int> feasible_vms(const Cluster& c) {
  std::vector<int> out;
  for (int k = 0; k < c.size(); ++k)
    if (c.free_slots(k) > 0) out.push_back(k);
  return out;
}

// Every selector returns nullopt when all buffers are full (defer).

// Uniform draw over all VMs; a full draw is redrawn among VMs with room.
inline std::optional<int> random_select(const Cluster& c, Rng& rng) {
  const auto feasible = feasible_vms(c);
  if (feasible.empty()) return std::nullopt;
  const int k = uniform_index(rng, c.size());
  if (c.free_slots(k) > 0) return k;
  return feasible[uniform_index(rng, static_cast<int>(feasible.size()))];
}

// Earliest-available VM with room; lowest index on ties.
inline std::optional<int> fifo_select(const Cluster& c) {
  std::optional<int> best;
  double best_t = 0;
  for (int k = 0; k < c.size(); ++k) {
    if (c.free_slots(k) <= 0) continue;
    const double t = std::max(c.busy_until(k), c.clock());
    if (!best || t < best_t) {
      best = k;
      best_t = t;
    }
  }
  return best;
}

// Most free buffer slots; lowest index on ties.
inline std::optional<int> greedy_select(const Cluster& c) {
  std::optional<int> best;
  for (int k = 0; k < c.size(); ++k)
    if (c.free_slots(k) > 0 && (!best || c.free_slots(k) > c.free_slots(*best))) best = k;
  return best;
}

// Random draw, reassigned to the most-free VM unless the draw already ties it.
inline std::optional<int> mixed_select(const Cluster& c, Rng& rng) {
  const auto most_free = greedy_select(c);
  if (!most_free) return std::nullopt;
  const int k = uniform_index(rng, c.size());
  if (c.free_slots(k) == c.free_slots(*most_free)) return k;
  return most_free;
}

// ---------------------------------------------------------------------------
// Q-sch: Q-learning over the free-buffer vector only, rewarded by the chosen
// VM's free fraction minus its normalized queueing delay.

struct QschConfig {
  double w_buffer = 0.5;
  double w_wait = 0.5;
};

inline StateKey qsch_state(const Cluster& c) {
  StateKey s(c.size());
  for (int k = 0; k < c.size(); ++k) s[k] = c.free_slots(k);
  return s;
}

// Delay is normalized by the largest delay across VMs (0 when all are idle).
inline double qsch_reward(const Cluster& c, int vm, const QschConfig& cfg = {}) {
  if (vm < 0 || vm >= c.size()) throw DomainError("VM index out of range");
  double max_delay = 0;
  for (int k = 0; k < c.size(); ++k) max_delay = std::max(max_delay, c.backlog_seconds(k));
  const double free_fraction =
      static_cast<double>(c.free_slots(vm)) / static_cast<double>(c.capacity(vm));
  const double delay = max_delay > 0 ? c.backlog_seconds(vm) / max_delay : 0.0;
  return cfg.w_buffer * free_fraction - cfg.w_wait * delay;
}

// Greedy ties go to the lowest index here, unlike the learner's selection.
inline std::optional<int> qsch_select(const Cluster& c, const QTable& table, double epsilon,
                                      Rng& rng) {
  const auto feasible = feasible_vms(c);
  if (feasible.empty()) return std::nullopt;
  if (epsilon > 0.0 && uniform01(rng) < epsilon)
    return feasible[uniform_index(rng, static_cast<int>(feasible.size()))];
  const StateKey s = qsch_state(c);
  int best = feasible.front();
  for (int a : feasible)
    if (table.q(s, a) > table.q(s, best)) best = a;
  return best;
}

// State/reward maps used by the learning environment and the dispatcher.
struct QlFeatures {
  std::int64_t range = kDefaultLengthRange;
  int l_cap = kDefaultLengthCap;

  StateKey key(const Cluster& c) const { return encode_state(c, range, l_cap).key(); }

  double reward(const Cluster& c, int vm) const {
    std::vector<int> caps(c.size());
    for (int k = 0; k < c.size(); ++k) caps[k] = c.capacity(k);
    return as_double(qlsched::reward(encode_state(c, range, l_cap), vm, caps));
  }
};

struct QschFeatures {
  QschConfig cfg;

  StateKey key(const Cluster& c) const { return qsch_state(c); }
  double reward(const Cluster& c, int vm) const { return qsch_reward(c, vm, cfg); }
};

inline std::optional<int> qlearn_select(const Cluster& c, const QTable& table, double epsilon,
                                        Rng& rng, const QlFeatures& f = {}) {
  const auto feasible = feasible_vms(c);
  if (feasible.empty()) return std::nullopt;
  return select_action(f.key(c), feasible, table, epsilon, rng);
}

}  // namespace qlsched
