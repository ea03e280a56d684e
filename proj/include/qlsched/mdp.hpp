#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "qlsched/cloud_model.hpp"
#include "qlsched/errors.hpp"

namespace qlsched {

// Flattened state used as a Q-table key.
using StateKey = std::vector<int>;

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (int v : k) {
      h ^= static_cast<std::size_t>(static_cast<unsigned>(v));
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

inline std::string key_to_string(const StateKey& k) {
  std::string s;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(k[i]);
  }
  return s;
}

// Occupied-buffer counts followed by discretized assigned-length classes.
struct SystemState {
  std::vector<int> b;
  std::vector<int> l;

  int num_vms() const { return static_cast<int>(b.size()); }

  StateKey key() const {
    StateKey k(b);
    k.insert(k.end(), l.begin(), l.end());
    return k;
  }

  std::string to_string() const { return key_to_string(key()); }

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

inline constexpr std::int64_t kDefaultLengthRange = 10000;
inline constexpr int kDefaultLengthCap = 40;

inline int discretize_length(std::int64_t total_length, std::int64_t range,
                             int l_cap = kDefaultLengthCap) {
  if (range <= 0) throw DomainError("length range must be > 0");
  if (total_length < 0) throw DomainError("total length must be >= 0");
  if (l_cap < 0) throw DomainError("length class cap must be >= 0");
  return static_cast<int>(std::min<std::int64_t>(total_length / range, l_cap));
}

inline SystemState encode_state(const Cluster& cluster, std::int64_t range,
                                int l_cap = kDefaultLengthCap) {
  SystemState s;
  s.b.resize(cluster.size());
  s.l.resize(cluster.size());
  for (int k = 0; k < cluster.size(); ++k) {
    s.b[k] = cluster.occupied(k);
    s.l[k] = discretize_length(cluster.assigned_length(k), range, l_cap);
  }
  return s;
}

enum class RewardValue : int { negative = -1, zero = 0, positive = 1 };

inline double as_double(RewardValue r) { return static_cast<double>(static_cast<int>(r)); }

// +1 for a least-occupied VM; otherwise -1 for a VM holding the most work;
// otherwise 0. The +1 case is tested first, so a VM that is both wins +1.
inline RewardValue reward(const SystemState& s, int action, std::span<const int> capacity) {
  const int k = s.num_vms();
  if (static_cast<int>(s.l.size()) != k) throw DomainError("state b/l size mismatch");
  if (static_cast<int>(capacity.size()) != k) throw DomainError("capacity size mismatch");
  if (action < 0 || action >= k) throw DomainError("action out of range");
  if (s.b[action] >= capacity[action]) throw DomainError("infeasible action: buffer full");
  const int min_b = *std::min_element(s.b.begin(), s.b.end());
  if (s.b[action] == min_b) return RewardValue::positive;
  const int max_l = *std::max_element(s.l.begin(), s.l.end());
  if (s.l[action] == max_l) return RewardValue::negative;
  return RewardValue::zero;
}

inline RewardValue reward(const SystemState& s, int action, int capacity) {
  const std::vector<int> caps(s.b.size(), capacity);
  return reward(s, action, caps);
}

inline std::vector<int> feasible_actions(const SystemState& s, std::span<const int> capacity) {
  std::vector<int> out;
  for (int k = 0; k < s.num_vms(); ++k)
    if (s.b[k] < capacity[k]) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// Small explicit MDP used as an optimality oracle.
//
// Each epoch one task arrives with length class c ~ arrival and the action
// places it: b[a] += 1, l[a] = min(l[a] + c, C - 1). Independently, each VM
// that was busy at the start of the epoch finishes its head task with
// probability completion_prob: b[k] -= 1 and l[k] drops one class (to 0 when
// the VM empties). When every buffer is full the only action is `defer`
// (index K, reward 0) and the arriving task is dropped.
struct OracleParams {
  int num_vms = 2;
  int capacity = 2;
  int length_classes = 2;
  std::vector<double> arrival{0.5, 0.5};  // over arriving length classes
  double completion_prob = 0.5;
  double gamma = 0.9;
};

// Per-slot completion probability matching a scenario's mean service time.
inline double service_completion_prob(const ScenarioConfig& cfg) {
  const double mean_len = 0.5 * static_cast<double>(cfg.length_min + cfg.length_max);
  return std::min(1.0, cfg.vm_mips * cfg.slot_seconds / mean_len);
}

struct Transition {
  std::size_t next = 0;
  double prob = 0.0;
};

struct OracleMdp {
  OracleParams params;
  std::vector<SystemState> states;
  std::vector<std::vector<int>> actions;                    // per state
  std::vector<std::vector<std::vector<Transition>>> kernel;  // [state][action slot]
  std::vector<std::vector<double>> rewards;                 // [state][action slot]

  int defer_action() const { return params.num_vms; }
  std::size_t size() const { return states.size(); }

  std::size_t index_of(const SystemState& s) const {
    const int radix_b = params.capacity + 1;
    const int radix_l = params.length_classes;
    std::size_t idx = 0;
    for (int v : s.b) idx = idx * radix_b + static_cast<std::size_t>(v);
    for (int v : s.l) idx = idx * radix_l + static_cast<std::size_t>(v);
    return idx;
  }

  std::size_t empty_state() const {
    return index_of(SystemState{std::vector<int>(params.num_vms, 0),
                                std::vector<int>(params.num_vms, 0)});
  }

  // States reachable from `start` under any action sequence, in index order.
  std::vector<std::size_t> reachable_from(std::size_t start) const {
    std::vector<char> seen(size(), 0);
    std::queue<std::size_t> frontier;
    frontier.push(start);
    seen[start] = 1;
    while (!frontier.empty()) {
      const auto s = frontier.front();
      frontier.pop();
      for (const auto& row : kernel[s])
        for (const auto& t : row)
          if (t.prob > 0 && !seen[t.next]) {
            seen[t.next] = 1;
            frontier.push(t.next);
          }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (seen[i]) out.push_back(i);
    return out;
  }
};

inline OracleMdp build_oracle_mdp(const OracleParams& p, std::size_t max_states = 100000) {
  if (p.num_vms < 1 || p.capacity < 1 || p.length_classes < 1)
    throw DomainError("oracle MDP dimensions must be >= 1");
  if (static_cast<int>(p.arrival.size()) != p.length_classes)
    throw DomainError("arrival distribution must have one entry per length class");
  double mass = 0;
  for (double v : p.arrival) {
    if (!(v >= 0 && v <= 1)) throw DomainError("arrival probabilities must lie in [0, 1]");
    mass += v;
  }
  if (std::abs(mass - 1.0) > 1e-9) throw DomainError("arrival distribution must sum to 1");
  if (!(p.completion_prob >= 0 && p.completion_prob <= 1))
    throw DomainError("completion probability must lie in [0, 1]");
  if (!(p.gamma >= 0 && p.gamma < 1)) throw DomainError("gamma must lie in [0, 1)");

  const int K = p.num_vms;
  double count = std::pow(p.capacity + 1.0, K) * std::pow(p.length_classes, K);
  if (count > static_cast<double>(max_states))
    throw CapacityError("oracle MDP would have " + std::to_string(static_cast<long long>(count)) +
                        " states (limit " + std::to_string(max_states) + ")");

  OracleMdp mdp;
  mdp.params = p;
  const auto n = static_cast<std::size_t>(count);
  mdp.states.resize(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    SystemState s{std::vector<int>(K), std::vector<int>(K)};
    std::size_t rest = idx;
    for (int k = K - 1; k >= 0; --k) {
      s.l[k] = static_cast<int>(rest % p.length_classes);
      rest /= p.length_classes;
    }
    for (int k = K - 1; k >= 0; --k) {
      s.b[k] = static_cast<int>(rest % (p.capacity + 1));
      rest /= (p.capacity + 1);
    }
    mdp.states[idx] = std::move(s);
  }

  const std::vector<int> caps(K, p.capacity);
  mdp.actions.resize(n);
  mdp.kernel.resize(n);
  mdp.rewards.resize(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const SystemState& s = mdp.states[idx];
    auto acts = feasible_actions(s, caps);
    if (acts.empty()) acts.push_back(mdp.defer_action());

    std::vector<int> busy;
    for (int k = 0; k < K; ++k)
      if (s.b[k] > 0) busy.push_back(k);

    for (int a : acts) {
      std::map<std::size_t, double> row;
      for (int c = 0; c < p.length_classes; ++c) {
        if (p.arrival[c] == 0.0) continue;
        SystemState placed = s;
        if (a != mdp.defer_action()) {
          placed.b[a] += 1;
          placed.l[a] = std::min(placed.l[a] + c, p.length_classes - 1);
        }
        for (unsigned mask = 0; mask < (1u << busy.size()); ++mask) {
          double prob = p.arrival[c];
          SystemState next = placed;
          for (std::size_t j = 0; j < busy.size(); ++j) {
            const int k = busy[j];
            if (mask & (1u << j)) {
              prob *= p.completion_prob;
              next.b[k] -= 1;
              next.l[k] = next.b[k] == 0 ? 0 : std::max(next.l[k] - 1, 0);
            } else {
              prob *= 1.0 - p.completion_prob;
            }
          }
          if (prob > 0.0) row[mdp.index_of(next)] += prob;
        }
      }
      std::vector<Transition> out;
      out.reserve(row.size());
      for (const auto& [next, prob] : row) out.push_back({next, prob});
      mdp.kernel[idx].push_back(std::move(out));
      mdp.rewards[idx].push_back(a == mdp.defer_action() ? 0.0 : as_double(reward(s, a, caps)));
    }
    mdp.actions[idx] = std::move(acts);
  }
  return mdp;
}

struct ValueIterationResult {
  std::vector<double> values;
  std::vector<int> policy;               // action id per state
  std::vector<std::vector<double>> q;    // [state][action slot]
  std::vector<double> sweep_deltas;      // max-norm change per sweep
};

// Successive approximation of V*(s) = max_a [R(s,a) + gamma sum_s' P V*(s')]
// until the max-norm change drops below tol. Ties go to the lowest action.
inline ValueIterationResult value_iteration(const OracleMdp& mdp, double tol,
                                            std::size_t max_sweeps = 1'000'000) {
  const double gamma = mdp.params.gamma;
  if (!(gamma >= 0 && gamma < 1)) throw DomainError("value iteration needs gamma in [0, 1)");
  if (!(tol > 0)) throw DomainError("tolerance must be > 0");

  const std::size_t n = mdp.size();
  ValueIterationResult res;
  res.values.assign(n, 0.0);
  std::vector<double> next(n);

  auto q_of = [&](std::size_t s, std::size_t slot, const std::vector<double>& v) {
    double acc = 0;
    for (const auto& t : mdp.kernel[s][slot]) acc += t.prob * v[t.next];
    return mdp.rewards[s][slot] + gamma * acc;
  };

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta = 0;
    for (std::size_t s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t slot = 0; slot < mdp.actions[s].size(); ++slot)
        best = std::max(best, q_of(s, slot, res.values));
      next[s] = best;
      delta = std::max(delta, std::abs(best - res.values[s]));
    }
    res.values.swap(next);
    res.sweep_deltas.push_back(delta);
    if (delta < tol) break;
  }

  res.q.resize(n);
  res.policy.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t best_slot = 0;
    res.q[s].resize(mdp.actions[s].size());
    for (std::size_t slot = 0; slot < mdp.actions[s].size(); ++slot) {
      res.q[s][slot] = q_of(s, slot, res.values);
      if (res.q[s][slot] > res.q[s][best_slot] + 1e-12) best_slot = slot;
    }
    res.policy[s] = mdp.actions[s][best_slot];
  }
  return res;
}

// Actions whose Q* is within tol of the best one.
inline std::vector<int> optimal_actions(const OracleMdp& mdp, const ValueIterationResult& vi,
                                        std::size_t s, double tol = 1e-6) {
  const auto& q = vi.q[s];
  const double best = *std::max_element(q.begin(), q.end());
  std::vector<int> out;
  for (std::size_t slot = 0; slot < q.size(); ++slot)
    if (q[slot] >= best - tol) out.push_back(mdp.actions[s][slot]);
  return out;
}

}  // namespace qlsched
