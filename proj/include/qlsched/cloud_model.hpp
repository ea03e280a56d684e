#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "qlsched/errors.hpp"
#include "qlsched/random.hpp"
#include "qlsched/workload.hpp"

namespace qlsched {

struct VmSpec {
  int index = 0;
  double mips = 1000.0;
  int buffer_capacity = 1;  // N, counts in-service tasks too
  int pes = 1;              // independent single-PE servers sharing the buffer
  double ram_mb = 0.0;
  double bandwidth_mbps = 0.0;

  void validate() const {
    if (!(mips > 0)) throw DomainError("VM mips must be > 0");
    if (buffer_capacity < 1) throw DomainError("VM buffer capacity must be >= 1");
    if (pes < 1) throw DomainError("VM must have at least one PE");
  }
};

inline std::vector<VmSpec> make_vms(const ScenarioConfig& cfg, int buffer_capacity) {
  std::vector<VmSpec> vms(cfg.num_vms);
  for (int k = 0; k < cfg.num_vms; ++k) {
    vms[k].index = k;
    vms[k].mips = cfg.vm_mips;
    vms[k].buffer_capacity = buffer_capacity;
    vms[k].pes = cfg.num_pes;
    vms[k].ram_mb = cfg.vm_ram_mb;
    vms[k].bandwidth_mbps = cfg.vm_bandwidth_mbps;
  }
  return vms;
}

// Outcome of one service attempt. Times are simulated seconds measured from
// the first task's arrival. assigned_s is the admission time of the final
// attempt; exec_s is length / mips.
struct CompletionRecord {
  std::int64_t task_id = 0;
  double assigned_s = 0.0;
  double finish_s = 0.0;
  double exec_s = 0.0;
  int attempts = 1;
  int vm_index = 0;
  std::int64_t length_mi = 0;
  bool aborted = false;

  double response_s() const { return finish_s - assigned_s; }
  double wait_s() const { return finish_s - assigned_s - exec_s; }

  friend bool operator==(const CompletionRecord&, const CompletionRecord&) = default;
};

struct QueuedTask {
  TaskSpec task;
  double assigned_s = 0.0;
  int attempts = 1;
  bool in_service = false;
  double finish_s = 0.0;  // valid while in_service
};

class Cluster {
 public:
  explicit Cluster(std::vector<VmSpec> vms) : vms_(std::move(vms)) {
    if (vms_.empty()) throw DomainError("cluster needs at least one VM");
    for (const auto& v : vms_) v.validate();
    state_.resize(vms_.size());
  }

  int size() const { return static_cast<int>(vms_.size()); }
  double clock() const { return clock_; }
  const VmSpec& spec(int k) const { return vms_.at(k); }
  const std::vector<VmSpec>& specs() const { return vms_; }
  const std::deque<QueuedTask>& queue(int k) const { return state_.at(k).queue; }

  int occupied(int k) const { return static_cast<int>(state_.at(k).queue.size()); }
  int capacity(int k) const { return vms_.at(k).buffer_capacity; }
  int free_slots(int k) const { return capacity(k) - occupied(k); }
  std::int64_t assigned_length(int k) const { return state_.at(k).assigned_length; }

  bool has_free_slot() const {
    for (int k = 0; k < size(); ++k)
      if (free_slots(k) > 0) return true;
    return false;
  }

  bool idle() const {
    for (const auto& s : state_)
      if (!s.queue.empty()) return false;
    return true;
  }

  // Earliest time a PE of VM k can take new work.
  double busy_until(int k) const {
    const auto& q = state_.at(k).queue;
    const int serving = std::min<int>(static_cast<int>(q.size()), vms_[k].pes);
    if (serving < vms_[k].pes) return clock_;
    double t = std::numeric_limits<double>::infinity();
    for (int i = 0; i < serving; ++i) t = std::min(t, q[i].finish_s);
    return t;
  }

  // How long a task admitted to VM k now would wait before entering service.
  double backlog_seconds(int k) const {
    const auto& q = state_.at(k).queue;
    const int pes = vms_[k].pes;
    std::priority_queue<double, std::vector<double>, std::greater<>> free_at;
    std::size_t i = 0;
    for (; i < q.size() && q[i].in_service; ++i) free_at.push(q[i].finish_s);
    while (static_cast<int>(free_at.size()) < pes) free_at.push(clock_);
    for (; i < q.size(); ++i) {
      const double t = free_at.top();
      free_at.pop();
      free_at.push(t + exec_seconds(k, q[i].task));
    }
    return free_at.top() - clock_;
  }

  double exec_seconds(int k, const TaskSpec& t) const {
    return static_cast<double>(t.length_mi) / vms_[k].mips;
  }

  void admit(const TaskSpec& task, int vm, int attempts = 1) {
    if (vm < 0 || vm >= size()) throw DomainError("VM index " + std::to_string(vm) + " out of range");
    auto& s = state_[vm];
    if (free_slots(vm) <= 0)
      throw AdmissionRejected("buffer of VM " + std::to_string(vm) + " is full");
    s.queue.push_back(QueuedTask{task, clock_, attempts, false, 0.0});
    s.assigned_length += task.length_mi;
    start_waiting(vm);
  }

  std::optional<double> next_completion_time() const {
    std::optional<double> t;
    for (const auto& s : state_)
      for (const auto& q : s.queue) {
        if (!q.in_service) break;
        if (!t || q.finish_s < *t) t = q.finish_s;
      }
    return t;
  }

  // Moves the clock forward without crossing a completion.
  void advance_clock(double t) {
    if (t < clock_) throw DomainError("clock cannot move backwards");
    if (auto next = next_completion_time(); next && t > *next)
      throw DomainError("advance_clock would skip a completion");
    clock_ = t;
  }

  // Completes every in-service task finishing at the earliest completion time
  // and starts the next waiting tasks. Returns the finished attempts in VM
  // order; all-idle clusters are left unchanged.
  std::vector<CompletionRecord> advance_to_next_event() {
    std::vector<CompletionRecord> done;
    const auto next = next_completion_time();
    if (!next) return done;
    clock_ = *next;
    for (int k = 0; k < size(); ++k) {
      auto& s = state_[k];
      for (auto it = s.queue.begin(); it != s.queue.end() && it->in_service;) {
        if (it->finish_s == clock_) {
          CompletionRecord r;
          r.task_id = it->task.id;
          r.assigned_s = it->assigned_s;
          r.finish_s = it->finish_s;
          r.exec_s = exec_seconds(k, it->task);
          r.attempts = it->attempts;
          r.vm_index = k;
          r.length_mi = it->task.length_mi;
          done.push_back(r);
          s.assigned_length -= it->task.length_mi;
          it = s.queue.erase(it);
        } else {
          ++it;
        }
      }
      start_waiting(k);
    }
    return done;
  }

  // Occupancy bound, per-VM capacity, and L_k recomputed from the queue.
  bool check_invariants() const {
    long total = 0;
    long bound = 0;
    for (int k = 0; k < size(); ++k) {
      const auto& s = state_[k];
      if (occupied(k) < 0 || occupied(k) > capacity(k)) return false;
      std::int64_t len = 0;
      int serving = 0;
      bool seen_waiting = false;
      for (const auto& q : s.queue) {
        len += q.task.length_mi;
        if (q.in_service) {
          if (seen_waiting) return false;
          ++serving;
        } else {
          seen_waiting = true;
        }
      }
      if (len != s.assigned_length) return false;
      if (serving != std::min<int>(static_cast<int>(s.queue.size()), vms_[k].pes)) return false;
      total += occupied(k);
      bound += capacity(k);
    }
    return total >= 0 && total <= bound;
  }

 private:
  struct VmState {
    std::deque<QueuedTask> queue;  // in-service tasks first, FIFO
    std::int64_t assigned_length = 0;
  };

  void start_waiting(int k) {
    auto& q = state_[k].queue;
    const int pes = vms_[k].pes;
    for (int i = 0; i < static_cast<int>(q.size()) && i < pes; ++i) {
      if (!q[i].in_service) {
        q[i].in_service = true;
        q[i].finish_s = clock_ + exec_seconds(k, q[i].task);
      }
    }
  }

  std::vector<VmSpec> vms_;
  std::vector<VmState> state_;
  double clock_ = 0.0;
};

enum class AttemptOutcome { complete, requeue, abort };

// One Bernoulli(failure_ratio) draw per attempt. A uniform is consumed even
// when the ratio is 0 or 1 so that runs at different ratios share a stream.
inline AttemptOutcome maybe_fail(double failure_ratio, int attempts, int max_attempts, Rng& rng) {
  if (!(failure_ratio >= 0.0 && failure_ratio <= 1.0))
    throw DomainError("failure ratio must be in [0, 1]");
  if (attempts < 1) throw DomainError("attempts must be >= 1");
  if (max_attempts < 1) throw DomainError("max_attempts must be >= 1");
  const bool failed = uniform01(rng) < failure_ratio;
  if (!failed) return AttemptOutcome::complete;
  return attempts < max_attempts ? AttemptOutcome::requeue : AttemptOutcome::abort;
}

}  // namespace qlsched
