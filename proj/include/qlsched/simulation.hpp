#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qlsched/cloud_model.hpp"
#include "qlsched/random.hpp"
#include "qlsched/workload.hpp"

namespace qlsched {

struct SimulationConfig {
  std::vector<VmSpec> vms;
  double slot_seconds = 30.0;
  double failure_ratio = 0.0;
  int max_attempts = 10;
};

// Discrete-event driver around a Cluster. Tasks arrive into a FIFO global
// queue at slot boundaries; the broker is consulted whenever the queue head
// can be placed, i.e. after arrivals and after completions that free a slot.
// Completions at an instant are processed before arrivals at that instant.
class Simulation {
 public:
  Simulation(SimulationConfig cfg, std::vector<TaskSpec> workload, std::uint64_t failure_seed)
      : cfg_(std::move(cfg)), cluster_(cfg_.vms), tasks_(std::move(workload)), fail_rng_(failure_seed) {
    if (!(cfg_.slot_seconds > 0)) throw DomainError("slot_seconds must be > 0");
    if (!(cfg_.failure_ratio >= 0.0 && cfg_.failure_ratio <= 1.0))
      throw DomainError("failure ratio must be in [0, 1]");
    if (cfg_.max_attempts < 1) throw DomainError("max_attempts must be >= 1");
    std::stable_sort(tasks_.begin(), tasks_.end(), [](const TaskSpec& a, const TaskSpec& b) {
      return a.arrival_slot < b.arrival_slot;
    });
    if (!tasks_.empty()) first_slot_ = tasks_.front().arrival_slot;
    for (const auto& t : tasks_) {
      if (t.length_mi <= 0) throw DomainError("task length must be positive");
      if (!by_id_.emplace(t.id, t).second) throw DomainError("duplicate task id in workload");
    }
  }

  const Cluster& cluster() const { return cluster_; }
  const SimulationConfig& config() const { return cfg_; }
  const std::vector<CompletionRecord>& records() const { return records_; }
  std::size_t global_queue_size() const { return pending_.size(); }
  std::size_t task_count() const { return tasks_.size(); }

  double arrival_time(const TaskSpec& t) const {
    return static_cast<double>(t.arrival_slot - first_slot_) * cfg_.slot_seconds;
  }

  bool drained() const {
    return next_arrival_ == tasks_.size() && pending_.empty() && cluster_.idle();
  }

  // Runs events until the global-queue head can be placed on some VM and
  // returns it; nullopt once every task has completed or aborted.
  std::optional<TaskSpec> next_decision() {
    for (;;) {
      if (!pending_.empty() && cluster_.has_free_slot()) return pending_.front().task;
      const auto completion = cluster_.next_completion_time();
      std::optional<double> arrival;
      if (next_arrival_ < tasks_.size()) arrival = arrival_time(tasks_[next_arrival_]);
      if (!completion && !arrival) return std::nullopt;

      if (completion && (!arrival || *completion <= *arrival)) {
        handle_completions(cluster_.advance_to_next_event());
      } else {
        cluster_.advance_clock(*arrival);
        while (next_arrival_ < tasks_.size() && arrival_time(tasks_[next_arrival_]) == *arrival)
          pending_.push_back(Pending{tasks_[next_arrival_++], 1});
      }
    }
  }

  // Admits the global-queue head to `vm`. Throws AdmissionRejected if full.
  void dispatch(int vm) {
    if (pending_.empty()) throw DomainError("dispatch with an empty global queue");
    const Pending p = pending_.front();
    cluster_.admit(p.task, vm, p.attempts);
    pending_.pop_front();
  }

  // Drives the whole workload with `choose(const Cluster&, const TaskSpec&) -> int`.
  template <class Policy>
  const std::vector<CompletionRecord>& run(Policy&& choose) {
    while (auto task = next_decision()) dispatch(choose(cluster_, *task));
    return records_;
  }

 private:
  struct Pending {
    TaskSpec task;
    int attempts = 1;
  };

  void handle_completions(std::vector<CompletionRecord> done) {
    std::vector<Pending> requeued;
    for (auto& r : done) {
      switch (maybe_fail(cfg_.failure_ratio, r.attempts, cfg_.max_attempts, fail_rng_)) {
        case AttemptOutcome::complete:
          records_.push_back(r);
          break;
        case AttemptOutcome::requeue:
          requeued.push_back(Pending{by_id_.at(r.task_id), r.attempts + 1});
          break;
        case AttemptOutcome::abort:
          r.aborted = true;
          records_.push_back(r);
          break;
      }
    }
    // Failed tasks go back to the head of the global queue.
    pending_.insert(pending_.begin(), requeued.begin(), requeued.end());
  }

  SimulationConfig cfg_;
  Cluster cluster_;
  std::vector<TaskSpec> tasks_;
  std::unordered_map<std::int64_t, TaskSpec> by_id_;
  std::int64_t first_slot_ = 0;
  std::size_t next_arrival_ = 0;
  std::deque<Pending> pending_;
  std::vector<CompletionRecord> records_;
  Rng fail_rng_;
};

}  // namespace qlsched
