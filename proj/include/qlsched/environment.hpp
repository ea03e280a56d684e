#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "qlsched/cloud_model.hpp"
#include "qlsched/errors.hpp"
#include "qlsched/mdp.hpp"
#include "qlsched/policies.hpp"
#include "qlsched/qlearn.hpp"
#include "qlsched/simulation.hpp"
#include "qlsched/workload.hpp"

namespace qlsched {

// One episode = one freshly generated workload batch, driven through the
// simulator until every task has been placed and the cluster drains. A step
// is one placement; the reward is computed on the state seen before it.
template <class Features>
class SchedulingEnv {
 public:
  SchedulingEnv(SimulationConfig sim_cfg, ScenarioConfig workload_cfg, Features features = {})
      : sim_cfg_(std::move(sim_cfg)), workload_cfg_(std::move(workload_cfg)),
        features_(std::move(features)) {
    workload_cfg_.validate();
  }

  StateKey reset(Rng& rng) {
    const std::uint64_t workload_seed = rng();
    const std::uint64_t failure_seed = rng();
    sim_.emplace(sim_cfg_, generate_workload(workload_cfg_, workload_seed), failure_seed);
    done_ = !sim_->next_decision().has_value();
    if (done_) throw DomainError("episode workload produced no decisions");
    return features_.key(sim_->cluster());
  }

  std::vector<int> feasible_actions() const {
    if (!sim_ || done_) return {};
    return feasible_vms(sim_->cluster());
  }

  StepResult step(int action, Rng&) {
    if (!sim_ || done_) throw DomainError("step on a finished episode");
    const double r = features_.reward(sim_->cluster(), action);
    sim_->dispatch(action);
    done_ = !sim_->next_decision().has_value();
    return StepResult{r, features_.key(sim_->cluster()), done_};
  }

  // Average waiting time of the last episode's completed tasks.
  double episode_metric() const {
    if (!sim_) return 0.0;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : sim_->records())
      if (!r.aborted) {
        sum += r.wait_s();
        ++n;
      }
    return n ? sum / static_cast<double>(n) : 0.0;
  }

  const Features& features() const { return features_; }

 private:
  SimulationConfig sim_cfg_;
  ScenarioConfig workload_cfg_;
  Features features_;
  std::optional<Simulation> sim_;
  bool done_ = true;
};

// Samples trajectories of an OracleMdp from the empty state. Episodes never
// terminate on their own; bound them with max_steps_per_episode.
class OracleEnv {
 public:
  explicit OracleEnv(const OracleMdp& mdp) : mdp_(&mdp), state_(mdp.empty_state()) {}

  StateKey reset(Rng&) {
    state_ = mdp_->empty_state();
    return mdp_->states[state_].key();
  }

  std::vector<int> feasible_actions() const { return mdp_->actions[state_]; }

  StepResult step(int action, Rng& rng) {
    const auto& acts = mdp_->actions[state_];
    std::size_t slot = 0;
    while (slot < acts.size() && acts[slot] != action) ++slot;
    if (slot == acts.size()) throw DomainError("action not available in oracle state");

    const double r = mdp_->rewards[state_][slot];
    const auto& row = mdp_->kernel[state_][slot];
    double u = uniform01(rng);
    std::size_t next = row.back().next;
    for (const auto& t : row) {
      if (u < t.prob) {
        next = t.next;
        break;
      }
      u -= t.prob;
    }
    state_ = next;
    return StepResult{r, mdp_->states[state_].key(), false};
  }

  std::size_t state_index() const { return state_; }

 private:
  const OracleMdp* mdp_;
  std::size_t state_;
};

}  // namespace qlsched
