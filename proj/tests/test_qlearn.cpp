#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "qlsched/environment.hpp"
#include "qlsched/qlearn.hpp"

using namespace qlsched;

namespace {

const StateKey kS{0, 0, 0};
const StateKey kT{1, 0, 0};

// Two-state chain: action 1 pays 1 and moves to the other state, action 0
// pays 0 and stays. Episodes end after `length` steps.
struct ToyEnv {
  int length = 5;
  int t = 0;
  int where = 0;

  StateKey reset(Rng&) {
    t = 0;
    where = 0;
    return {where};
  }
  std::vector<int> feasible_actions() const { return {0, 1}; }
  StepResult step(int a, Rng&) {
    ++t;
    if (a == 1) where = 1 - where;
    return StepResult{a == 1 ? 1.0 : 0.0, {where}, t >= length};
  }
};

}  // namespace

TEST(LearningRate, Values) {
  EXPECT_EQ(learning_rate(0), 1.0);
  EXPECT_EQ(learning_rate(1), 0.5);
  EXPECT_NEAR(learning_rate(4), 0.28886, 1e-4);
  EXPECT_NEAR(learning_rate(4), 1.0 / (1.0 + std::exp(0.65 * std::log(4.0))), 1e-12);
}

TEST(LearningRate, DecreasingAndBounded) {
  double prev = 2.0;
  for (std::uint64_t v = 0; v < 5000; ++v) {
    const double b = learning_rate(v);
    ASSERT_GT(b, 0.0);
    ASSERT_LE(b, 1.0);
    ASSERT_LT(b, prev);
    prev = b;
  }
}

TEST(SelectAction, PureExploitation) {
  QTable t;
  t.entry(kS, 0).q = 0.4;
  t.entry(kS, 1).q = 0.9;
  t.entry(kS, 2).q = 0.1;
  const std::vector<int> acts{0, 1, 2};
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(select_action(kS, acts, t, 0.0, rng), 1);
}

TEST(SelectAction, NoFeasibleAction) {
  QTable t;
  Rng rng(1);
  EXPECT_THROW(select_action(kS, {}, t, 0.5, rng), AllBuffersFull);
}

TEST(SelectAction, FullExplorationIsUniform) {
  QTable t;
  t.entry(kS, 0).q = 5.0;
  const std::vector<int> acts{0, 1, 2};
  Rng rng(2);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[select_action(kS, acts, t, 1.0, rng)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3, 0.01);
}

TEST(SelectAction, GreedyTiesAreUniform) {
  QTable t;
  const std::vector<int> acts{0, 1, 2};
  Rng rng(3);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[select_action(kS, acts, t, 0.0, rng)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3, 0.01);
}

TEST(SelectAction, OnlyFeasibleActions) {
  QTable t;
  t.entry(kS, 1).q = 9.0;  // best, but infeasible
  const std::vector<int> acts{0, 2};
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const int a = select_action(kS, acts, t, 0.3, rng);
    ASSERT_TRUE(a == 0 || a == 2);
  }
}

TEST(UpdateQ, FirstVisitTakesTarget) {
  QTable t;
  const std::vector<int> acts{0, 1, 2};
  EXPECT_EQ(update_q(t, kS, 0, 1.0, kT, acts, 0.9), 1.0);
  EXPECT_EQ(t.q(kS, 0), 1.0);
  EXPECT_EQ(t.visits(kS, 0), 1u);
}

TEST(UpdateQ, ZeroTargetShrinks) {
  QTable t;
  const std::vector<int> acts{0, 1};
  t.entry(kS, 0) = QEntry{0.8, 3};
  const double beta = 1.0 / (1.0 + std::pow(3.0, 0.65));
  EXPECT_NEAR(update_q(t, kS, 0, 0.0, kT, acts, 0.9), (1 - beta) * 0.8, 1e-15);
  EXPECT_EQ(t.visits(kS, 0), 4u);
}

TEST(UpdateQ, BootstrapsWithMaxOverNextActions) {
  QTable t;
  t.entry(kT, 0).q = -2.0;
  t.entry(kT, 1).q = 3.0;
  t.entry(kT, 2).q = 1.0;
  const std::vector<int> next{0, 2};  // 1 is infeasible in s'
  QTable u = t;
  EXPECT_NEAR(update_q(t, kS, 0, 0.5, kT, next, 0.9), 0.5 + 0.9 * 1.0, 1e-15);
  EXPECT_NEAR(update_q(u, kS, 0, 0.5, kT, next, 0.9, true), 0.5, 1e-15);
}

TEST(DecayEpsilon, Endpoints) {
  EXPECT_EQ(decay_epsilon(0.8, 0, 100), 0.8);
  EXPECT_EQ(decay_epsilon(0.8, 100, 100), 0.0);
  EXPECT_EQ(decay_epsilon(0.8, 250, 100), 0.0);
  EXPECT_EQ(decay_epsilon(0.5, 50, 100), 0.25);
  EXPECT_THROW(decay_epsilon(0.5, 1, 0), DomainError);
}

TEST(DecayEpsilon, LinearAndNonIncreasing) {
  double prev = 1.0;
  for (long c = 0; c <= 1000; ++c) {
    const double e = decay_epsilon(1.0, c, 1000);
    ASSERT_LE(e, prev);
    ASSERT_NEAR(e, 1.0 - c / 1000.0, 1e-15);
    prev = e;
  }
}

TEST(Convergence, StableMapStops) {
  QTable t;
  t.entry(kS, 1).q = 1.0;
  ConvergenceMonitor m;
  EXPECT_EQ(check_convergence(m, t, 10), ConvergenceVerdict::proceed);
  EXPECT_EQ(check_convergence(m, t, 10), ConvergenceVerdict::stop);
}

TEST(Convergence, BudgetStops) {
  QTable t;
  ConvergenceMonitor m;
  m.repeater = 11;
  EXPECT_EQ(check_convergence(m, t, 10), ConvergenceVerdict::stop);
}

TEST(Convergence, ChurnContinues) {
  QTable t;
  t.entry(kS, 0).q = 1.0;
  t.entry(kS, 1).q = 0.5;
  ConvergenceMonitor m;
  EXPECT_EQ(check_convergence(m, t, 10), ConvergenceVerdict::proceed);
  t.entry(kS, 1).q = 2.0;
  EXPECT_EQ(check_convergence(m, t, 10), ConvergenceVerdict::proceed);
  EXPECT_EQ(m.repeater, 2);
}

TEST(QTable, GreedyInvariantUnderConstantShift) {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    QTable t, shifted;
    const double c = uniform01(rng) * 20 - 10;
    const int n = 1 + uniform_index(rng, 6);
    for (int a = 0; a < n; ++a) {
      // Quarter-steps keep the shifted comparisons exact.
      const double q = 0.25 * uniform_index(rng, 16);
      t.entry(kS, a).q = q;
      shifted.entry(kS, a).q = q + std::round(c);
    }
    ASSERT_EQ(t.greedy_action(kS), shifted.greedy_action(kS));
  }
}

TEST(QTable, CsvIsSortedAndExact) {
  QTable t;
  t.entry(kT, 2) = QEntry{0.1, 3};
  t.entry(kS, 1) = QEntry{-1.0 / 3.0, 1};
  std::ostringstream out;
  t.write_csv(out);
  EXPECT_EQ(out.str(),
            "state,action,q,visits\n"
            "0-0-0,1,-0.33333333333333331,1\n"
            "1-0-0,2,0.10000000000000001,3\n");
}

TEST(LearnerConfig, Validation) {
  LearnerConfig c;
  c.gamma = 1.5;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "gamma");
  }
}

TEST(Train, LearnsToyChain) {
  ToyEnv env;
  LearnerConfig cfg;
  cfg.total_cycles = 300;
  cfg.repeater_threshold = 300;
  cfg.episodes_per_cycle = 5;
  const auto res = train(env, cfg, 1);
  EXPECT_EQ(res.policy.at(StateKey{0}), 1);
  EXPECT_EQ(res.policy.at(StateKey{1}), 1);
  EXPECT_LE(res.max_abs_q_seen, 1.0 / (1.0 - cfg.gamma));
  EXPECT_FALSE(res.trace.empty());
}

TEST(Train, SameSeedSameTable) {
  auto sc = ScenarioConfig::scenario1();
  SimulationConfig sim{make_vms(sc, 5), sc.slot_seconds, 0.0, 10};
  LearnerConfig cfg;
  cfg.total_cycles = 40;
  cfg.repeater_threshold = 40;
  cfg.episodes_per_cycle = 2;
  SchedulingEnv<QlFeatures> a(sim, sc, QlFeatures{100000, 40});
  SchedulingEnv<QlFeatures> b(sim, sc, QlFeatures{100000, 40});
  const auto ra = train(a, cfg, 99);
  const auto rb = train(b, cfg, 99);
  EXPECT_TRUE(ra.table == rb.table);
  EXPECT_EQ(ra.cycles, rb.cycles);
  SchedulingEnv<QlFeatures> c(sim, sc, QlFeatures{100000, 40});
  EXPECT_FALSE(train(c, cfg, 100).table == ra.table);
}
