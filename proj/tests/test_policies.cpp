#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qlsched/policies.hpp"

using namespace qlsched;

namespace {

// VM k gets `lengths[k]` admitted at t = 0.
Cluster make_cluster(const std::vector<int>& buffers, const std::vector<std::vector<std::int64_t>>& lengths = {},
                     int pes = 1) {
  std::vector<VmSpec> specs(buffers.size());
  for (std::size_t k = 0; k < buffers.size(); ++k)
    specs[k] = VmSpec{static_cast<int>(k), 1000.0, buffers[k], pes};
  Cluster c(specs);
  std::int64_t id = 0;
  for (std::size_t k = 0; k < lengths.size(); ++k)
    for (auto len : lengths[k]) c.admit(TaskSpec{id++, 0, len}, static_cast<int>(k));
  return c;
}

// Cluster whose free-slot counts are `free` out of `capacity` each.
Cluster with_free(const std::vector<int>& free, int capacity = 5) {
  std::vector<std::vector<std::int64_t>> lengths(free.size());
  for (std::size_t k = 0; k < free.size(); ++k) lengths[k].assign(capacity - free[k], 1000);
  return make_cluster(std::vector<int>(free.size(), capacity), lengths);
}

}  // namespace

TEST(Random, SingleVm) {
  const auto c = make_cluster({3});
  Rng rng(1);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(random_select(c, rng), 0);
}

TEST(Random, AllFullDefers) {
  const auto c = with_free({0, 0, 0});
  Rng rng(1);
  EXPECT_FALSE(random_select(c, rng).has_value());
  EXPECT_FALSE(fifo_select(c).has_value());
  EXPECT_FALSE(greedy_select(c).has_value());
  EXPECT_FALSE(mixed_select(c, rng).has_value());
  QTable t;
  EXPECT_FALSE(qsch_select(c, t, 0.0, rng).has_value());
  EXPECT_FALSE(qlearn_select(c, t, 0.0, rng).has_value());
}

TEST(Random, UniformOverThreeFreeVms) {
  const auto c = make_cluster({2, 2, 2});
  Rng rng(2);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[*random_select(c, rng)];
  for (int k : counts) EXPECT_NEAR(static_cast<double>(k) / n, 1.0 / 3, 0.01);
}

TEST(Random, UniformOverFeasibleVmsChiSquare) {
  const auto c = with_free({2, 0, 1, 3}, 3);
  Rng rng(3);
  std::vector<double> counts(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[*random_select(c, rng)] += 1;
  EXPECT_EQ(counts[1], 0.0);
  double chi2 = 0;
  for (int k : {0, 2, 3}) chi2 += std::pow(counts[k] - n / 3.0, 2) / (n / 3.0);
  // Two degrees of freedom: p = exp(-chi2 / 2).
  EXPECT_GT(std::exp(-chi2 / 2), 0.01) << "chi2 = " << chi2;
}

TEST(Fifo, EmptyClusterTieBreak) { EXPECT_EQ(fifo_select(make_cluster({2, 2, 2})), 0); }

TEST(Fifo, EarliestAvailable) {
  const auto c = make_cluster({3, 3, 3}, {{9000}, {2000}, {5000}});
  EXPECT_EQ(c.busy_until(0), 9.0);
  EXPECT_EQ(c.busy_until(1), 2.0);
  EXPECT_EQ(c.busy_until(2), 5.0);
  EXPECT_EQ(fifo_select(c), 1);
}

TEST(Fifo, SkipsFullEarliestVm) {
  const auto c = make_cluster({3, 1, 3}, {{9000}, {2000}, {5000}});
  EXPECT_EQ(fifo_select(c), 2);
}

TEST(Mixed, DrawKeptWhenItTiesTheMaximum) {
  const auto c = with_free({0, 3, 3});
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng probe(seed), rng(seed);
    const int draw = uniform_index(probe, 3);
    const auto pick = mixed_select(c, rng);
    if (draw == 1) EXPECT_EQ(pick, 1);
    if (draw == 2) EXPECT_EQ(pick, 2);
    if (draw == 0) EXPECT_EQ(pick, 1);
  }
}

TEST(Mixed, UniqueMaximumWins) {
  const auto c = with_free({1, 5, 2});
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(mixed_select(c, rng), 1);
}

TEST(Mixed, SingleVm) {
  const auto c = make_cluster({4});
  Rng rng(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(mixed_select(c, rng), 0);
}

TEST(Mixed, ExhaustiveSmallClusters) {
  const int capacity = 3;
  for (int k = 1; k <= 4; ++k) {
    std::vector<int> free(k, 0);
    for (;;) {
      const auto c = with_free(free, capacity);
      const int best = *std::max_element(free.begin(), free.end());
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng probe(seed), rng(seed);
        const int draw = uniform_index(probe, k);
        const auto pick = mixed_select(c, rng);
        if (best == 0) {
          ASSERT_FALSE(pick.has_value());
          continue;
        }
        ASSERT_TRUE(pick.has_value());
        ASSERT_GT(free[*pick], 0);
        if (free[draw] == best) ASSERT_EQ(*pick, draw);
        else ASSERT_EQ(free[*pick], best);
      }
      int i = 0;
      while (i < k && ++free[i] > capacity) free[i++] = 0;
      if (i == k) break;
    }
  }
}

TEST(Greedy, Examples) {
  EXPECT_EQ(greedy_select(with_free({1, 5, 2})), 1);
  EXPECT_EQ(greedy_select(with_free({4, 4, 4})), 0);
  EXPECT_EQ(greedy_select(with_free({0, 0, 1})), 2);
}

TEST(Policies, AlwaysFeasibleOrDefer) {
  Rng gen(6);
  QTable t;
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = 1 + uniform_index(gen, 4);
    std::vector<int> free(k);
    for (int& f : free) f = uniform_index(gen, 4);
    const auto c = with_free(free, 3);
    Rng rng(trial);
    for (auto pick : {random_select(c, rng), fifo_select(c), greedy_select(c), mixed_select(c, rng),
                      qsch_select(c, t, 0.5, rng), qlearn_select(c, t, 0.5, rng)}) {
      if (c.has_free_slot()) {
        ASSERT_TRUE(pick.has_value());
        ASSERT_GT(c.free_slots(*pick), 0);
      } else {
        ASSERT_FALSE(pick.has_value());
      }
    }
  }
}

TEST(Qsch, StateIsFreeBufferVector) {
  EXPECT_EQ(qsch_state(with_free({1, 5, 2})), (StateKey{1, 5, 2}));
}

TEST(Qsch, ZeroTablePicksLowestIndexOnEmptyCluster) {
  const auto c = make_cluster({3, 3, 3});
  QTable t;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    ASSERT_EQ(qsch_select(c, t, 0.0, rng), 0);
  }
}

TEST(Qsch, RewardDefaults) {
  EXPECT_DOUBLE_EQ(qsch_reward(make_cluster({3, 3, 3}), 0), 0.5);
  // Backlogs 4 s and 1 s; each VM has 1 of 2 slots free.
  const auto c = make_cluster({2, 2}, {{4000}, {1000}});
  EXPECT_DOUBLE_EQ(qsch_reward(c, 0), 0.5 * 0.5 - 0.5 * 1.0);
  EXPECT_DOUBLE_EQ(qsch_reward(c, 1), 0.5 * 0.5 - 0.5 * 0.25);
  // Backlogs 5 s and 2 s; 1 of 3 slots free.
  const auto e = make_cluster({3, 3}, {{4000, 1000}, {1000, 1000}});
  EXPECT_DOUBLE_EQ(qsch_reward(e, 1), 0.5 / 3 - 0.5 * (2.0 / 5.0));
}

TEST(PolicyNames, RoundTrip) {
  for (auto p : kAllPolicies) EXPECT_EQ(parse_policy(to_string(p)), p);
  EXPECT_FALSE(parse_policy("sjf").has_value());
  EXPECT_TRUE(is_learning(PolicyKind::qlearn));
  EXPECT_FALSE(is_learning(PolicyKind::mixed));
}
