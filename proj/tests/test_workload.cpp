#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "qlsched/workload.hpp"

using namespace qlsched;

namespace {

std::vector<TaskSpec> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in);
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ParseTrace, SingleLine) {
  const auto tasks = parse("1,0,5000\n");
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0], (TaskSpec{1, 0, 5000}));
}

TEST(ParseTrace, EmptyStream) { EXPECT_TRUE(parse("").empty()); }

TEST(ParseTrace, HeaderAndBlankLinesSkipped) {
  const auto tasks = parse("id,arrival_slot,length_mi\n\n3,2,100\n 4 , 2 , 200 \n");
  ASSERT_EQ(tasks.size(), 2u);
  EXPECT_EQ(tasks[1], (TaskSpec{4, 2, 200}));
}

TEST(ParseTrace, Errors) {
  EXPECT_EQ(parse_error("2,0,-7\n"), "non-positive length at line 1");
  EXPECT_EQ(parse_error("1,0,5\n2,0,0\n"), "non-positive length at line 2");
  EXPECT_EQ(parse_error("1,0,5\n1,1,5\n"), "duplicate id at line 2");
  EXPECT_NE(parse_error("1,0\n").find("at line 1"), std::string::npos);
  EXPECT_NE(parse_error("1,x,5\n").find("at line 1"), std::string::npos);
  EXPECT_NE(parse_error("1,0,5\n1,0,5.5\n").find("at line 2"), std::string::npos);
}

TEST(ParseTrace, RoundTripRandomLists) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<TaskSpec> tasks;
    const int n = uniform_index(rng, 30);
    for (int i = 0; i < n; ++i)
      tasks.push_back(TaskSpec{static_cast<std::int64_t>(i * 3 + uniform_index(rng, 3)),
                               uniform_index(rng, 1000),
                               1 + static_cast<std::int64_t>(rng() % 400000)});
    std::ostringstream out;
    write_trace(out, tasks);
    ASSERT_EQ(parse(out.str()), tasks);
  }
}

TEST(GenerateWorkload, ScenarioLengthRanges) {
  for (auto cfg : {ScenarioConfig::scenario1(), ScenarioConfig::scenario2()}) {
    const auto w = generate_workload(cfg, 3);
    ASSERT_EQ(static_cast<int>(w.size()), cfg.num_tasks);
    for (const auto& t : w) {
      EXPECT_GE(t.length_mi, cfg.length_min);
      EXPECT_LE(t.length_mi, cfg.length_max);
    }
  }
}

TEST(GenerateWorkload, LengthsInRangeOverManyTasks) {
  auto cfg = ScenarioConfig::scenario2();
  cfg.num_tasks = 10000;
  const auto w = generate_workload(cfg, 11);
  ASSERT_EQ(w.size(), 10000u);
  std::int64_t lo = w[0].length_mi, hi = w[0].length_mi;
  for (const auto& t : w) {
    lo = std::min(lo, t.length_mi);
    hi = std::max(hi, t.length_mi);
  }
  EXPECT_GE(lo, 100);
  EXPECT_LE(hi, 400000);
  // Both ends of the range get close to being hit.
  EXPECT_LT(lo, 1000);
  EXPECT_GT(hi, 399000);
}

TEST(GenerateWorkload, Deterministic) {
  const auto cfg = ScenarioConfig::scenario1();
  EXPECT_EQ(generate_workload(cfg, 42), generate_workload(cfg, 42));
  EXPECT_NE(generate_workload(cfg, 42), generate_workload(cfg, 43));
}

TEST(GenerateWorkload, SlotsStartAtZeroAndAreSorted) {
  const auto w = generate_workload(ScenarioConfig::scenario1(), 5);
  EXPECT_EQ(w.front().arrival_slot, 0);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_GE(w[i].arrival_slot, w[i - 1].arrival_slot);
}

TEST(GenerateWorkload, InvalidConfig) {
  auto cfg = ScenarioConfig::scenario1();
  cfg.length_max = cfg.length_min - 1;
  EXPECT_THROW(generate_workload(cfg, 1), ConfigError);
}

TEST(Arrivals, PointMassOnZero) {
  const auto m = ArrivalModel::iid({1.0, 0.0, 0.0});
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_arrivals(m, i % 3, rng), 0);
}

TEST(Arrivals, IdentityMarkovIsAbsorbing) {
  std::vector<std::vector<double>> eye(5, std::vector<double>(5, 0.0));
  for (int i = 0; i < 5; ++i) eye[i][i] = 1.0;
  const auto m = ArrivalModel::markov(eye);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_arrivals(m, 3, rng), 3);
}

TEST(Arrivals, PrevCountOutsideDomain) {
  const auto m = ArrivalModel::iid({0.5, 0.5});
  Rng rng(3);
  EXPECT_THROW(sample_arrivals(m, 2, rng), DomainError);
  EXPECT_THROW(sample_arrivals(m, -1, rng), DomainError);
}

TEST(Arrivals, UniformMeanMonteCarlo) {
  const auto m = ArrivalModel::iid({1.0 / 3, 1.0 / 3, 1.0 / 3});
  Rng rng(4);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_arrivals(m, 0, rng);
  EXPECT_NEAR(sum / n, 1.0, 0.02);
}

TEST(Arrivals, EmpiricalDistributionConverges) {
  const std::vector<double> p{0.1, 0.4, 0.2, 0.3};
  const auto m = ArrivalModel::iid(p);
  Rng rng(5);
  std::vector<double> counts(p.size(), 0.0);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) counts[sample_arrivals(m, 0, rng)] += 1;
  double tv = 0;
  for (std::size_t k = 0; k < p.size(); ++k) tv += std::abs(counts[k] / n - p[k]);
  EXPECT_LT(tv / 2, 0.01);
}

TEST(Arrivals, ConfigMarginalIsBinomialWithConfiguredMean) {
  auto cfg = ScenarioConfig::scenario1();
  const auto m = ArrivalModel::from_config(cfg);
  EXPECT_EQ(m.max_count(), cfg.arrival_max);
  EXPECT_NEAR(m.mean(), cfg.arrival_mean, 1e-12);
  // Binomial(5, 0.2) at k = 0 and k = 2.
  EXPECT_NEAR(m.row(0)[0], std::pow(0.8, 5), 1e-12);
  EXPECT_NEAR(m.row(0)[2], 10 * 0.04 * std::pow(0.8, 3), 1e-12);

  cfg.arrival_mode = ArrivalMode::markov;
  const auto mk = ArrivalModel::from_config(cfg);
  // Stationary: the marginal pushed through the chain is unchanged.
  const auto& pi = m.row(0);
  for (int j = 0; j <= cfg.arrival_max; ++j) {
    double next = 0;
    for (int i = 0; i <= cfg.arrival_max; ++i) next += pi[i] * mk.row(i)[j];
    EXPECT_NEAR(next, pi[j], 1e-12);
  }
}

TEST(Arrivals, RejectsBadDistributions) {
  EXPECT_THROW(ArrivalModel::iid({0.5, 0.4}), DomainError);
  EXPECT_THROW(ArrivalModel::iid({1.5, -0.5}), DomainError);
  EXPECT_THROW(ArrivalModel::markov({{1.0, 0.0}}), DomainError);
}
