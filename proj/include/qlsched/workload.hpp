#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "qlsched/errors.hpp"
#include "qlsched/random.hpp"

namespace qlsched {

// One task. Length is in million instructions (MI).
struct TaskSpec {
  std::int64_t id = 0;
  std::int64_t arrival_slot = 0;
  std::int64_t length_mi = 1;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

enum class ArrivalMode { iid, markov };

inline std::string to_string(ArrivalMode m) {
  return m == ArrivalMode::iid ? "iid" : "markov";
}

struct ScenarioConfig {
  int num_tasks = 20;
  std::int64_t length_min = 5000;
  std::int64_t length_max = 200000;
  int num_vms = 3;
  double vm_mips = 1000.0;
  double vm_ram_mb = 1740.0;        // informational
  double vm_bandwidth_mbps = 1000.0;  // informational
  int buffer_min = 5;
  int buffer_max = 15;
  int num_pes = 1;
  int num_datacenters = 1;
  int num_hosts = 1;
  ArrivalMode arrival_mode = ArrivalMode::iid;
  double arrival_mean = 1.0;  // tasks per slot
  int arrival_max = 5;        // D_max
  // Markov mode only: probability of repeating the previous slot's count.
  double arrival_persistence = 0.5;
  double slot_seconds = 30.0;

  void validate() const {
    auto fail = [](const char* key, const char* why) { throw ConfigError(key, why); };
    if (num_tasks < 1) fail("num_tasks", "must be >= 1");
    if (length_min < 1) fail("length_min", "must be >= 1");
    if (length_max < length_min) fail("length_max", "must be >= length_min");
    if (num_vms < 1) fail("num_vms", "must be >= 1");
    if (!(vm_mips > 0)) fail("vm_mips", "must be > 0");
    if (buffer_min < 1) fail("buffer_min", "must be >= 1");
    if (buffer_max < buffer_min) fail("buffer_max", "must be >= buffer_min");
    if (num_pes < 1) fail("num_pes", "must be >= 1");
    if (num_datacenters < 1) fail("num_datacenters", "must be >= 1");
    if (num_hosts < 1) fail("num_hosts", "must be >= 1");
    if (arrival_max < 1) fail("arrival_max", "must be >= 1");
    if (!(arrival_mean > 0) || arrival_mean > arrival_max)
      fail("arrival_mean", "must be in (0, arrival_max]");
    if (!(arrival_persistence >= 0 && arrival_persistence < 1))
      fail("arrival_persistence", "must be in [0, 1)");
    if (!(slot_seconds > 0)) fail("slot_seconds", "must be > 0");
  }

  // Light-load setting: 20 tasks of 5000-200000 MI on 3 single-PE VMs.
  static ScenarioConfig scenario1() { return {}; }

  // Heavy-load setting: 100 tasks of 100-400000 MI, 5 PEs per VM, 2 hosts.
  static ScenarioConfig scenario2() {
    ScenarioConfig c;
    c.num_tasks = 100;
    c.length_min = 100;
    c.length_max = 400000;
    c.buffer_min = 5;
    c.buffer_max = 50;
    c.num_pes = 5;
    c.num_hosts = 2;
    return c;
  }
};

// Distribution of the number of tasks arriving per slot over D = {0..D_max}.
// In iid mode every row is the same marginal; in markov mode row i is the
// distribution of d_n given d_{n-1} = i.
class ArrivalModel {
 public:
  static ArrivalModel iid(std::vector<double> marginal) {
    ArrivalModel m;
    m.mode_ = ArrivalMode::iid;
    m.rows_.push_back(std::move(marginal));
    m.finish();
    return m;
  }

  static ArrivalModel markov(std::vector<std::vector<double>> rows) {
    ArrivalModel m;
    m.mode_ = ArrivalMode::markov;
    m.rows_ = std::move(rows);
    if (m.rows_.empty()) throw DomainError("markov arrival model needs at least one row");
    for (const auto& r : m.rows_)
      if (r.size() != m.rows_.size())
        throw DomainError("markov transition matrix must be square");
    m.finish();
    return m;
  }

  // Binomial(D_max, mean / D_max) marginal; the markov variant mixes it with
  // a self-transition of weight `persistence`, keeping it stationary.
  static ArrivalModel from_config(const ScenarioConfig& cfg) {
    const int n = cfg.arrival_max;
    const double p = cfg.arrival_mean / n;
    std::vector<double> marginal(n + 1);
    for (int k = 0; k <= n; ++k)
      marginal[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                             std::lgamma(n - k + 1.0)) *
                    std::pow(p, k) * std::pow(1.0 - p, n - k);
    double total = 0;
    for (double v : marginal) total += v;
    for (double& v : marginal) v /= total;
    if (cfg.arrival_mode == ArrivalMode::iid) return iid(std::move(marginal));

    std::vector<std::vector<double>> rows(n + 1, std::vector<double>(n + 1));
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        rows[i][j] = (1.0 - cfg.arrival_persistence) * marginal[j] +
                     (i == j ? cfg.arrival_persistence : 0.0);
    return markov(std::move(rows));
  }

  ArrivalMode mode() const { return mode_; }
  int max_count() const { return static_cast<int>(rows_.front().size()) - 1; }

  const std::vector<double>& row(int prev_count) const {
    if (prev_count < 0 || prev_count > max_count())
      throw DomainError("previous arrival count " + std::to_string(prev_count) +
                        " outside D = {0.." + std::to_string(max_count()) + "}");
    return mode_ == ArrivalMode::iid ? rows_.front() : rows_[prev_count];
  }

  double mean(int prev_count = 0) const {
    const auto& r = row(prev_count);
    double m = 0;
    for (std::size_t k = 0; k < r.size(); ++k) m += static_cast<double>(k) * r[k];
    return m;
  }

  int sample(int prev_count, Rng& rng) const {
    row(prev_count);  // domain check
    const auto& c = cdf_[mode_ == ArrivalMode::iid ? 0 : prev_count];
    const double u = uniform01(rng);
    auto it = std::upper_bound(c.begin(), c.end(), u);
    return std::min(static_cast<int>(it - c.begin()), max_count());
  }

 private:
  void finish() {
    for (const auto& r : rows_) {
      if (r.empty()) throw DomainError("arrival distribution must not be empty");
      double s = 0;
      for (double v : r) {
        if (!(v >= 0.0 && v <= 1.0))
          throw DomainError("arrival probabilities must lie in [0, 1]");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw DomainError("arrival probability row must sum to 1");
      std::vector<double> c(r.size());
      double acc = 0;
      for (std::size_t k = 0; k < r.size(); ++k) c[k] = (acc += r[k]);
      c.back() = 1.0;
      cdf_.push_back(std::move(c));
    }
  }

  ArrivalMode mode_ = ArrivalMode::iid;
  std::vector<std::vector<double>> rows_;
  std::vector<std::vector<double>> cdf_;
};

inline int sample_arrivals(const ArrivalModel& model, int prev_count, Rng& rng) {
  return model.sample(prev_count, rng);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

// Reads `id,arrival_slot,length_mi` CSV. A non-numeric first line is a header.
inline std::vector<TaskSpec> parse_trace(std::istream& in) {
  std::vector<TaskSpec> tasks;
  std::unordered_set<std::int64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;

    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      const auto comma = view.find(',', start);
      fields.push_back(view.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }

    std::int64_t first = 0;
    if (line_no == 1 && !detail::parse_int(fields[0], first)) continue;  // header
    if (fields.size() != 3) throw ParseError("expected 3 fields", line_no);

    TaskSpec t;
    if (!detail::parse_int(fields[0], t.id) || t.id < 0)
      throw ParseError("malformed id", line_no);
    if (!detail::parse_int(fields[1], t.arrival_slot) || t.arrival_slot < 0)
      throw ParseError("malformed arrival_slot", line_no);
    if (!detail::parse_int(fields[2], t.length_mi))
      throw ParseError("malformed length_mi", line_no);
    if (t.length_mi <= 0) throw ParseError("non-positive length", line_no);
    if (!ids.insert(t.id).second) throw ParseError("duplicate id", line_no);
    tasks.push_back(t);
  }
  return tasks;
}

inline void write_trace(std::ostream& out, std::span<const TaskSpec> tasks) {
  out << "id,arrival_slot,length_mi\n";
  for (const auto& t : tasks) out << t.id << ',' << t.arrival_slot << ',' << t.length_mi << '\n';
}

// Synthetic workload: lengths uniform over [length_min, length_max], arrival
// counts per slot from the configured ArrivalModel. The first task always
// arrives in slot 0.
inline std::vector<TaskSpec> generate_workload(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ArrivalModel model = ArrivalModel::from_config(cfg);
  Rng rng(seed);
  std::uniform_int_distribution<std::int64_t> length(cfg.length_min, cfg.length_max);

  std::vector<TaskSpec> tasks;
  tasks.reserve(cfg.num_tasks);
  int prev = 0;
  std::int64_t first_slot = -1;
  for (std::int64_t slot = 0; static_cast<int>(tasks.size()) < cfg.num_tasks; ++slot) {
    prev = model.sample(prev, rng);
    for (int k = 0; k < prev && static_cast<int>(tasks.size()) < cfg.num_tasks; ++k) {
      if (first_slot < 0) first_slot = slot;
      TaskSpec t;
      t.id = static_cast<std::int64_t>(tasks.size());
      t.arrival_slot = slot - first_slot;
      t.length_mi = length(rng);
      tasks.push_back(t);
    }
    if (slot > 100'000'000) throw DomainError("arrival model produced no tasks");
  }
  return tasks;
}

}  // namespace qlsched
