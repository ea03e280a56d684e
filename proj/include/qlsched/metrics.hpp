#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qlsched/cloud_model.hpp"
#include "qlsched/errors.hpp"

namespace qlsched {

// Time metrics use completed tasks only; aborted attempts are counted apart.
namespace detail {

template <class F>
double mean_over_completed(std::span<const CompletionRecord> records, F&& value, const char* name) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : records)
    if (!r.aborted) {
      sum += value(r);
      ++n;
    }
  if (n == 0) throw UndefinedMetric(std::string(name) + " of an empty record set");
  return sum / static_cast<double>(n);
}

}  // namespace detail

inline double avg_response_time(std::span<const CompletionRecord> records) {
  return detail::mean_over_completed(
      records, [](const CompletionRecord& r) { return r.response_s(); }, "average response time");
}

inline double avg_waiting_time(std::span<const CompletionRecord> records) {
  return detail::mean_over_completed(
      records, [](const CompletionRecord& r) { return r.wait_s(); }, "average waiting time");
}

// Latest finish time; the time origin is the first task's arrival.
inline double makespan(std::span<const CompletionRecord> records) {
  std::optional<double> m;
  for (const auto& r : records)
    if (!r.aborted) m = std::max(m.value_or(r.finish_s), r.finish_s);
  if (!m) throw UndefinedMetric("makespan of an empty record set");
  return *m;
}

struct VmUsage {
  double utilization = 0.0;  // busy PE-seconds / (horizon * PEs)
  double load_share = 0.0;   // share of completed MI
};

inline std::vector<VmUsage> utilization_and_load(std::span<const CompletionRecord> records,
                                                 double horizon, std::span<const VmSpec> vms) {
  if (!(horizon > 0)) throw DomainError("utilization horizon must be > 0");
  std::vector<double> busy(vms.size(), 0.0);
  std::vector<double> work(vms.size(), 0.0);
  double total_work = 0;
  for (const auto& r : records) {
    if (r.aborted) continue;
    if (r.vm_index < 0 || r.vm_index >= static_cast<int>(vms.size()))
      throw DomainError("record references an unknown VM");
    if (r.finish_s > horizon) throw DomainError("utilization horizon is shorter than the makespan");
    busy[r.vm_index] += r.exec_s;
    work[r.vm_index] += static_cast<double>(r.length_mi);
    total_work += static_cast<double>(r.length_mi);
  }
  std::vector<VmUsage> out(vms.size());
  for (std::size_t k = 0; k < vms.size(); ++k) {
    out[k].utilization = busy[k] / (horizon * vms[k].pes);
    out[k].load_share = total_work > 0 ? work[k] / total_work : 0.0;
  }
  return out;
}

struct MetricsReport {
  double avg_response_s = 0.0;
  double avg_wait_s = 0.0;
  double makespan_s = 0.0;
  std::vector<double> utilization;
  std::vector<double> load_share;
  std::size_t task_count = 0;   // completed
  std::size_t abort_count = 0;
};

// Horizon defaults to the makespan.
inline MetricsReport compute_report(std::span<const CompletionRecord> records,
                                    std::span<const VmSpec> vms,
                                    std::optional<double> horizon = std::nullopt) {
  MetricsReport rep;
  for (const auto& r : records) (r.aborted ? rep.abort_count : rep.task_count) += 1;
  rep.avg_response_s = avg_response_time(records);
  rep.avg_wait_s = avg_waiting_time(records);
  rep.makespan_s = makespan(records);
  for (const auto& u : utilization_and_load(records, horizon.value_or(rep.makespan_s), vms)) {
    rep.utilization.push_back(u.utilization);
    rep.load_share.push_back(u.load_share);
  }
  return rep;
}

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1) standard deviation; 0 for a single value
};

inline MetricSummary summarize(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("cannot summarize an empty sample");
  MetricSummary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct AggregateReport {
  std::size_t replications = 0;
  MetricSummary avg_response_s;
  MetricSummary avg_wait_s;
  MetricSummary makespan_s;
  std::vector<MetricSummary> utilization;
  std::vector<MetricSummary> load_share;
  MetricSummary task_count;
  MetricSummary abort_count;
};

inline AggregateReport aggregate(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw DomainError("aggregate needs at least one report");
  const std::size_t vms = reports.front().utilization.size();
  auto column = [&](auto&& get) {
    std::vector<double> xs;
    xs.reserve(reports.size());
    for (const auto& r : reports) xs.push_back(static_cast<double>(get(r)));
    return summarize(xs);
  };

  AggregateReport agg;
  agg.replications = reports.size();
  agg.avg_response_s = column([](const MetricsReport& r) { return r.avg_response_s; });
  agg.avg_wait_s = column([](const MetricsReport& r) { return r.avg_wait_s; });
  agg.makespan_s = column([](const MetricsReport& r) { return r.makespan_s; });
  agg.task_count = column([](const MetricsReport& r) { return r.task_count; });
  agg.abort_count = column([](const MetricsReport& r) { return r.abort_count; });
  for (const auto& r : reports)
    if (r.utilization.size() != vms || r.load_share.size() != vms)
      throw DomainError("reports disagree on the number of VMs");
  for (std::size_t k = 0; k < vms; ++k) {
    agg.utilization.push_back(column([k](const MetricsReport& r) { return r.utilization[k]; }));
    agg.load_share.push_back(column([k](const MetricsReport& r) { return r.load_share[k]; }));
  }
  return agg;
}

}  // namespace qlsched
