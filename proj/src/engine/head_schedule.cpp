#include "sparf/engine/head_schedule.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "sparf/errors.hpp"

namespace sparf::engine {

namespace {

enum Resource : std::size_t { kFlash, kKernel, kArgTopK, kOutputLink, kResourceCount };

struct Dep {
  std::size_t task;
  bool partial;
};

struct Task {
  std::size_t head = 0;
  Resource resource = kFlash;
  double occupy_us = 0;
  double latency_us = 0;  // after the resource is released, before completion
  double partial_us = 0;  // offset from start of the partial milestone
  std::vector<Dep> deps;
  // Filled by the schedule.
  double start = -1, release = -1, partial = -1, finish = -1;
  std::size_t unit = 0;
};

void add_head_tasks(std::size_t head, const EngineConfig& cfg, const HeadWork& w,
                    const FlashLoadModel& load, std::vector<Task>& tasks) {
  const StageBreakdown b = stage_latencies(cfg, w, load);
  auto add = [&](Resource r, double occ, std::vector<Dep> deps) {
    Task t;
    t.head = head;
    t.resource = r;
    t.occupy_us = occ;
    t.partial_us = occ;
    t.deps = std::move(deps);
    tasks.push_back(std::move(t));
    return tasks.size() - 1;
  };
  const double occ_k = load.occupancy_us(static_cast<double>(w.key_row_pages));
  const double occ_v = load.occupancy_us(static_cast<double>(w.value_row_pages));
  const double lat_kv = load.latency_us(static_cast<double>(w.key_row_pages + w.value_row_pages));

  std::vector<Dep> kv_deps;
  if (w.sparse) {
    const std::size_t ar = add(kArgTopK, b[Stage::kArgTopKR], {});
    const std::size_t col = add(kFlash, load.occupancy_us(static_cast<double>(w.column_pages)),
                                {{ar, false}});
    tasks[col].latency_us = load.latency_us(static_cast<double>(w.column_pages));
    tasks[col].partial_us = tasks[col].occupy_us + tasks[col].latency_us;
    const std::size_t l0 = add(kKernel, b[Stage::kLogit0], {{col, false}});
    const std::size_t ak = add(kArgTopK, b[Stage::kArgTopKK], {{l0, false}});
    kv_deps.push_back({ak, false});
  }
  const std::size_t kv = add(kFlash, occ_k + occ_v, kv_deps);
  tasks[kv].latency_us = lat_kv;
  tasks[kv].partial_us = lat_kv + occ_k;
  const std::size_t logit = add(kKernel, b[Stage::kLogit], {{kv, true}});
  const std::size_t attend = add(kKernel, b[Stage::kAttend], {{kv, false}, {logit, false}});
  add(kOutputLink, b[Stage::kOutput], {{attend, false}});
}

}  // namespace

HeadScheduleResult head_schedule(const EngineConfig& cfg, std::span<const HeadWork> heads,
                                 const FlashLoadModel& load) {
  if (heads.empty()) throw ConfigError("head_schedule: at least one head required");
  std::vector<Task> tasks;
  for (std::size_t h = 0; h < heads.size(); ++h) add_head_tasks(h, cfg, heads[h], load, tasks);

  const std::array<std::size_t, kResourceCount> capacity{1, cfg.kernel_count, 1, 1};
  std::array<std::vector<double>, kResourceCount> unit_free;
  for (std::size_t r = 0; r < kResourceCount; ++r) unit_free[r].assign(capacity[r], 0.0);

  HeadScheduleResult out;
  out.kernel_busy_us.assign(cfg.kernel_count, 0.0);

  std::set<double> times{0.0};
  std::size_t done = 0;
  auto dep_time = [&](const Dep& d) {
    const Task& t = tasks[d.task];
    return d.partial ? t.partial : t.finish;
  };
  while (done < tasks.size()) {
    if (times.empty()) throw InvariantError("head_schedule: deadlock");
    const double now = *times.begin();
    times.erase(times.begin());
    // Tasks are stored head-major, so scanning in order gives lowest head first.
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      Task& t = tasks[i];
      if (t.start >= 0) continue;
      bool ready = true;
      for (const Dep& d : t.deps) {
        const double at = tasks[d.task].start < 0 ? -1 : dep_time(d);
        if (at < 0 || at > now) {
          ready = false;
          break;
        }
      }
      if (!ready) continue;
      auto& units = unit_free[t.resource];
      const auto it = std::min_element(units.begin(), units.end());
      if (*it > now) continue;
      t.unit = static_cast<std::size_t>(it - units.begin());
      t.start = now;
      t.release = now + t.occupy_us;
      t.partial = now + t.partial_us;
      t.finish = now + t.occupy_us + t.latency_us;
      *it = t.release;
      times.insert(t.release);
      times.insert(t.partial);
      times.insert(t.finish);
      ++done;
      switch (t.resource) {
        case kFlash: out.flash_busy_us += t.occupy_us; break;
        case kKernel: out.kernel_busy_us[t.unit] += t.occupy_us; break;
        case kArgTopK: out.argtopk_busy_us += t.occupy_us; break;
        default: break;
      }
    }
  }
  out.completion_us.assign(heads.size(), 0.0);
  for (const Task& t : tasks) {
    out.completion_us[t.head] = std::max(out.completion_us[t.head], t.finish);
    out.makespan_us = std::max(out.makespan_us, t.finish);
  }
  return out;
}

double pipelined_makespan_us(const EngineConfig& cfg, const HeadWork& work,
                             const FlashLoadModel& load, double count) {
  if (count <= 0) return 0.0;
  const double first = stage_latencies(cfg, work, load).total_us;
  const double interval = resource_demand(cfg, work, load).bottleneck_us(cfg.kernel_count);
  if (count < 1) return first * count;
  return first + (count - 1) * interval;
}

}  // namespace sparf::engine
