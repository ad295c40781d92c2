#include "sparf/flash/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>

#include "sparf/errors.hpp"

namespace sparf::flash {

void FlashTiming::validate() const {
  if (t_read_page_us < 0 || t_program_page_us < 0 || t_erase_block_us < 0 ||
      command_overhead_us < 0)
    throw ConfigError("FlashTiming: latencies must be >= 0");
  if (!(channel_bandwidth > 0)) throw ConfigError("FlashTiming: channel_bandwidth must be > 0");
}

const char* to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::kRead: return "read";
    case CommandKind::kProgram: return "program";
    case CommandKind::kErase: return "erase";
  }
  return "?";
}

std::size_t EventTimeline::bytes() const {
  std::size_t n = 0;
  for (const auto& c : commands)
    if (c.kind != CommandKind::kErase) ++n;
  return n * page_size;
}

double EventTimeline::first_issue_us() const {
  double t = commands.empty() ? 0.0 : commands.front().issue_us;
  for (const auto& c : commands) t = std::min(t, c.issue_us);
  return t;
}

double EventTimeline::last_completion_us() const {
  double t = 0.0;
  for (const auto& c : commands) t = std::max(t, c.complete_us);
  return t;
}

double EventTimeline::makespan_us() const {
  if (commands.empty()) return 0.0;
  return last_completion_us() - first_issue_us();
}

double EventTimeline::channel_busy_us(std::size_t channel) const {
  double busy = 0.0;
  for (const auto& c : commands)
    if (c.kind != CommandKind::kErase && c.address.channel == channel)
      busy += c.transfer_end_us - c.transfer_start_us;
  return busy;
}

void EventTimeline::check_invariants(const FlashGeometry& g) const {
  constexpr double eps = 1e-9;
  std::vector<std::vector<std::pair<double, double>>> chan(g.channels), die(g.dies());
  for (const auto& c : commands) {
    if (!c.address.valid_in(g)) throw InvariantError("timeline address outside geometry");
    if (c.die_start_us + eps < c.issue_us || c.die_end_us + eps < c.die_start_us ||
        c.complete_us + eps < c.die_start_us)
      throw InvariantError(std::string("out-of-order phases in ") + to_string(c.kind));
    if (c.kind != CommandKind::kErase) {
      if (c.transfer_end_us + eps < c.transfer_start_us)
        throw InvariantError("negative transfer interval");
      chan[c.address.channel].emplace_back(c.transfer_start_us, c.transfer_end_us);
    }
    die[c.address.die_index(g)].emplace_back(c.die_start_us, c.die_end_us);
  }
  auto check = [&](auto& lists, const char* what) {
    for (auto& l : lists) {
      std::sort(l.begin(), l.end());
      for (std::size_t i = 1; i < l.size(); ++i)
        if (l[i].first + eps < l[i - 1].second)
          throw InvariantError(std::string("overlapping ") + what + " occupancy");
    }
  };
  check(chan, "channel");
  check(die, "die");
}

std::string EventTimeline::to_csv() const {
  std::string out = "command,channel,die,start_us,end_us\n";
  char buf[160];
  for (const auto& c : commands) {
    std::snprintf(buf, sizeof buf, "%s,%u,%u,%.6f,%.6f\n", to_string(c.kind), c.address.channel,
                  c.address.die, c.die_start_us, c.complete_us);
    out += buf;
  }
  return out;
}

FlashSimulator::FlashSimulator(FlashGeometry geometry, FlashTiming timing)
    : geometry_(geometry), timing_(timing) {
  geometry_.validate();
  timing_.validate();
  reset();
}

void FlashSimulator::reset() {
  die_free_us_.assign(geometry_.dies(), 0.0);
  channel_free_us_.assign(geometry_.channels, 0.0);
  programmed_.clear();
}

bool FlashSimulator::is_programmed(const PhysicalPageAddress& a) const {
  return programmed_.count(a.flat(geometry_)) != 0;
}

namespace {

std::vector<FlashCommand> uniform(std::span<const PhysicalPageAddress> pages, CommandKind kind,
                                  double issue_us) {
  std::vector<FlashCommand> cmds;
  cmds.reserve(pages.size());
  for (const auto& p : pages) cmds.push_back({kind, p, issue_us});
  return cmds;
}

enum class Ev { kArrive, kArrayDone, kTransferDone };

struct Event {
  double time;
  std::size_t seq;
  Ev type;
  std::size_t cmd;
  bool operator>(const Event& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
};

}  // namespace

EventTimeline FlashSimulator::schedule_reads(std::span<const PhysicalPageAddress> pages,
                                             double issue_us) {
  const auto cmds = uniform(pages, CommandKind::kRead, issue_us);
  return schedule(cmds);
}

EventTimeline FlashSimulator::schedule_programs(std::span<const PhysicalPageAddress> pages,
                                                double issue_us) {
  const auto cmds = uniform(pages, CommandKind::kProgram, issue_us);
  return schedule(cmds);
}

EventTimeline FlashSimulator::schedule_erases(std::span<const PhysicalPageAddress> blocks,
                                              double issue_us) {
  const auto cmds = uniform(blocks, CommandKind::kErase, issue_us);
  return schedule(cmds);
}

EventTimeline FlashSimulator::schedule(std::span<const FlashCommand> commands) {
  const auto& g = geometry_;
  const std::size_t n = commands.size();
  EventTimeline tl;
  tl.page_size = g.page_size;
  tl.commands.resize(n);

  // Validate and apply append-only bookkeeping in submission order.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = commands[i];
    PhysicalPageAddress a = c.address;
    if (c.kind == CommandKind::kErase) a.page = 0;
    if (!a.valid_in(g))
      throw MappingError("flash command address outside geometry (channel " +
                         std::to_string(a.channel) + ", die " + std::to_string(a.die) + ")");
    if (c.issue_us < 0) throw ConfigError("flash command issued at negative time");
    if (c.kind == CommandKind::kProgram) {
      if (!programmed_.insert(a.flat(g)).second)
        throw InvariantError("page programmed twice without erase");
    } else if (c.kind == CommandKind::kErase) {
      for (std::size_t p = 0; p < g.pages_per_block; ++p) {
        PhysicalPageAddress q = a;
        q.page = static_cast<std::uint32_t>(p);
        programmed_.erase(q.flat(g));
      }
    }
    auto& r = tl.commands[i];
    r.kind = c.kind;
    r.address = a;
    r.issue_us = c.issue_us;
  }

  // Priority within a die and a channel: earlier issue, then submission order.
  std::vector<std::size_t> rank(n);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return commands[a].issue_us < commands[b].issue_us;
    });
    for (std::size_t i = 0; i < n; ++i) rank[order[i]] = i;
  }

  const double xfer = timing_.transfer_us(g.page_size);
  std::vector<std::deque<std::size_t>> die_queue(g.dies());
  std::vector<bool> die_busy(g.dies(), false);
  std::vector<bool> chan_busy(g.channels, false);
  // Ready transfers per channel keyed by rank.
  using Ready = std::pair<std::size_t, std::size_t>;  // (rank, cmd)
  std::vector<std::priority_queue<Ready, std::vector<Ready>, std::greater<>>> ready(g.channels);

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::size_t seq = 0;
  auto push = [&](double t, Ev type, std::size_t cmd) { events.push({t, seq++, type, cmd}); };

  // Arrivals enter die queues in rank order at equal times.
  {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[rank[i]] = i;
    for (std::size_t i : order) push(commands[i].issue_us + timing_.command_overhead_us, Ev::kArrive, i);
  }

  auto try_channel = [&](std::size_t ch, double t) {
    if (chan_busy[ch] || ready[ch].empty()) return;
    const std::size_t cmd = ready[ch].top().second;
    ready[ch].pop();
    const double start = std::max(t, channel_free_us_[ch]);
    chan_busy[ch] = true;
    tl.commands[cmd].transfer_start_us = start;
    tl.commands[cmd].transfer_end_us = start + xfer;
    push(start + xfer, Ev::kTransferDone, cmd);
  };

  auto try_die = [&](std::size_t d, double t) {
    if (die_busy[d] || die_queue[d].empty()) return;
    const std::size_t cmd = die_queue[d].front();
    die_queue[d].pop_front();
    die_busy[d] = true;
    auto& r = tl.commands[cmd];
    const double start = std::max(t, die_free_us_[d]);
    r.die_start_us = start;
    switch (r.kind) {
      case CommandKind::kRead:
        push(start + timing_.t_read_page_us, Ev::kArrayDone, cmd);
        break;
      case CommandKind::kErase:
        push(start + timing_.t_erase_block_us, Ev::kArrayDone, cmd);
        break;
      case CommandKind::kProgram:
        ready[r.address.channel].emplace(rank[cmd], cmd);
        try_channel(r.address.channel, start);
        break;
    }
  };

  while (!events.empty()) {
    const Event e = events.top();
    events.pop();
    auto& r = tl.commands[e.cmd];
    const std::size_t d = r.address.die_index(g);
    const std::size_t ch = r.address.channel;
    switch (e.type) {
      case Ev::kArrive:
        die_queue[d].push_back(e.cmd);
        try_die(d, e.time);
        break;
      case Ev::kArrayDone:
        if (r.kind == CommandKind::kRead) {
          ready[ch].emplace(rank[e.cmd], e.cmd);
          try_channel(ch, e.time);
        } else {
          r.die_end_us = r.complete_us = e.time;
          if (r.kind == CommandKind::kErase) r.transfer_start_us = r.transfer_end_us = e.time;
          die_busy[d] = false;
          die_free_us_[d] = e.time;
          try_die(d, e.time);
        }
        break;
      case Ev::kTransferDone:
        chan_busy[ch] = false;
        channel_free_us_[ch] = e.time;
        if (r.kind == CommandKind::kRead) {
          r.die_end_us = r.complete_us = e.time;
          die_busy[d] = false;
          die_free_us_[d] = e.time;
          try_die(d, e.time);
        } else {
          push(e.time + timing_.t_program_page_us, Ev::kArrayDone, e.cmd);
        }
        try_channel(ch, e.time);
        break;
    }
  }
  return tl;
}

double measure_bandwidth(const EventTimeline& timeline) {
  if (timeline.empty()) throw InvariantError("measure_bandwidth: empty timeline");
  const double span = timeline.makespan_us();
  if (!(span > 0)) throw InvariantError("measure_bandwidth: zero makespan");
  return static_cast<double>(timeline.bytes()) / (span * 1e-6);
}

EventTimeline streaming_read(const FlashGeometry& geometry, const FlashTiming& timing,
                             std::size_t channels, std::size_t pages_per_channel) {
  if (channels < 1 || channels > geometry.channels)
    throw ConfigError("streaming_read: channel count out of range");
  std::vector<PhysicalPageAddress> pages;
  pages.reserve(channels * pages_per_channel);
  for (std::size_t i = 0; i < pages_per_channel; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      PhysicalPageAddress a;
      a.channel = static_cast<std::uint32_t>(c);
      a.die = static_cast<std::uint32_t>(i % geometry.dies_per_channel);
      const std::size_t nth = i / geometry.dies_per_channel;
      a.page = static_cast<std::uint32_t>(nth % geometry.pages_per_block);
      a.block = static_cast<std::uint32_t>((nth / geometry.pages_per_block) % geometry.blocks_per_plane);
      pages.push_back(a);
    }
  }
  FlashSimulator sim(geometry, timing);
  return sim.schedule_reads(pages);
}

double read_time_bound_us(const FlashTiming& timing, std::size_t page_size, std::size_t pages,
                          std::size_t channels) {
  if (pages == 0) return 0.0;
  const std::size_t per_channel = (pages + channels - 1) / channels;
  return timing.command_overhead_us + timing.t_read_page_us +
         static_cast<double>(per_channel) * timing.transfer_us(page_size);
}

}  // namespace sparf::flash
