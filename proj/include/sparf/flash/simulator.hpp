#pragma once

// Discrete-event timing model of a multi-channel NAND backend.
//
// A read holds its die for the array read and until its page has crossed the
// channel; a program waits for an idle die, crosses the channel, then holds
// the die for the array program. Each channel moves one page at a time and
// always takes the oldest ready transfer.

#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "sparf/layout/geometry.hpp"

namespace sparf::flash {

using layout::FlashGeometry;
using layout::PhysicalPageAddress;

/// Latencies in microseconds, bandwidth in bytes/s.
struct FlashTiming {
  double t_read_page_us = 50.0;
  double t_program_page_us = 600.0;
  double t_erase_block_us = 3000.0;
  double channel_bandwidth = 1.4e9;
  double command_overhead_us = 5.0;

  void validate() const;
  double transfer_us(std::size_t bytes) const { return static_cast<double>(bytes) / channel_bandwidth * 1e6; }
};

enum class CommandKind { kRead, kProgram, kErase };

const char* to_string(CommandKind kind);

struct FlashCommand {
  CommandKind kind = CommandKind::kRead;
  PhysicalPageAddress address;  // page is ignored for erases
  double issue_us = 0.0;
};

/// Per-command timestamps. Erases have no transfer (start == end == die_end).
struct CommandRecord {
  CommandKind kind = CommandKind::kRead;
  PhysicalPageAddress address;
  double issue_us = 0;
  double die_start_us = 0;  // die becomes occupied
  double die_end_us = 0;    // die released
  double transfer_start_us = 0;
  double transfer_end_us = 0;
  double complete_us = 0;
};

struct EventTimeline {
  std::vector<CommandRecord> commands;  // in submission order
  std::size_t page_size = 0;

  bool empty() const noexcept { return commands.empty(); }
  /// Bytes moved over channels (reads and programs).
  std::size_t bytes() const;
  double first_issue_us() const;
  double last_completion_us() const;
  double makespan_us() const;
  /// Sum of transfer time on `channel`.
  double channel_busy_us(std::size_t channel) const;

  /// Throws InvariantError on overlapping transfers on a channel, overlapping
  /// occupancy on a die, or out-of-order phases within a command.
  void check_invariants(const FlashGeometry& g) const;

  /// "command,channel,die,start_us,end_us" rows.
  std::string to_csv() const;
};

class FlashSimulator {
 public:
  FlashSimulator(FlashGeometry geometry, FlashTiming timing);

  const FlashGeometry& geometry() const noexcept { return geometry_; }
  const FlashTiming& timing() const noexcept { return timing_; }

  EventTimeline schedule_reads(std::span<const PhysicalPageAddress> pages, double issue_us = 0.0);
  /// Throws InvariantError when a page is programmed twice without an erase.
  EventTimeline schedule_programs(std::span<const PhysicalPageAddress> pages, double issue_us = 0.0);
  /// One erase per listed block (page index ignored).
  EventTimeline schedule_erases(std::span<const PhysicalPageAddress> blocks, double issue_us = 0.0);
  /// Mixed batch; ties in issue time keep submission order.
  EventTimeline schedule(std::span<const FlashCommand> commands);

  bool is_programmed(const PhysicalPageAddress& a) const;
  /// Forget device occupancy and programmed pages.
  void reset();

 private:
  FlashGeometry geometry_;
  FlashTiming timing_;
  std::vector<double> die_free_us_;
  std::vector<double> channel_free_us_;
  std::unordered_set<std::size_t> programmed_;
};

/// Bytes moved / makespan, in bytes per second. Throws InvariantError when
/// the timeline is empty.
double measure_bandwidth(const EventTimeline& timeline);

/// A sustained read of `pages_per_channel` pages on each of the first
/// `channels` channels, spread round-robin over the dies.
EventTimeline streaming_read(const FlashGeometry& geometry, const FlashTiming& timing,
                             std::size_t channels, std::size_t pages_per_channel);

/// Closed-form lower bound for reading `pages` pages spread evenly across
/// `channels` channels: overhead + array read + ceil(pages/channels) transfers.
double read_time_bound_us(const FlashTiming& timing, std::size_t page_size, std::size_t pages,
                          std::size_t channels);

}  // namespace sparf::flash
