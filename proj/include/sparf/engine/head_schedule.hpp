#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sparf/engine/engine_model.hpp"

namespace sparf::engine {

struct HeadScheduleResult {
  std::vector<double> completion_us;  // per head, input order
  double makespan_us = 0;
  double flash_busy_us = 0;
  std::vector<double> kernel_busy_us;  // per kernel
  double argtopk_busy_us = 0;
};

/// Event-driven schedule of several heads on one device. Resources are the
/// channel array, `kernel_count` kernels, the argtopk unit and the output
/// link. Each free resource takes the ready stage of the lowest-numbered head,
/// so loads for later heads overlap compute of earlier ones.
HeadScheduleResult head_schedule(const EngineConfig& cfg, std::span<const HeadWork> heads,
                                 const FlashLoadModel& load);

/// Closed-form makespan for `count` identical heads (count may be
/// fractional when work is shared across devices): the first head's
/// critical path, then one bottleneck interval per further head.
double pipelined_makespan_us(const EngineConfig& cfg, const HeadWork& work,
                             const FlashLoadModel& load, double count);

}  // namespace sparf::engine
