#include "sparf/system/sweep.hpp"

#include <omp.h>

#include <cstdio>
#include <exception>

#include "sparf/errors.hpp"

namespace sparf::system {

namespace {

[[noreturn]] void rethrow_with_id(std::exception_ptr ep, const std::string& id) {
  const std::string prefix = "config '" + id + "': ";
  try {
    std::rethrow_exception(ep);
  } catch (const CapacityError& e) {
    throw CapacityError(e.constraint(), prefix + e.detail());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const MappingError& e) {
    throw MappingError(prefix + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<SweepRow> run_sweep(const std::vector<Scenario>& scenarios, int threads) {
  const auto n = static_cast<std::ptrdiff_t>(scenarios.size());
  std::vector<SweepRow> rows(scenarios.size());
  std::vector<std::exception_ptr> errors(scenarios.size());
  const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(team)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      rows[i].scenario = scenarios[i];
      rows[i].report = simulate(scenarios[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i]) rethrow_with_id(errors[i], scenarios[i].id);
  return rows;
}

std::string results_csv_header() {
  return "config_id,system,model,batch,s_in,s_out,csd_count,sparsity,ratio,prefill_s,"
         "decode_total_s,decode_per_token_s,weight_access_s,kv_access_s,compute_s,transfer_s,"
         "weight_share,kv_share,compute_share,transfer_share,throughput_tok_s,peak_vram_bytes,"
         "kv_cache_bytes,seed";
}

std::string results_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kCsvSchemaLine) + "\n" + results_csv_header() + "\n";
  for (const auto& row : rows) {
    const Scenario& s = row.scenario;
    const ScenarioReport& r = row.report;
    const bool sparse = s.sparsity.sparse;
    const std::vector<std::string> cells = {
        s.id,
        to_string(s.system),
        s.model.name,
        std::to_string(s.workload.batch),
        std::to_string(s.workload.s_in),
        std::to_string(s.workload.s_out),
        std::to_string(s.hardware.csd_count),
        sparse ? "sparf" : "dense",
        fmt(sparse ? s.sparsity.ratio : 1.0),
        fmt(r.prefill_s),
        fmt(r.decode_total_s),
        fmt(r.decode_per_token_s),
        fmt(r.weight_access_s),
        fmt(r.kv_access_s),
        fmt(r.compute_s),
        fmt(r.transfer_s),
        fmt(r.weight_share()),
        fmt(r.kv_share()),
        fmt(r.compute_share()),
        fmt(r.transfer_share()),
        fmt(r.throughput_tok_s),
        fmt(r.peak_vram_bytes),
        fmt(r.kv_cache_bytes),
        std::to_string(s.seed),
    };
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  }
  return out;
}

std::string stages_csv(const std::vector<SweepRow>& rows) {
  std::string out = "config_id,stage,us,bytes\n";
  for (const auto& row : rows) {
    if (row.scenario.system != SystemKind::kInstInfer) continue;
    const auto& b = row.report.last_step_stages;
    for (std::size_t i = 0; i < engine::kStageCount; ++i) {
      out += row.scenario.id + ',' + std::string(engine::stage_name(static_cast<engine::Stage>(i))) +
             ',' + fmt(b.stage_us[i]) + ',' + std::to_string(b.stage_bytes[i]) + '\n';
    }
  }
  return out;
}

std::vector<std::string> preset_names() {
  return {"fig-throughput", "fig-breakdown", "fig-scaling", "fig-compression"};
}

namespace {

struct Variant {
  const char* label;
  SystemKind system;
  bool sparse;
  std::size_t csds;
};

Scenario make(const std::string& id, const Variant& v, std::size_t batch, double ratio,
              std::uint64_t seed) {
  Scenario s;
  s.id = id;
  s.system = v.system;
  s.workload = {batch, 1024, 1024};
  s.sparsity.sparse = v.sparse;
  s.sparsity.ratio = v.sparse ? ratio : 1.0;
  s.hardware.csd_count = v.csds;
  s.seed = seed;
  return s;
}

}  // namespace

std::vector<Scenario> preset_scenarios(const std::string& name, std::uint64_t seed) {
  std::vector<Scenario> out;
  const double eighth = 0.125;
  if (name == "fig-throughput") {
    const Variant systems[] = {{"deepspeed", SystemKind::kHostOffload, false, 1},
                               {"flexgen", SystemKind::kSsdOffload, false, 1},
                               {"flexgen-sparq", SystemKind::kSsdOffload, true, 1},
                               {"insti", SystemKind::kInstInfer, false, 1},
                               {"insti-sparf", SystemKind::kInstInfer, true, 1}};
    for (std::size_t b : {4, 8, 16, 32, 64, 128, 256})
      for (const auto& v : systems)
        out.push_back(make(name + "/" + v.label + "/b" + std::to_string(b), v, b, eighth, seed));
  } else if (name == "fig-breakdown") {
    const Variant systems[] = {{"flexgen", SystemKind::kSsdOffload, false, 1},
                               {"insti", SystemKind::kInstInfer, false, 1},
                               {"insti-2", SystemKind::kInstInfer, false, 2}};
    for (bool sparse : {false, true})
      for (std::size_t b : {4, 64, 256})
        for (Variant v : systems) {
          v.sparse = sparse;
          out.push_back(make(name + "/" + v.label + (sparse ? "/sparse" : "/dense") + "/b" +
                                 std::to_string(b),
                             v, b, eighth, seed));
        }
  } else if (name == "fig-scaling") {
    for (bool sparse : {false, true})
      for (std::size_t n : {1, 2, 4, 8, 12, 16, 20}) {
        const Variant v{"insti", SystemKind::kInstInfer, sparse, n};
        out.push_back(make(name + (sparse ? "/sparse" : "/dense") + "/csd" + std::to_string(n), v,
                           256, eighth, seed));
      }
  } else if (name == "fig-compression") {
    for (std::size_t n : {1, 2})
      for (int denom : {1, 2, 4, 8}) {
        const Variant v{"insti", SystemKind::kInstInfer, true, n};
        out.push_back(make(name + "/csd" + std::to_string(n) + "/r1_" + std::to_string(denom), v,
                           256, 1.0 / denom, seed));
      }
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected fig-throughput, fig-breakdown, fig-scaling, fig-compression)");
  }
  return out;
}

}  // namespace sparf::system
