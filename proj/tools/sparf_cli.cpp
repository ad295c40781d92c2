// sparf-sim: scenario runs, figure presets, verification and the accuracy harness.
//
// Exit codes: 0 ok, 1 verification failed, 2 bad input, 3 infeasible scenario.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "sparf/errors.hpp"
#include "sparf/layout/kv_layout.hpp"
#include "sparf/system/config.hpp"
#include "sparf/system/sweep.hpp"
#include "sparf/verify/accuracy.hpp"
#include "sparf/verify/checks.hpp"

namespace {

using namespace sparf;

int max_threads() {
  if (const char* env = std::getenv("SPARF_MAX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> csd_count;
  std::optional<double> ratio;

  void apply(std::vector<system::Scenario>& scenarios) const {
    for (auto& s : scenarios) {
      if (seed) s.seed = *seed;
      if (csd_count) s.hardware.csd_count = *csd_count;
      if (ratio) {
        s.sparsity.sparse = true;
        s.sparsity.ratio = *ratio;
      }
      s.validate();
    }
  }
};

struct SweepOutput {
  std::string out;
  std::string stages_out;
  bool quiet = false;
};

void summarize(const std::vector<system::SweepRow>& rows) {
  for (const auto& r : rows) {
    const auto& rep = r.report;
    std::fprintf(stderr,
                 "%-40s %-12s b=%-4zu csd=%-2zu %8.2f tok/s  prefill %.3f s  decode %.4f s/token  "
                 "kv %.1f%% weight %.1f%%\n",
                 r.scenario.id.c_str(), system::to_string(r.scenario.system).c_str(),
                 r.scenario.workload.batch, r.scenario.hardware.csd_count, rep.throughput_tok_s,
                 rep.prefill_s, rep.decode_per_token_s, 100 * rep.kv_share(),
                 100 * rep.weight_share());
  }
}

void run_and_write(const std::vector<system::Scenario>& scenarios, const SweepOutput& o) {
  const auto rows = system::run_sweep(scenarios, max_threads());
  write_text(o.out, system::results_csv(rows));
  if (!o.stages_out.empty()) write_text(o.stages_out, system::stages_csv(rows));
  if (!o.quiet) summarize(rows);
}

void add_overrides(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override the seed of every scenario");
  cmd->add_option("--csd-count", ov.csd_count, "Override the number of CSDs")->check(CLI::PositiveNumber);
  cmd->add_option("--ratio", ov.ratio, "Run sparse with this compression ratio (kept fraction)");
}

void add_outputs(CLI::App* cmd, SweepOutput& o) {
  cmd->add_option("--out,-o", o.out, "Results CSV path (default: stdout)");
  cmd->add_option("--stages-out", o.stages_out, "Per-stage engine breakdown CSV path");
  cmd->add_flag("--quiet,-q", o.quiet, "No human-readable summary on stderr");
}

std::vector<double> parse_ratio_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto slash = item.find('/');
    try {
      out.push_back(slash == std::string::npos
                        ? std::stod(item)
                        : std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1)));
    } catch (const std::exception&) {
      throw ConfigError("bad ratio '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-storage sparse attention simulator"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  SweepOutput sweep_out;

  auto* run = app.add_subcommand("run", "Simulate one scenario file");
  run->add_option("--config,-c", config_path, "Scenario JSON")->required();
  add_overrides(run, ov);
  add_outputs(run, sweep_out);

  auto* sweep = app.add_subcommand("sweep", "Simulate every scenario of a sweep file");
  sweep->add_option("--config,-c", config_path, "Sweep JSON (array or {base, scenarios})")->required();
  add_overrides(sweep, ov);
  add_outputs(sweep, sweep_out);

  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "Run a named figure sweep");
  preset->add_option("name", preset_name, "fig-throughput | fig-breakdown | fig-scaling | fig-compression")
      ->required();
  add_overrides(preset, ov);
  add_outputs(preset, sweep_out);

  verify::VerifyOptions vopt;
  bool verbose = false;
  auto* ver = app.add_subcommand("verify", "Run every invariant and oracle check");
  ver->add_option("--seed", vopt.seed, "Seed for random cases");
  ver->add_option("--heads", vopt.heads, "Random heads per attention check")->check(CLI::PositiveNumber);
  ver->add_option("--mutate-temperature", vopt.temperature_scale,
                  "Scale the approximate-score temperature of the engine under test");
  ver->add_option("--vectors", vopt.vectors_path, "Extra JSON test-vector file");
  ver->add_flag("--verbose,-v", verbose, "Print details of passing checks too");

  verify::AccuracyOptions aopt;
  std::string ratios_text = "1,1/2,1/4,1/8";
  std::string acc_out;
  auto* acc = app.add_subcommand("accuracy", "SparF error vs compression ratio on random heads");
  acc->add_option("--seed", aopt.seed, "Seed");
  acc->add_option("--head-dim", aopt.head_dim)->check(CLI::PositiveNumber);
  acc->add_option("--seq-len", aopt.seq_len)->check(CLI::PositiveNumber);
  acc->add_option("--heads", aopt.heads)->check(CLI::PositiveNumber);
  acc->add_option("--ratios", ratios_text, "Comma list, e.g. 1,1/2,1/4");
  acc->add_option("--out,-o", acc_out, "CSV path (default: stdout)");

  std::string trace_path, load_path, save_path, replies_path;
  layout::LayoutConfig lcfg;
  auto* lay = app.add_subcommand("layout", "Replay a KV write/lookup trace against the flash layout");
  lay->add_option("--trace", trace_path, "JSON-lines trace (default: stdin)");
  lay->add_option("--load", load_path, "Start from a saved layout state");
  lay->add_option("--save", save_path, "Write the final layout state as JSON");
  lay->add_option("--out,-o", replies_path, "Reply lines (default: stdout)");
  lay->add_option("--layers", lcfg.layers);
  lay->add_option("--heads", lcfg.heads);
  lay->add_option("--head-dim", lcfg.head_dim);
  lay->add_option("--embedding-group", lcfg.embedding_group);
  lay->add_option("--channels", lcfg.geometry.channels);
  lay->add_option("--dies-per-channel", lcfg.geometry.dies_per_channel);
  lay->add_option("--blocks-per-plane", lcfg.geometry.blocks_per_plane);
  lay->add_option("--pages-per-block", lcfg.geometry.pages_per_block);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || sweep->parsed()) {
      auto scenarios = system::scenarios_from_json(system::read_json_file(config_path));
      if (run->parsed() && scenarios.size() != 1)
        throw ConfigError("'run' takes a single scenario; use 'sweep' for " +
                          std::to_string(scenarios.size()));
      ov.apply(scenarios);
      run_and_write(scenarios, sweep_out);
    } else if (preset->parsed()) {
      auto scenarios = system::preset_scenarios(preset_name, ov.seed.value_or(0));
      ov.apply(scenarios);
      run_and_write(scenarios, sweep_out);
    } else if (ver->parsed()) {
      vopt.threads = max_threads();
      const auto results = verify::run_verify(vopt);
      for (const auto& r : results) {
        std::printf("%s %s", r.passed ? "PASS" : "FAIL", r.name.c_str());
        if (!r.passed || (verbose && !r.detail.empty())) std::printf("  %s", r.detail.c_str());
        std::printf("\n");
      }
      const bool ok = verify::all_passed(results);
      std::printf("%s\n", ok ? "all checks passed" : "verification FAILED");
      return ok ? 0 : 1;
    } else if (acc->parsed()) {
      aopt.ratios = parse_ratio_list(ratios_text);
      aopt.threads = max_threads();
      write_text(acc_out, verify::accuracy_csv(verify::run_accuracy(aopt)));
    } else if (lay->parsed()) {
      auto kv = [&] {
        if (load_path.empty()) return layout::KvLayout(lcfg);
        std::ifstream in(load_path);
        if (!in) throw ConfigError("cannot open '" + load_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return layout::KvLayout::from_json(ss.str());
      }();
      std::ostringstream replies;
      if (trace_path.empty()) {
        layout::replay_trace(kv, std::cin, replies);
      } else {
        std::ifstream in(trace_path);
        if (!in) throw ConfigError("cannot open '" + trace_path + "'");
        layout::replay_trace(kv, in, replies);
      }
      write_text(replies_path, replies.str());
      if (!save_path.empty()) write_text(save_path, kv.to_json());
    }
  } catch (const CapacityError& e) {
    std::fprintf(stderr, "error: infeasible: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
