#include <doctest.h>

#include "sparf/errors.hpp"
#include "sparf/system/config.hpp"
#include "sparf/system/roofline.hpp"
#include "sparf/system/scenario.hpp"
#include "sparf/system/sweep.hpp"

using namespace sparf;
using namespace sparf::system;
using nlohmann::json;

namespace {

Scenario make(SystemKind kind, bool sparse, std::size_t batch, std::size_t csds = 1) {
  Scenario s;
  s.system = kind;
  s.workload = {batch, 1024, 1024};
  s.sparsity.sparse = sparse;
  s.sparsity.ratio = sparse ? 0.125 : 1.0;
  s.hardware.csd_count = csds;
  return s;
}

json minimal() {
  return json::parse(R"({
    "model": "opt-13b", "hardware": {}, "workload": {"batch": 8, "s_in": 256, "s_out": 32},
    "system": "instinfer", "sparsity": {"mode": "sparf", "ratio": 0.25}, "seed": 5})");
}

}  // namespace

TEST_CASE("KV cache sizing") {
  const auto m = ModelSpec::opt_13b();
  CHECK(kv_cache_bytes(m, 32, 4096) == doctest::Approx(100e9).epsilon(0.10));
  CHECK(kv_cache_bytes(m, 128, 2048) == doctest::Approx(200e9).epsilon(0.10));
  CHECK(kv_cache_bytes(m, 1, 1) == 819200.0);
  CHECK(m.head_dim() == 128);
  CHECK(m.kv_bytes_per_token() == 819200.0);
}

TEST_CASE("roofline operator costs") {
  const auto m = ModelSpec::opt_13b();
  const HardwareSpec hw;
  const auto attend = operator_cost(Operator::kAttend, Phase::kDecode, m, 1, 1024, hw);
  CHECK(attend.flops == doctest::Approx(2.0 * 1024 * 5120));
  CHECK(attend.intensity() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(attend.time_s == doctest::Approx(attend.bytes / hw.gpu_vram_bandwidth));

  const auto ffn = operator_cost(Operator::kFfn, Phase::kPrefill, m, 4, 512, hw);
  CHECK(ffn.flops == doctest::Approx(2.0 * 4 * 512 * 8 * 5120.0 * 5120));
  CHECK(ffn.time_s == doctest::Approx(ffn.flops / hw.gpu_peak_flops));

  const auto zero = operator_cost(Operator::kLogit, Phase::kDecode, m, 4, 0, hw);
  CHECK(zero.flops == 0);
  CHECK(zero.time_s == 0);

  const auto layer = dense_layer_cost(Phase::kDecode, m, 1, 1, hw);
  CHECK(layer.weight_bytes == doctest::Approx(12.0 * 5120 * 5120 * 2).epsilon(0.01));
}

TEST_CASE("doubling CSDs halves flash-bound attention") {
  auto one = make(SystemKind::kInstInfer, false, 256, 1);
  auto two = make(SystemKind::kInstInfer, false, 256, 2);
  const auto a = simulate(one), b = simulate(two);
  CHECK(b.kv_access_s == doctest::Approx(a.kv_access_s / 2).epsilon(0.10));
}

TEST_CASE("sparse attention cuts row loads about 8x, end to end between 1x and 8x") {
  const auto d = simulate(make(SystemKind::kInstInfer, false, 64));
  const auto s = simulate(make(SystemKind::kInstInfer, true, 64));
  const auto row = static_cast<std::size_t>(engine::Stage::kKVRowLoad);
  const double ratio = static_cast<double>(d.last_step_stages.stage_bytes[row]) /
                       static_cast<double>(s.last_step_stages.stage_bytes[row]);
  CHECK(ratio == doctest::Approx(8.0).epsilon(0.5));
  const double speedup = d.decode_total_s / s.decode_total_s;
  CHECK(speedup > 1.0);
  CHECK(speedup < 8.0);
}

TEST_CASE("prefill-only scenario") {
  auto s = make(SystemKind::kInstInfer, false, 8);
  s.workload.s_out = 0;
  const auto r = simulate(s);
  CHECK(r.prefill_s > 0);
  CHECK(r.decode_total_s == 0);
  CHECK(r.throughput_tok_s == 0);
}

TEST_CASE("baseline breakdown examples") {
  const auto big = simulate(make(SystemKind::kSsdOffload, false, 64));
  CHECK(big.kv_share() >= 0.95);
  const auto small = simulate(make(SystemKind::kSsdOffload, false, 4));
  CHECK(small.kv_share() <= 0.10);
  CHECK(small.weight_share() > small.compute_share());
  CHECK(small.weight_share() > small.transfer_share());

  const auto fits = simulate(make(SystemKind::kHostOffload, false, 64));
  const auto spills = simulate(make(SystemKind::kHostOffload, false, 128));
  CHECK(spills.throughput_tok_s * 10 < fits.throughput_tok_s);
}

TEST_CASE("baselines barely gain from extra SSDs") {
  for (auto kind : {SystemKind::kSsdOffload, SystemKind::kHostOffload}) {
    auto a = make(kind, false, 256);
    auto b = a;
    b.hardware.ssd_count = 4;
    CHECK(simulate(b).throughput_tok_s == doctest::Approx(simulate(a).throughput_tok_s).epsilon(0.05));
  }
}

TEST_CASE("report conservation") {
  for (const auto& s : {make(SystemKind::kInstInfer, true, 32, 3), make(SystemKind::kSsdOffload, true, 128),
                        make(SystemKind::kHostOffload, false, 16)}) {
    const auto r = simulate(s);
    CHECK(r.weight_share() + r.kv_share() + r.compute_share() + r.transfer_share() == doctest::Approx(1.0));
    for (double v : {r.weight_access_s, r.kv_access_s, r.compute_s, r.transfer_s}) {
      CHECK(v >= 0);
      CHECK(v <= r.decode_total_s * (1 + 1e-9));
    }
    CHECK(r.throughput_tok_s * (r.prefill_s + r.decode_total_s) ==
          doctest::Approx(static_cast<double>(s.workload.batch * s.workload.s_out)));
    if (s.system == SystemKind::kInstInfer) CHECK(r.kv_bytes_used <= r.kv_bytes_loaded);
  }
}

TEST_CASE("infeasible scenarios name the binding constraint") {
  auto s = make(SystemKind::kInstInfer, false, 8);
  s.model = ModelSpec::opt_30b();
  s.hardware.gpu_vram_bytes = 24 * kGiB;
  try {
    simulate(s);
    FAIL("expected a capacity error");
  } catch (const CapacityError& e) {
    CHECK(e.constraint() == "gpu_vram");
  }
  auto tiny = make(SystemKind::kInstInfer, false, 256);
  tiny.flash_geometry.blocks_per_plane = 16;
  CHECK_THROWS_AS(simulate(tiny), CapacityError);
}

TEST_CASE("scenario json") {
  const auto s = scenario_from_json(minimal());
  CHECK(s.workload.batch == 8);
  CHECK(s.sparsity.sparse);
  CHECK(s.sparsity.ratio == 0.25);
  CHECK(s.seed == 5);
  const auto back = scenario_from_json(scenario_to_json(s));
  CHECK(scenario_to_json(back) == scenario_to_json(s));

  auto j = minimal();
  j["workload"].erase("batch");
  CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("workload.batch"), ConfigError);
  j = minimal();
  j.erase("seed");
  CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("seed"), ConfigError);
  j = minimal();
  j["hardware"]["warp_drive"] = 1;
  CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("hardware.warp_drive"), ConfigError);
  j = minimal();
  j["system"] = "tpu";
  CHECK_THROWS_AS(scenario_from_json(j), ConfigError);
  j = minimal();
  j["model"] = json{{"name", "opt-13b"}, {"layers", 20}};
  CHECK(scenario_from_json(j).model.layers == 20);
  CHECK(scenario_from_json(j).model.hidden == 5120);
}

TEST_CASE("sweep files") {
  json sweep = {{"base", minimal()}, {"scenarios", json::array({{{"id", "a"}}, {{"id", "b"}, {"workload", {{"batch", 16}}}}})}};
  const auto list = scenarios_from_json(sweep);
  REQUIRE(list.size() == 2);
  CHECK(list[1].workload.batch == 16);
  CHECK(list[1].workload.s_in == 256);
  CHECK(scenarios_from_json(json::array({minimal(), minimal()})).size() == 2);
  CHECK(scenarios_from_json(minimal()).size() == 1);
  CHECK_THROWS_AS(read_json_file("/nonexistent/file.json"), ConfigError);
}

TEST_CASE("sweep output") {
  CHECK(results_csv({}) == std::string(kCsvSchemaLine) + "\n" + results_csv_header() + "\n");
  auto s = make(SystemKind::kInstInfer, true, 16);
  s.id = "dup";
  const auto rows = run_sweep({s, s, make(SystemKind::kSsdOffload, false, 4)});
  REQUIRE(rows.size() == 3);
  const auto csv = results_csv(rows);
  const auto l1 = csv.find("\ndup,");
  const auto l2 = csv.find("\ndup,", l1 + 1);
  CHECK(csv.substr(l1, l2 - l1) == csv.substr(l2, l2 - l1));
  CHECK(stages_csv(rows).rfind("config_id,stage,us,bytes\n", 0) == 0);
  CHECK(run_sweep({s}, 1)[0].report.throughput_tok_s == rows[0].report.throughput_tok_s);
}

TEST_CASE("sweep errors carry the config id") {
  auto bad = make(SystemKind::kInstInfer, false, 8);
  bad.id = "too-big";
  bad.model = ModelSpec::opt_30b();
  bad.hardware.gpu_vram_bytes = 24 * kGiB;
  try {
    run_sweep({make(SystemKind::kInstInfer, false, 4), bad});
    FAIL("expected an error");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("too-big") != std::string::npos);
    CHECK(e.constraint() == "gpu_vram");
  }
}

TEST_CASE("presets") {
  CHECK(preset_scenarios("fig-throughput", 1).size() == 7 * 5);
  const auto scaling = preset_scenarios("fig-scaling", 1);
  CHECK(scaling.size() == 14);
  CHECK(scaling.back().hardware.csd_count == 20);
  const auto comp = preset_scenarios("fig-compression", 1);
  CHECK(comp.size() == 8);
  CHECK(comp[3].sparsity.ratio == 0.125);
  CHECK(preset_scenarios("fig-breakdown", 1).size() == 18);
  CHECK_THROWS_AS(preset_scenarios("fig-nope", 1), ConfigError);
  for (const auto& s : preset_scenarios("fig-throughput", 42)) CHECK(s.seed == 42);
}

TEST_CASE("system ordering at large batch") {
  for (std::size_t b : {64, 128, 256}) {
    const double sparf = simulate(make(SystemKind::kInstInfer, true, b)).throughput_tok_s;
    const double dense = simulate(make(SystemKind::kInstInfer, false, b)).throughput_tok_s;
    const double sparq = simulate(make(SystemKind::kSsdOffload, true, b)).throughput_tok_s;
    const double ssd = simulate(make(SystemKind::kSsdOffload, false, b)).throughput_tok_s;
    CHECK(sparf > dense);
    CHECK(dense > sparq);
    CHECK(sparq > ssd);
  }
}
