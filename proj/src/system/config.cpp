#include "sparf/system/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>
#include <variant>

#include "sparf/errors.hpp"

namespace sparf::system {

using nlohmann::json;

namespace {

using FieldPtr = std::variant<double*, std::size_t*, std::string*, bool*>;
using FieldTable = std::vector<std::pair<const char*, FieldPtr>>;

void apply_overrides(const json& obj, const std::string& where, const FieldTable& fields) {
  if (!obj.is_object()) throw ConfigError("field '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    const auto it = std::find_if(fields.begin(), fields.end(),
                                 [&](const auto& f) { return key == f.first; });
    if (it == fields.end()) throw ConfigError("unknown field '" + where + "." + key + "'");
    const std::string name = where + "." + key;
    try {
      std::visit(
          [&](auto* ptr) {
            using T = std::remove_pointer_t<decltype(ptr)>;
            if constexpr (std::is_same_v<T, std::size_t>) {
              if (!value.is_number_integer() || value.get<std::int64_t>() < 0) throw ConfigError("field '" + name + "' must be a non-negative integer");
            } else if constexpr (std::is_same_v<T, double>) {
              if (!value.is_number()) throw ConfigError("field '" + name + "' must be a number");
            }
            *ptr = value.get<T>();
          },
          it->second);
    } catch (const json::exception&) {
      throw ConfigError("field '" + name + "' has the wrong type");
    }
  }
}

FieldTable model_fields(ModelSpec& m) {
  return {{"name", &m.name},           {"layers", &m.layers},
          {"hidden", &m.hidden},       {"heads", &m.heads},
          {"parameters", &m.parameters}, {"element_bytes", &m.element_bytes},
          {"ffn_multiplier", &m.ffn_multiplier}, {"max_context", &m.max_context}};
}

FieldTable hardware_fields(HardwareSpec& h) {
  return {{"gpu_peak_flops", &h.gpu_peak_flops},
          {"gpu_vram_bandwidth", &h.gpu_vram_bandwidth},
          {"gpu_vram_bytes", &h.gpu_vram_bytes},
          {"activation_reserve_bytes", &h.activation_reserve_bytes},
          {"host_memory_bytes", &h.host_memory_bytes},
          {"host_reserve_bytes", &h.host_reserve_bytes},
          {"pcie_gpu_host", &h.pcie_gpu_host},
          {"swap_bandwidth", &h.swap_bandwidth},
          {"csd_count", &h.csd_count},
          {"ssd_count", &h.ssd_count},
          {"pcie_csd", &h.pcie_csd},
          {"ssd_capacity_bytes", &h.ssd_capacity_bytes},
          {"host_fs_derate", &h.host_fs_derate},
          {"host_fs_ceiling", &h.host_fs_ceiling},
          {"host_fs_overhead_s", &h.host_fs_overhead_s},
          {"host_fs_command_bytes", &h.host_fs_command_bytes},
          {"host_orchestration_s", &h.host_orchestration_s}};
}

FieldTable flash_fields(flash::FlashGeometry& g, flash::FlashTiming& t) {
  return {{"channels", &g.channels},
          {"dies_per_channel", &g.dies_per_channel},
          {"planes_per_die", &g.planes_per_die},
          {"blocks_per_plane", &g.blocks_per_plane},
          {"pages_per_block", &g.pages_per_block},
          {"page_size", &g.page_size},
          {"t_read_page_us", &t.t_read_page_us},
          {"t_program_page_us", &t.t_program_page_us},
          {"t_erase_block_us", &t.t_erase_block_us},
          {"channel_bandwidth", &t.channel_bandwidth},
          {"command_overhead_us", &t.command_overhead_us}};
}

FieldTable engine_fields(engine::EngineConfig& e) {
  return {{"clock_hz", &e.clock_hz},
          {"macs_per_cycle", &e.macs_per_cycle},
          {"softmax_throughput", &e.softmax_throughput},
          {"argtopk_throughput", &e.argtopk_throughput},
          {"nfc_filter_rate", &e.nfc_filter_rate},
          {"kernel_count", &e.kernel_count},
          {"output_bandwidth", &e.output_bandwidth}};
}

const json& required(const json& j, const char* key, const std::string& where = "") {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError("missing field '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  return j.at(key);
}

template <typename T>
T required_as(const json& j, const char* key, const std::string& where = "") {
  const json& v = required(j, key, where);
  const std::string name = where.empty() ? std::string(key) : where + "." + key;
  if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError("field '" + name + "' must be a non-negative integer");
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError("field '" + name + "' must be a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError("field '" + name + "' must be a string");
  }
  return v.get<T>();
}

}  // namespace

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  Scenario s;
  s.id = j.value("id", std::string("scenario"));

  const json& model = required(j, "model");
  if (model.is_string()) {
    s.model = ModelSpec::by_name(model.get<std::string>());
  } else {
    // A known name supplies the base geometry; other fields override it.
    if (model.contains("name") && model.at("name").is_string()) {
      try {
        s.model = ModelSpec::by_name(model.at("name").get<std::string>());
      } catch (const ConfigError&) {
      }
    }
    auto fields = model_fields(s.model);
    apply_overrides(model, "model", fields);
  }
  auto hw_fields = hardware_fields(s.hardware);
  apply_overrides(required(j, "hardware"), "hardware", hw_fields);

  const json& w = required(j, "workload");
  s.workload.batch = required_as<std::size_t>(w, "batch", "workload");
  s.workload.s_in = required_as<std::size_t>(w, "s_in", "workload");
  s.workload.s_out = required_as<std::size_t>(w, "s_out", "workload");

  s.system = system_kind_from(required_as<std::string>(j, "system"));

  const json& sp = required(j, "sparsity");
  const auto mode = required_as<std::string>(sp, "mode", "sparsity");
  if (mode == "dense") {
    s.sparsity.sparse = false;
  } else if (mode == "sparf") {
    s.sparsity.sparse = true;
    s.sparsity.ratio = required_as<double>(sp, "ratio", "sparsity");
  } else {
    throw ConfigError("field 'sparsity.mode' must be \"dense\" or \"sparf\"");
  }
  if (sp.contains("ratio")) s.sparsity.ratio = required_as<double>(sp, "ratio", "sparsity");
  if (sp.contains("first_step_retention"))
    s.sparsity.first_step_retention = required_as<double>(sp, "first_step_retention", "sparsity");
  for (const auto& [key, _] : sp.items())
    if (key != "mode" && key != "ratio" && key != "first_step_retention")
      throw ConfigError("unknown field 'sparsity." + key + "'");

  if (j.contains("flash")) {
    auto f = flash_fields(s.flash_geometry, s.flash_timing);
    apply_overrides(j.at("flash"), "flash", f);
  }
  if (j.contains("engine")) {
    auto e = engine_fields(s.engine);
    apply_overrides(j.at("engine"), "engine", e);
  }
  s.seed = required_as<std::uint64_t>(j, "seed");

  static const char* known[] = {"id", "model", "hardware", "workload", "system",
                                "sparsity", "flash", "engine", "seed"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ConfigError("unknown field '" + key + "'");
  s.validate();
  return s;
}

json scenario_to_json(const Scenario& s) {
  auto dump = [](const FieldTable& fields) {
    json o = json::object();
    for (const auto& [key, ptr] : fields) std::visit([&](auto* p) { o[key] = *p; }, ptr);
    return o;
  };
  Scenario copy = s;
  json j;
  j["id"] = s.id;
  j["model"] = dump(model_fields(copy.model));
  j["hardware"] = dump(hardware_fields(copy.hardware));
  j["workload"] = {{"batch", s.workload.batch}, {"s_in", s.workload.s_in}, {"s_out", s.workload.s_out}};
  j["system"] = to_string(s.system);
  j["sparsity"] = {{"mode", s.sparsity.sparse ? "sparf" : "dense"},
                   {"ratio", s.sparsity.ratio},
                   {"first_step_retention", s.sparsity.first_step_retention}};
  j["flash"] = dump(flash_fields(copy.flash_geometry, copy.flash_timing));
  j["engine"] = dump(engine_fields(copy.engine));
  j["seed"] = s.seed;
  return j;
}

std::vector<Scenario> scenarios_from_json(const json& j) {
  std::vector<Scenario> out;
  auto parse_one = [&](const json& item, std::size_t index) {
    try {
      out.push_back(scenario_from_json(item));
    } catch (const ConfigError& e) {
      throw ConfigError("scenario " + std::to_string(index) + ": " + e.what());
    }
  };
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) parse_one(j[i], i);
  } else if (j.is_object() && j.contains("scenarios")) {
    const json base = j.value("base", json::object());
    const json& list = j.at("scenarios");
    if (!list.is_array()) throw ConfigError("field 'scenarios' must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      json merged = base;
      merged.merge_patch(list[i]);
      parse_one(merged, i);
    }
  } else {
    parse_one(j, 0);
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

}  // namespace sparf::system
