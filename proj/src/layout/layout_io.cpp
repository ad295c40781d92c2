#include <istream>
#include <ostream>
#include <random>
#include <string>

#include <json.hpp>

#include "sparf/errors.hpp"
#include "sparf/layout/kv_layout.hpp"

namespace sparf::layout {

using nlohmann::json;

namespace {

json address_json(const PhysicalPageAddress& a) {
  return json::array({a.channel, a.die, a.plane, a.block, a.page});
}

PhysicalPageAddress address_from(const json& j) {
  PhysicalPageAddress a;
  a.channel = j.at(0).get<std::uint32_t>();
  a.die = j.at(1).get<std::uint32_t>();
  a.plane = j.at(2).get<std::uint32_t>();
  a.block = j.at(3).get<std::uint32_t>();
  a.page = j.at(4).get<std::uint32_t>();
  return a;
}

json token_key_json(const TokenGroupKey& k) {
  return json::array({k.layer, k.head, k.tensor == KvTensor::kKey ? "K" : "V", k.group_id});
}

TokenGroupKey token_key_from(const json& j) {
  TokenGroupKey k;
  k.layer = j.at(0).get<std::uint32_t>();
  k.head = j.at(1).get<std::uint32_t>();
  k.tensor = j.at(2).get<std::string>() == "K" ? KvTensor::kKey : KvTensor::kValue;
  k.group_id = j.at(3).get<std::uint32_t>();
  return k;
}

json stripe_key_json(const EmbeddingStripeKey& k) {
  return json::array({k.layer, k.head, k.embedding_group_id, k.token_stripe_id});
}

EmbeddingStripeKey stripe_key_from(const json& j) {
  EmbeddingStripeKey k;
  k.layer = j.at(0).get<std::uint32_t>();
  k.head = j.at(1).get<std::uint32_t>();
  k.embedding_group_id = j.at(2).get<std::uint32_t>();
  k.token_stripe_id = j.at(3).get<std::uint32_t>();
  return k;
}

json lookup_json(const PageLookup& l) {
  json pages = json::array();
  for (const auto& p : l.pages) pages.push_back(address_json(p));
  return {{"pages", pages}, {"dram_hits", l.dram_hits}};
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return j.at(key).get<T>();
}

}  // namespace

std::string KvLayout::to_json() const {
  const auto& g = config_.geometry;
  json doc;
  doc["geometry"] = {{"channels", g.channels},
                     {"dies_per_channel", g.dies_per_channel},
                     {"planes_per_die", g.planes_per_die},
                     {"blocks_per_plane", g.blocks_per_plane},
                     {"pages_per_block", g.pages_per_block},
                     {"page_size", g.page_size}};
  doc["config"] = {{"layers", config_.layers},
                   {"heads", config_.heads},
                   {"head_dim", config_.head_dim},
                   {"element_bytes", config_.element_bytes},
                   {"embedding_group", config_.embedding_group},
                   {"keep_payload", config_.keep_payload}};

  json heads = json::array();
  for (const auto& hs : heads_)
    heads.push_back({{"tokens", hs.tokens},
                     {"sealed", hs.sealed},
                     {"open_keys", hs.open_keys},
                     {"open_values", hs.open_values},
                     {"open_stripe", hs.open_stripe}});
  doc["heads"] = heads;

  json pending = json::array();
  for (const auto& p : pending_) {
    json rec{{"data_bytes", p.data_bytes}, {"payload", p.payload}};
    if (p.event.kind == FlushKind::kTokenGroup)
      rec["token"] = token_key_json(p.event.token);
    else
      rec["stripe"] = stripe_key_json(p.event.stripe);
    pending.push_back(std::move(rec));
  }
  doc["pending"] = pending;

  json tokens = json::array();
  for (const auto& [k, a] : token_map_) tokens.push_back({token_key_json(k), address_json(a)});
  doc["token_table"] = tokens;
  json stripes = json::array();
  for (const auto& [k, a] : stripe_map_) stripes.push_back({stripe_key_json(k), address_json(a)});
  doc["embedding_table"] = stripes;

  json pages = json::array();
  for (const auto& [flat, bytes] : page_data_bytes_) {
    json rec{{"flat", flat}, {"data_bytes", bytes}};
    if (auto it = page_store_.find(flat); it != page_store_.end()) rec["payload"] = it->second;
    pages.push_back(std::move(rec));
  }
  doc["pages"] = pages;

  json dies = json::array();
  for (const auto& d : dies_)
    dies.push_back({{"next_free_block", d.next_free_block},
                    {"active_block", d.active_block},
                    {"write_pointer", d.write_pointer},
                    {"used_blocks", d.used_blocks}});
  doc["dies"] = dies;
  doc["stats"] = {{"logical_bytes", stats_.logical_bytes},
                  {"physical_bytes", stats_.physical_bytes},
                  {"pages_programmed", stats_.pages_programmed},
                  {"blocks_erased", stats_.blocks_erased},
                  {"block_programs", stats_.block_programs},
                  {"key_physical_bytes", key_physical_},
                  {"value_physical_bytes", value_physical_}};
  return doc.dump(1);
}

KvLayout KvLayout::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("layout dump: ") + e.what());
  }
  try {
    LayoutConfig c;
    const json& g = doc.at("geometry");
    c.geometry.channels = g.at("channels");
    c.geometry.dies_per_channel = g.at("dies_per_channel");
    c.geometry.planes_per_die = g.at("planes_per_die");
    c.geometry.blocks_per_plane = g.at("blocks_per_plane");
    c.geometry.pages_per_block = g.at("pages_per_block");
    c.geometry.page_size = g.at("page_size");
    const json& cj = doc.at("config");
    c.layers = cj.at("layers");
    c.heads = cj.at("heads");
    c.head_dim = cj.at("head_dim");
    c.element_bytes = cj.at("element_bytes");
    c.embedding_group = cj.at("embedding_group");
    c.keep_payload = cj.at("keep_payload");
    KvLayout out(c);

    const json& heads = doc.at("heads");
    if (heads.size() != out.heads_.size()) throw ConfigError("layout dump: head count mismatch");
    for (std::size_t i = 0; i < heads.size(); ++i) {
      auto& hs = out.heads_[i];
      hs.tokens = heads[i].at("tokens");
      hs.sealed = heads[i].at("sealed");
      hs.open_keys = heads[i].at("open_keys").get<std::vector<double>>();
      hs.open_values = heads[i].at("open_values").get<std::vector<double>>();
      hs.open_stripe = heads[i].at("open_stripe").get<std::vector<double>>();
    }
    for (const auto& rec : doc.at("pending")) {
      PendingPage p;
      p.data_bytes = rec.at("data_bytes");
      p.payload = rec.at("payload").get<std::vector<double>>();
      if (rec.contains("token")) {
        p.event.kind = FlushKind::kTokenGroup;
        p.event.token = token_key_from(rec.at("token"));
        out.pending_tokens_[p.event.token] = out.pending_.size();
      } else {
        p.event.kind = FlushKind::kEmbeddingStripe;
        p.event.stripe = stripe_key_from(rec.at("stripe"));
        out.pending_stripes_[p.event.stripe] = out.pending_.size();
      }
      out.pending_.push_back(std::move(p));
    }
    for (const auto& e : doc.at("token_table")) {
      const auto a = address_from(e.at(1));
      if (!a.valid_in(c.geometry)) throw MappingError("layout dump: address outside geometry");
      out.token_map_[token_key_from(e.at(0))] = a;
    }
    for (const auto& e : doc.at("embedding_table")) {
      const auto a = address_from(e.at(1));
      if (!a.valid_in(c.geometry)) throw MappingError("layout dump: address outside geometry");
      out.stripe_map_[stripe_key_from(e.at(0))] = a;
    }
    for (const auto& rec : doc.at("pages")) {
      const std::size_t flat = rec.at("flat");
      out.page_data_bytes_[flat] = rec.at("data_bytes");
      if (rec.contains("payload")) out.page_store_[flat] = rec.at("payload").get<std::vector<double>>();
    }
    const json& dies = doc.at("dies");
    if (dies.size() != out.dies_.size()) throw ConfigError("layout dump: die count mismatch");
    for (std::size_t i = 0; i < dies.size(); ++i) {
      auto& d = out.dies_[i];
      d.next_free_block = dies[i].at("next_free_block");
      d.active_block = dies[i].at("active_block");
      d.write_pointer = dies[i].at("write_pointer");
      d.used_blocks = dies[i].at("used_blocks").get<std::vector<std::uint32_t>>();
    }
    const json& s = doc.at("stats");
    out.stats_.logical_bytes = s.at("logical_bytes");
    out.stats_.physical_bytes = s.at("physical_bytes");
    out.stats_.pages_programmed = s.at("pages_programmed");
    out.stats_.blocks_erased = s.at("blocks_erased");
    out.stats_.block_programs = s.at("block_programs");
    out.key_physical_ = s.at("key_physical_bytes");
    out.value_physical_ = s.at("value_physical_bytes");
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("layout dump: ") + e.what());
  }
}

void replay_trace(KvLayout& layout, std::istream& in, std::ostream& out) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    json reply;
    try {
      const json cmd = json::parse(line);
      const auto op = field<std::string>(cmd, "op");
      reply["op"] = op;
      if (op == "append") {
        const auto layer = field<std::size_t>(cmd, "layer");
        const auto head = field<std::size_t>(cmd, "head");
        std::size_t events = 0;
        if (cmd.contains("k")) {
          const auto k = field<std::vector<double>>(cmd, "k");
          const auto v = field<std::vector<double>>(cmd, "v");
          events = layout.append_token_kv(layer, head, k, v).size();
        } else {
          const auto count = field<std::size_t>(cmd, "count");
          std::mt19937_64 rng(field<std::uint64_t>(cmd, "seed"));
          std::normal_distribution<double> dist;
          std::vector<double> k(layout.config().head_dim), v(layout.config().head_dim);
          for (std::size_t t = 0; t < count; ++t) {
            for (auto& x : k) x = dist(rng);
            for (auto& x : v) x = dist(rng);
            events += layout.append_token_kv(layer, head, k, v).size();
          }
        }
        reply["flush_intents"] = events;
        reply["tokens"] = layout.tokens_appended(layer, head);
      } else if (op == "lookup_tokens") {
        const auto tensor = cmd.value("tensor", std::string("K"));
        if (tensor != "K" && tensor != "V") throw ConfigError("tensor must be \"K\" or \"V\"");
        const auto tokens = field<std::vector<std::size_t>>(cmd, "tokens");
        reply.update(lookup_json(layout.lookup_token_pages(
            field<std::size_t>(cmd, "layer"), field<std::size_t>(cmd, "head"), tokens,
            tensor == "K" ? KvTensor::kKey : KvTensor::kValue)));
      } else if (op == "lookup_embeddings") {
        const auto embeddings = field<std::vector<std::size_t>>(cmd, "embeddings");
        reply.update(lookup_json(layout.lookup_embedding_pages(
            field<std::size_t>(cmd, "layer"), field<std::size_t>(cmd, "head"), embeddings,
            field<std::size_t>(cmd, "token_begin"), field<std::size_t>(cmd, "token_end"))));
      } else if (op == "flush") {
        reply["programmed"] = layout.flush_pending(cmd.value("force", true)).size();
      } else if (op == "seal") {
        reply["programmed"] = layout.seal().size();
      } else if (op == "drop") {
        reply["erased_blocks"] = layout.drop_all().size();
      } else if (op == "stats") {
        const auto& s = layout.write_stats();
        reply["logical_bytes"] = s.logical_bytes;
        reply["physical_bytes"] = s.physical_bytes;
        reply["pages_programmed"] = s.pages_programmed;
        reply["blocks_erased"] = s.blocks_erased;
        reply["block_programs"] = s.block_programs;
        reply["write_amplification"] = s.write_amplification();
        reply["pending_intents"] = layout.pending_intents();
        reply["mapping_table_bytes"] = layout.mapping_table_bytes();
      } else {
        throw ConfigError("unknown op '" + op + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    out << reply.dump() << '\n';
  }
}

}  // namespace sparf::layout
