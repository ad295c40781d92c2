#include "sparf/core/test_vectors.hpp"

#include <json.hpp>

#include "sparf/core/attention.hpp"
#include "sparf/errors.hpp"

namespace sparf::core {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key).get<T>();
}

HeadConfig config_from_json(const json& j, const std::string& where) {
  HeadConfig c;
  c.head_dim = required<std::size_t>(j, "d_h", where);
  c.seq_len = required<std::size_t>(j, "S", where);
  c.kept_embeddings = j.value("r", c.head_dim);
  c.kept_tokens = j.value("k", c.seq_len);
  c.embedding_group = j.value("m", std::size_t{1});
  c.token_group = j.value("n", std::size_t{1});
  return c;
}

Matrix matrix_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty()) throw ConfigError(where + ": matrix must be a non-empty array");
  const std::size_t r = rows.size();
  const std::size_t c = rows[0].size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ConfigError(where + ": ragged matrix");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Matrix(r, c, std::move(data));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

}  // namespace

HeadTensors TestVector::materialize() const {
  if (tensors) return *tensors;
  if (!seed) throw ConfigError("test vector '" + name + "' has neither tensors nor seed");
  return random_head(config.head_dim, config.seq_len, *seed);
}

std::vector<double> TestVector::evaluate() const {
  const HeadTensors t = materialize();
  if (op == "dense") return dense_attention(t);
  if (op == "sparf") return sparf_attention(t, config).out;
  if (op == "sparq") return sparq_attention(t, config.kept_embeddings, config.kept_tokens).out;
  if (op == "approx_scores") {
    const auto mask = argtopk(t.q, config.kept_embeddings, TopKKey::kMagnitude, Axis::kEmbedding);
    return approx_scores(t, mask);
  }
  throw ConfigError("test vector '" + name + "': unknown op '" + op + "'");
}

std::vector<TestVector> parse_test_vectors(std::string_view json_text) {
  const json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("test vectors: malformed JSON");
  if (!doc.is_array() && !(doc.is_object() && doc.contains("vectors")))
    throw ConfigError("test vectors: expected an array or {\"vectors\": [...]}");
  const json& records = doc.is_array() ? doc : doc.at("vectors");
  std::vector<TestVector> out;
  for (const auto& rec : records) {
    TestVector tv;
    tv.name = rec.value("name", std::string("unnamed"));
    const std::string where = "test vector '" + tv.name + "'";
    tv.op = required<std::string>(rec, "op", where);
    tv.config = config_from_json(required<json>(rec, "config", where), where);
    const json& tj = required<json>(rec, "tensors", where);
    if (tj.contains("seed")) {
      tv.seed = tj.at("seed").get<std::uint64_t>();
    } else {
      HeadTensors t;
      t.q = required<std::vector<double>>(tj, "q", where);
      t.keys = matrix_from_json(required<json>(tj, "K", where), where);
      t.values = matrix_from_json(required<json>(tj, "V", where), where);
      if (tj.contains("v_bar")) {
        t.value_mean = tj.at("v_bar").get<std::vector<double>>();
        t.token_count = tj.value("token_count", t.keys.rows());
        t.validate();
      } else {
        t = HeadTensors::from_cache(t.q, t.keys, t.values);
      }
      tv.tensors = std::move(t);
    }
    tv.expected = required<std::vector<double>>(rec, "expected", where);
    tv.tolerance = rec.value("tolerance", 1e-9);
    out.push_back(std::move(tv));
  }
  return out;
}

std::string dump_test_vectors(const std::vector<TestVector>& vectors) {
  json arr = json::array();
  for (const auto& tv : vectors) {
    json rec;
    rec["name"] = tv.name;
    rec["op"] = tv.op;
    rec["config"] = {{"d_h", tv.config.head_dim}, {"S", tv.config.seq_len},
                     {"r", tv.config.kept_embeddings}, {"k", tv.config.kept_tokens},
                     {"m", tv.config.embedding_group}, {"n", tv.config.token_group}};
    if (tv.tensors) {
      rec["tensors"] = {{"q", tv.tensors->q},
                        {"K", matrix_to_json(tv.tensors->keys)},
                        {"V", matrix_to_json(tv.tensors->values)},
                        {"v_bar", tv.tensors->value_mean},
                        {"token_count", tv.tensors->token_count}};
    } else if (tv.seed) {
      rec["tensors"] = {{"seed", *tv.seed}};
    }
    rec["expected"] = tv.expected;
    rec["tolerance"] = tv.tolerance;
    arr.push_back(std::move(rec));
  }
  return json{{"vectors", arr}}.dump(2);
}

}  // namespace sparf::core
