// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>

#include <json.hpp>

#include "pfd/data.hpp"
#include "pfd/errors.hpp"

namespace pfd {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "pfdlab-jsonl";
constexpr int kVersion = 1;

json generator_json(const GeneratorConfig& g) {
  json j = json::object();
  const KeyValues kv = g.to_key_values();
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

GeneratorConfig generator_from_json(const json& j) {
  KeyValues kv;
  for (const auto& [k, v] : j.items()) kv.set(k, v.get<std::string>());
  return GeneratorConfig::from_key_values(kv);
}

json record_json(const Record& r, const char* split) {
  json events = json::array();
  for (const auto& e : r.behavior.events) {
    events.push_back({e.item_id, e.category_id, e.recency_bucket, e.dwell_bucket});
  }
  return json{{"index", r.index},
              {"split", split},
              {"user_id", r.user_id},
              {"item_id", r.item_id},
              {"user_feats", r.user_feats},
              {"item_feats", r.item_feats},
              {"behavior", {{"valid_len", r.behavior.valid_len}, {"events", events}}},
              {"interacted_feats", r.interacted_feats},
              {"post_event_feats", r.post_event_feats},
              {"label", r.label},
              {"true_propensity", r.true_propensity}};
}

const std::set<std::string>& record_fields() {
  static const std::set<std::string> f = {"index", "split", "user_id", "item_id", "user_feats",
                                          "item_feats", "behavior", "interacted_feats",
                                          "post_event_feats", "label", "true_propensity"};
  return f;
}

Record record_from_json(const json& j, std::string& split) {
  for (const auto& [k, v] : j.items()) {
    if (!record_fields().contains(k)) throw DataError("unknown field '" + k + "'");
  }
  for (const auto& k : record_fields()) {
    if (!j.contains(k)) throw DataError("missing field '" + k + "'");
  }
  Record r;
  r.index = j.at("index").get<std::uint64_t>();
  split = j.at("split").get<std::string>();
  r.user_id = j.at("user_id").get<std::int64_t>();
  r.item_id = j.at("item_id").get<std::int64_t>();
  r.user_feats = j.at("user_feats").get<std::vector<std::int64_t>>();
  r.item_feats = j.at("item_feats").get<std::vector<std::int64_t>>();
  const json& b = j.at("behavior");
  r.behavior.valid_len = b.at("valid_len").get<std::size_t>();
  for (const auto& e : b.at("events")) {
    if (!e.is_array() || e.size() != 4) throw DataError("behavior event must have 4 ids");
    r.behavior.events.push_back({e[0].get<std::int64_t>(), e[1].get<std::int64_t>(),
                                 e[2].get<std::int64_t>(), e[3].get<std::int64_t>()});
  }
  r.interacted_feats = j.at("interacted_feats").get<std::vector<std::int64_t>>();
  r.post_event_feats = j.at("post_event_feats").get<std::vector<double>>();
  r.label = j.at("label").get<int>();
  r.true_propensity = j.at("true_propensity").get<double>();
  return r;
}

}  // namespace

void write_jsonl(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  const json header{{"format", kFormat},
                    {"version", kVersion},
                    {"schema", json::parse(d.schema.to_json())},
                    {"schema_hash", d.schema.hash()},
                    {"generator", generator_json(d.generator)},
                    {"seed", d.generator.seed},
                    {"num_train", d.train.size()},
                    {"num_test", d.test.size()}};
  out << header.dump() << '\n';
  for (const auto& r : d.train) out << record_json(r, "train").dump() << '\n';
  for (const auto& r : d.test) out << record_json(r, "test").dump() << '\n';
  if (!out) throw DataError("write failed: " + path);
}

Dataset read_jsonl(const std::string& path, const FeatureSchema* expected_schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) -> DataError {
    return DataError(path + ": line " + std::to_string(lineno) + ": " + what);
  };

  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  lineno = 1;
  Dataset d;
  std::size_t num_train = 0;
  std::size_t num_test = 0;
  try {
    const json h = json::parse(line);
    if (h.at("format").get<std::string>() != kFormat) throw fail("not a pfdlab dataset");
    if (h.at("version").get<int>() != kVersion) throw fail("unsupported version");
    d.schema = FeatureSchema::from_json(h.at("schema").dump());
    const std::string declared = h.at("schema_hash").get<std::string>();
    if (declared != d.schema.hash()) throw fail("schema hash does not match header schema");
    if (expected_schema && expected_schema->hash() != declared) {
      throw fail("schema hash mismatch: file " + declared + ", expected " + expected_schema->hash());
    }
    d.generator = generator_from_json(h.at("generator"));
    num_train = h.at("num_train").get<std::size_t>();
    num_test = h.at("num_test").get<std::size_t>();
  } catch (const json::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  }
  d.train.reserve(num_train);
  d.test.reserve(num_test);

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw fail("empty line");
    std::string split;
    Record r;
    try {
      r = record_from_json(json::parse(line), split);
      validate_record(d.schema, r);
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const DataError& e) {
      throw fail(e.what());
    }
    if (split == "train") {
      if (!d.test.empty()) throw fail("train record after test records");
      d.train.push_back(std::move(r));
    } else if (split == "test") {
      d.test.push_back(std::move(r));
    } else {
      throw fail("unknown split '" + split + "'");
    }
  }
  if (d.train.size() != num_train || d.test.size() != num_test) {
    throw DataError(path + ": record count does not match header");
  }
  return d;
}

void write_propensity_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "index,split,user_id,item_id,label,true_propensity\n";
  auto emit = [&](const Record& r, const char* split) {
    out << r.index << ',' << split << ',' << r.user_id << ',' << r.item_id << ',' << r.label << ','
        << format_double(r.true_propensity) << '\n';
  };
  for (const auto& r : d.train) emit(r, "train");
  for (const auto& r : d.test) emit(r, "test");
}

}  // namespace pfd
