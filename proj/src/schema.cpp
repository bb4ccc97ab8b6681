// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <set>

#include <json.hpp>

#include "pfd/data.hpp"
#include "pfd/errors.hpp"
#include "pfd/hashing.hpp"

namespace pfd {

using nlohmann::json;

std::string to_string(FeatureRole r) {
  switch (r) {
    case FeatureRole::RegularUser: return "regular_user";
    case FeatureRole::RegularItem: return "regular_item";
    case FeatureRole::Behavior: return "behavior";
    case FeatureRole::Privileged: return "privileged";
  }
  return "?";
}

std::string to_string(PrivilegedGroup g) {
  switch (g) {
    case PrivilegedGroup::None: return "none";
    case PrivilegedGroup::Interacted: return "interacted";
    case PrivilegedGroup::PostEvent: return "post_event";
  }
  return "?";
}

std::string to_string(ValueKind k) {
  switch (k) {
    case ValueKind::Categorical: return "categorical";
    case ValueKind::Real: return "real";
    case ValueKind::Binary: return "binary";
  }
  return "?";
}

namespace {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> all) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  throw DataError("unknown enum value '" + s + "'");
}

}  // namespace

std::size_t discretize(double value, std::span<const double> boundaries) {
  return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), value) -
                                  boundaries.begin());
}

std::vector<double> equal_frequency_boundaries(std::vector<double> values, std::size_t buckets) {
  std::vector<double> out;
  if (values.empty() || buckets < 2) return out;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  for (std::size_t q = 1; q < buckets; ++q) {
    const double cut = values[std::min(n - 1, q * n / buckets)];
    if (out.empty() || cut > out.back()) out.push_back(cut);
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FeatureDecl> features) : features_(std::move(features)) {
  validate();
}

void FeatureSchema::validate() const {
  std::set<std::string> names;
  for (const auto& f : features_) {
    if (f.name.empty()) throw ConfigError("schema: empty feature name");
    if (!names.insert(f.name).second) throw ConfigError("schema: duplicate feature " + f.name);
    if (f.vocab_size < 2) throw ConfigError("schema: feature " + f.name + " needs vocab_size >= 2");
    for (std::size_t i = 1; i < f.boundaries.size(); ++i) {
      if (!(f.boundaries[i - 1] < f.boundaries[i])) {
        throw ConfigError("schema: boundaries of " + f.name + " are not strictly increasing");
      }
    }
    if (f.kind != ValueKind::Categorical) {
      if (f.boundaries.empty()) throw ConfigError("schema: numeric feature " + f.name + " has no boundaries");
      if (f.vocab_size < f.boundaries.size() + 2) {
        throw ConfigError("schema: vocab of " + f.name + " too small for its buckets");
      }
    }
    if ((f.role == FeatureRole::Privileged) != (f.group != PrivilegedGroup::None)) {
      throw ConfigError("schema: feature " + f.name + " has inconsistent privileged group");
    }
  }
}

std::optional<std::size_t> FeatureSchema::find(const std::string& name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
  auto i = find(name);
  if (!i) throw ConfigError("schema has no feature " + name);
  return *i;
}

std::vector<std::size_t> FeatureSchema::indices(FeatureRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].role == role) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FeatureSchema::privileged_indices(PrivilegedGroup group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].role == FeatureRole::Privileged && features_[i].group == group) out.push_back(i);
  }
  return out;
}

std::string FeatureSchema::to_json() const {
  json arr = json::array();
  for (const auto& f : features_) {
    arr.push_back({{"name", f.name},
                   {"vocab_size", f.vocab_size},
                   {"role", to_string(f.role)},
                   {"group", to_string(f.group)},
                   {"kind", to_string(f.kind)},
                   {"boundaries", f.boundaries}});
  }
  return json{{"features", arr}}.dump();
}

FeatureSchema FeatureSchema::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    std::vector<FeatureDecl> fs;
    for (const auto& f : j.at("features")) {
      FeatureDecl d;
      d.name = f.at("name").get<std::string>();
      d.vocab_size = f.at("vocab_size").get<std::size_t>();
      d.role = parse_enum<FeatureRole>(f.at("role").get<std::string>(),
                                       {FeatureRole::RegularUser, FeatureRole::RegularItem,
                                        FeatureRole::Behavior, FeatureRole::Privileged});
      d.group = parse_enum<PrivilegedGroup>(
          f.at("group").get<std::string>(),
          {PrivilegedGroup::None, PrivilegedGroup::Interacted, PrivilegedGroup::PostEvent});
      d.kind = parse_enum<ValueKind>(f.at("kind").get<std::string>(),
                                     {ValueKind::Categorical, ValueKind::Real, ValueKind::Binary});
      d.boundaries = f.at("boundaries").get<std::vector<double>>();
      fs.push_back(std::move(d));
    }
    return FeatureSchema(std::move(fs));
  } catch (const json::exception& e) {
    throw DataError(std::string("schema json: ") + e.what());
  }
}

std::string FeatureSchema::hash() const { return sha256_hex(to_json()); }

// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
  if (num_users == 0 || num_items == 0 || num_records == 0 || latent_dim == 0) {
    throw ConfigError("generator: counts must be positive");
  }
  if (noise_sigma < 0.0) throw ConfigError("generator: noise_sigma must be nonnegative");
  if (behavior_min_len > behavior_max_len) throw ConfigError("generator: behavior length range is empty");
  if (behavior_pool == 0 || behavior_pool > num_items) {
    throw ConfigError("generator: behavior_pool must be in [1, num_items]");
  }
  if (behavior_max_len > behavior_pool) throw ConfigError("generator: behavior_max_len exceeds behavior_pool");
  if (num_buckets < 2 || recency_buckets < 1) throw ConfigError("generator: bucket counts too small");
  if (num_interactions == 0) throw ConfigError("generator: need at least one interacted feature");
}

std::vector<std::string> GeneratorConfig::keys() {
  return {"users", "items", "records", "test-records", "latent-dim", "noise-sigma",
          "confound-alpha", "price-beta", "intercept", "behavior-min-len", "behavior-max-len",
          "behavior-pool", "user-views", "item-views", "interactions", "buckets",
          "recency-buckets", "seed"};
}

KeyValues GeneratorConfig::to_key_values() const {
  KeyValues kv;
  kv.set("users", std::to_string(num_users));
  kv.set("items", std::to_string(num_items));
  kv.set("records", std::to_string(num_records));
  kv.set("test-records", std::to_string(test_records));
  kv.set("latent-dim", std::to_string(latent_dim));
  kv.set("noise-sigma", format_double(noise_sigma));
  kv.set("confound-alpha", format_double(confound_alpha));
  kv.set("price-beta", format_double(price_beta));
  kv.set("intercept", format_double(intercept));
  kv.set("behavior-min-len", std::to_string(behavior_min_len));
  kv.set("behavior-max-len", std::to_string(behavior_max_len));
  kv.set("behavior-pool", std::to_string(behavior_pool));
  kv.set("user-views", std::to_string(num_user_views));
  kv.set("item-views", std::to_string(num_item_views));
  kv.set("interactions", std::to_string(num_interactions));
  kv.set("buckets", std::to_string(num_buckets));
  kv.set("recency-buckets", std::to_string(recency_buckets));
  kv.set("seed", std::to_string(seed));
  return kv;
}

GeneratorConfig GeneratorConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, GeneratorConfig{}); }

GeneratorConfig GeneratorConfig::from_key_values(const KeyValues& kv, GeneratorConfig c) {
  c.num_users = kv.get_uint("users", c.num_users);
  c.num_items = kv.get_uint("items", c.num_items);
  c.num_records = kv.get_uint("records", c.num_records);
  c.test_records = kv.get_uint("test-records", c.test_records);
  c.latent_dim = kv.get_uint("latent-dim", c.latent_dim);
  c.noise_sigma = kv.get_double("noise-sigma", c.noise_sigma);
  c.confound_alpha = kv.get_double("confound-alpha", c.confound_alpha);
  c.price_beta = kv.get_double("price-beta", c.price_beta);
  c.intercept = kv.get_double("intercept", c.intercept);
  c.behavior_min_len = kv.get_uint("behavior-min-len", c.behavior_min_len);
  c.behavior_max_len = kv.get_uint("behavior-max-len", c.behavior_max_len);
  c.behavior_pool = kv.get_uint("behavior-pool", c.behavior_pool);
  c.num_user_views = kv.get_uint("user-views", c.num_user_views);
  c.num_item_views = kv.get_uint("item-views", c.num_item_views);
  c.num_interactions = kv.get_uint("interactions", c.num_interactions);
  c.num_buckets = kv.get_uint("buckets", c.num_buckets);
  c.recency_buckets = kv.get_uint("recency-buckets", c.recency_buckets);
  c.seed = kv.get_uint("seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------

void validate_record(const FeatureSchema& schema, const Record& r) {
  auto check_id = [&](std::size_t feature, std::int64_t id) {
    const auto& f = schema.at(feature);
    if (id < 0 || static_cast<std::size_t>(id) >= f.vocab_size) {
      throw DataError("record " + std::to_string(r.index) + ": id " + std::to_string(id) +
                      " out of range for " + f.name);
    }
  };
  const auto users = schema.indices(FeatureRole::RegularUser);
  const auto items = schema.indices(FeatureRole::RegularItem);
  const auto inter = schema.privileged_indices(PrivilegedGroup::Interacted);
  const auto post = schema.privileged_indices(PrivilegedGroup::PostEvent);
  if (users.empty() || items.empty()) throw DataError("schema lacks user or item features");
  if (r.user_feats.size() + 1 != users.size()) throw DataError("record " + std::to_string(r.index) + ": user_feats arity");
  if (r.item_feats.size() + 1 != items.size()) throw DataError("record " + std::to_string(r.index) + ": item_feats arity");
  if (r.interacted_feats.size() != inter.size()) throw DataError("record " + std::to_string(r.index) + ": interacted_feats arity");
  if (r.post_event_feats.size() != post.size()) throw DataError("record " + std::to_string(r.index) + ": post_event_feats arity");
  check_id(users[0], r.user_id);
  for (std::size_t k = 0; k < r.user_feats.size(); ++k) check_id(users[k + 1], r.user_feats[k]);
  check_id(items[0], r.item_id);
  for (std::size_t k = 0; k < r.item_feats.size(); ++k) check_id(items[k + 1], r.item_feats[k]);
  for (std::size_t k = 0; k < r.interacted_feats.size(); ++k) check_id(inter[k], r.interacted_feats[k]);
  if (r.behavior.valid_len > r.behavior.events.size()) throw DataError("record " + std::to_string(r.index) + ": valid_len beyond events");
  if (r.label != 0 && r.label != 1) throw DataError("record " + std::to_string(r.index) + ": label must be 0 or 1");
  if (!(r.true_propensity > 0.0 && r.true_propensity < 1.0)) {
    throw DataError("record " + std::to_string(r.index) + ": true_propensity outside (0,1)");
  }
}

}  // namespace pfd
