// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfd/attention.hpp"
#include "pfd/config_file.hpp"

namespace pfd {

enum class FeatureRole { RegularUser, RegularItem, Behavior, Privileged };
/// Which privileged block a feature belongs to: interacted user-item
/// features (coarse-ranking CTR) or post-event features (CVR).
enum class PrivilegedGroup { None, Interacted, PostEvent };
/// How a feature's record value is stored. Categorical values are ids;
/// Real and Binary values are raw numbers discretized through `boundaries`
/// when fed to a model.
enum class ValueKind { Categorical, Real, Binary };

std::string to_string(FeatureRole r);
std::string to_string(PrivilegedGroup g);
std::string to_string(ValueKind k);

struct FeatureDecl {
  std::string name;
  std::size_t vocab_size = 0;  // embedding rows, including reserved row 0
  FeatureRole role = FeatureRole::RegularUser;
  PrivilegedGroup group = PrivilegedGroup::None;
  ValueKind kind = ValueKind::Categorical;
  std::vector<double> boundaries;

  friend bool operator==(const FeatureDecl&, const FeatureDecl&) = default;
};

/// bucket = number of boundaries <= value, in [0, boundaries.size()].
std::size_t discretize(double value, std::span<const double> boundaries);

/// Equal-frequency cut points splitting `values` into `buckets` groups.
/// Duplicate cut points are dropped so the result is strictly increasing.
std::vector<double> equal_frequency_boundaries(std::vector<double> values, std::size_t buckets);

/// Ordered feature declarations. The order fixes how record lists map to
/// features and how embeddings are concatenated.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureDecl> features);

  const std::vector<FeatureDecl>& features() const { return features_; }
  const FeatureDecl& at(std::size_t i) const { return features_.at(i); }
  std::size_t size() const { return features_.size(); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  /// Feature indices of a role, in declaration order.
  std::vector<std::size_t> indices(FeatureRole role) const;
  std::vector<std::size_t> privileged_indices(PrivilegedGroup group) const;

  std::string to_json() const;
  static FeatureSchema from_json(const std::string& text);
  std::string hash() const;

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.features_ == b.features_;
  }

 private:
  void validate() const;
  std::vector<FeatureDecl> features_;
};

/// One training example. Feature lists follow schema declaration order:
/// user_feats excludes user_id, item_feats excludes item_id.
struct Record {
  std::uint64_t index = 0;
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  std::vector<std::int64_t> user_feats;
  std::vector<std::int64_t> item_feats;
  BehaviorSequence behavior;
  std::vector<std::int64_t> interacted_feats;
  std::vector<double> post_event_feats;
  int label = 0;
  double true_propensity = 0.5;  // generator-only, never a model input

  friend bool operator==(const Record&, const Record&) = default;
};

struct GeneratorConfig {
  std::size_t num_users = 2000;
  std::size_t num_items = 500;
  std::size_t num_records = 200000;  // train split
  std::size_t test_records = 20000;
  std::size_t latent_dim = 8;
  double noise_sigma = 0.5;
  double confound_alpha = 1.5;
  double price_beta = -1.0;
  double intercept = 0.0;
  std::size_t behavior_min_len = 2;
  std::size_t behavior_max_len = 10;
  std::size_t behavior_pool = 20;
  std::size_t num_user_views = 4;
  std::size_t num_item_views = 4;
  std::size_t num_interactions = 4;
  std::size_t num_buckets = 8;
  std::size_t recency_buckets = 8;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_key_values() const;
  static GeneratorConfig from_key_values(const KeyValues& kv);
  static GeneratorConfig from_key_values(const KeyValues& kv, GeneratorConfig base);
  static std::vector<std::string> keys();

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct Dataset {
  FeatureSchema schema;
  GeneratorConfig generator;
  std::vector<Record> train;
  std::vector<Record> test;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// JSON Lines: a header object (schema, schema hash, generator config, split
/// sizes) followed by one record per line, train split first.
void write_jsonl(const Dataset& dataset, const std::string& path);
/// Throws DataError on malformed lines (with 1-based line number), unknown
/// or missing fields, and when `expected_schema` is given but its hash
/// differs from the header's.
Dataset read_jsonl(const std::string& path, const FeatureSchema* expected_schema = nullptr);

/// index,split,user_id,item_id,label,true_propensity
void write_propensity_csv(const Dataset& dataset, const std::string& path);

/// Checks record arity and id ranges against the schema.
void validate_record(const FeatureSchema& schema, const Record& r);

}  // namespace pfd
