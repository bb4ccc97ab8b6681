// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pfd/data.hpp"

namespace pfd {

/// Column-major view of a group of records, ready for embedding lookups.
/// ids[f] holds one id per row for schema feature f; it is empty for
/// behavior features and for privileged features when has_privileged is
/// false (serving batches).
struct Batch {
  std::size_t size = 0;
  std::uint64_t batch_id = 0;
  bool has_privileged = false;
  std::vector<std::vector<std::int64_t>> ids;
  std::vector<const BehaviorSequence*> behavior;
  std::vector<double> labels;
  /// Raw post-event values (one vector per post-event feature), used as
  /// auxiliary targets by the multi-task model.
  std::vector<std::vector<double>> aux_targets;
};

/// Gathers `rows` of `records`. The batch keeps pointers into `records`.
Batch make_batch(const FeatureSchema& schema, std::span<const Record> records,
                 std::span<const std::size_t> rows, bool with_privileged = true);

/// Serving-side inputs.
struct UserFeatures {
  std::int64_t user_id = 0;
  std::vector<std::int64_t> user_feats;
  BehaviorSequence behavior;
};
struct ItemFeatures {
  std::int64_t item_id = 0;
  std::vector<std::int64_t> item_feats;
};

/// Batches carrying only user-side or only item-side features.
Batch make_user_batch(const FeatureSchema& schema, std::span<const UserFeatures> users);
Batch make_item_batch(const FeatureSchema& schema, std::span<const ItemFeatures> items);

/// Distinct items (ascending id) and users with their regular features, as
/// seen in the records. A user's behavior is taken from its first record.
std::vector<ItemFeatures> item_catalog(std::span<const Record> records);
std::vector<UserFeatures> user_catalog(std::span<const Record> records);

}  // namespace pfd
