// SPDX-License-Identifier: Apache-2.0
#include "pfd/features.hpp"

#include <map>

#include "pfd/errors.hpp"

namespace pfd {

namespace {

Batch empty_batch(const FeatureSchema& schema, std::size_t n) {
  Batch b;
  b.size = n;
  b.ids.assign(schema.size(), {});
  return b;
}

}  // namespace

Batch make_batch(const FeatureSchema& schema, std::span<const Record> records,
                 std::span<const std::size_t> rows, bool with_privileged) {
  const auto users = schema.indices(FeatureRole::RegularUser);
  const auto items = schema.indices(FeatureRole::RegularItem);
  const auto inter = schema.privileged_indices(PrivilegedGroup::Interacted);
  const auto post = schema.privileged_indices(PrivilegedGroup::PostEvent);

  Batch b = empty_batch(schema, rows.size());
  b.has_privileged = with_privileged;
  for (auto f : users) b.ids[f].reserve(rows.size());
  for (auto f : items) b.ids[f].reserve(rows.size());
  b.behavior.reserve(rows.size());
  b.labels.reserve(rows.size());
  if (with_privileged) b.aux_targets.assign(post.size(), {});

  for (std::size_t r : rows) {
    if (r >= records.size()) throw ContractError("make_batch: row out of range");
    const Record& rec = records[r];
    b.ids[users[0]].push_back(rec.user_id);
    for (std::size_t k = 0; k < rec.user_feats.size(); ++k) b.ids[users[k + 1]].push_back(rec.user_feats[k]);
    b.ids[items[0]].push_back(rec.item_id);
    for (std::size_t k = 0; k < rec.item_feats.size(); ++k) b.ids[items[k + 1]].push_back(rec.item_feats[k]);
    b.behavior.push_back(&rec.behavior);
    b.labels.push_back(rec.label);
    if (!with_privileged) continue;
    for (std::size_t k = 0; k < inter.size(); ++k) b.ids[inter[k]].push_back(rec.interacted_feats.at(k));
    for (std::size_t k = 0; k < post.size(); ++k) {
      const auto& f = schema.at(post[k]);
      const double v = rec.post_event_feats.at(k);
      b.ids[post[k]].push_back(static_cast<std::int64_t>(discretize(v, f.boundaries)) + 1);
      b.aux_targets[k].push_back(v);
    }
  }
  return b;
}

Batch make_user_batch(const FeatureSchema& schema, std::span<const UserFeatures> users) {
  const auto idx = schema.indices(FeatureRole::RegularUser);
  Batch b = empty_batch(schema, users.size());
  for (const auto& u : users) {
    if (u.user_feats.size() + 1 != idx.size()) throw ContractError("user features arity mismatch");
    b.ids[idx[0]].push_back(u.user_id);
    for (std::size_t k = 0; k < u.user_feats.size(); ++k) b.ids[idx[k + 1]].push_back(u.user_feats[k]);
    b.behavior.push_back(&u.behavior);
  }
  return b;
}

Batch make_item_batch(const FeatureSchema& schema, std::span<const ItemFeatures> items) {
  const auto idx = schema.indices(FeatureRole::RegularItem);
  Batch b = empty_batch(schema, items.size());
  for (const auto& it : items) {
    if (it.item_feats.size() + 1 != idx.size()) throw ContractError("item features arity mismatch");
    b.ids[idx[0]].push_back(it.item_id);
    for (std::size_t k = 0; k < it.item_feats.size(); ++k) b.ids[idx[k + 1]].push_back(it.item_feats[k]);
  }
  return b;
}

std::vector<ItemFeatures> item_catalog(std::span<const Record> records) {
  std::map<std::int64_t, ItemFeatures> seen;
  for (const auto& r : records) seen.try_emplace(r.item_id, ItemFeatures{r.item_id, r.item_feats});
  std::vector<ItemFeatures> out;
  out.reserve(seen.size());
  for (auto& [id, f] : seen) out.push_back(std::move(f));
  return out;
}

std::vector<UserFeatures> user_catalog(std::span<const Record> records) {
  std::map<std::int64_t, UserFeatures> seen;
  for (const auto& r : records) seen.try_emplace(r.user_id, UserFeatures{r.user_id, r.user_feats, r.behavior});
  std::vector<UserFeatures> out;
  out.reserve(seen.size());
  for (auto& [id, f] : seen) out.push_back(std::move(f));
  return out;
}

}  // namespace pfd
