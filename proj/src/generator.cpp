// SPDX-License-Identifier: Apache-2.0
#include "pfd/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfd/loss.hpp"

namespace pfd {

namespace {

struct RawRecord {
  std::size_t user = 0;  // 0-based
  std::size_t item = 0;
  double logit = 0.0;
  int label = 0;
  BehaviorSequence behavior;
  std::size_t category_clicks = 0;
  std::vector<double> interactions;  // raw u_k v_k + noise, k = 1..num_interactions-1
  double dwell = 0.0;
  double viewed = 0.0;
};

std::vector<double> normal_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

std::int64_t bucket_id(double value, const std::vector<double>& boundaries) {
  return static_cast<std::int64_t>(discretize(value, boundaries)) + 1;
}

FeatureDecl numeric_decl(const std::string& name, FeatureRole role, PrivilegedGroup group,
                         std::vector<double> boundaries) {
  FeatureDecl d;
  d.name = name;
  d.role = role;
  d.group = group;
  d.vocab_size = boundaries.size() + 2;
  d.boundaries = std::move(boundaries);
  return d;
}

FeatureDecl categorical_decl(const std::string& name, FeatureRole role, std::size_t vocab,
                             PrivilegedGroup group = PrivilegedGroup::None) {
  FeatureDecl d;
  d.name = name;
  d.role = role;
  d.group = group;
  d.vocab_size = vocab;
  return d;
}

}  // namespace

Dataset generate(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.latent_dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double sigma = cfg.noise_sigma;

  // Entities.
  Rng ent(derive_seed(cfg.seed, 1));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> users(cfg.num_users), items(cfg.num_items);
  for (auto& u : users) u = normal_vector(d, ent);
  for (auto& v : items) v = normal_vector(d, ent);
  std::vector<double> price_z(cfg.num_items);
  std::vector<std::int64_t> category(cfg.num_items);
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    price_z[i] = nd(ent);
    category[i] = static_cast<std::int64_t>(
                      std::max_element(items[i].begin(), items[i].end()) - items[i].begin()) + 1;
  }
  std::vector<std::vector<double>> user_views(cfg.num_users, std::vector<double>(cfg.num_user_views));
  std::vector<std::vector<double>> item_views(cfg.num_items, std::vector<double>(cfg.num_item_views));
  for (std::size_t j = 0; j < cfg.num_users; ++j) {
    for (std::size_t k = 0; k < cfg.num_user_views; ++k) user_views[j][k] = users[j][k % d] + sigma * nd(ent);
  }
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    for (std::size_t k = 0; k < cfg.num_item_views; ++k) item_views[i][k] = items[i][k % d] + sigma * nd(ent);
  }
  auto affinity = [&](std::size_t j, std::size_t i) {
    return std::inner_product(users[j].begin(), users[j].end(), items[i].begin(), 0.0) * inv_sqrt_d;
  };

  // Each user's behavior pool: top items by affinity, ties by item index.
  std::vector<std::vector<std::size_t>> pools(cfg.num_users);
  {
    std::vector<std::size_t> order(cfg.num_items);
    std::vector<double> score(cfg.num_items);
    for (std::size_t j = 0; j < cfg.num_users; ++j) {
      for (std::size_t i = 0; i < cfg.num_items; ++i) score[i] = affinity(j, i);
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.behavior_pool),
                        order.end(), [&](std::size_t a, std::size_t b) {
                          return score[a] != score[b] ? score[a] > score[b] : a < b;
                        });
      pools[j].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.behavior_pool));
    }
  }

  // Records.
  const std::size_t total = cfg.num_records + cfg.test_records;
  std::vector<RawRecord> raw(total);
  Rng rec(derive_seed(cfg.seed, 2));
  std::uniform_int_distribution<std::size_t> pick_user(0, cfg.num_users - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, cfg.num_items - 1);
  std::uniform_int_distribution<std::size_t> pick_len(cfg.behavior_min_len, cfg.behavior_max_len);
  std::uniform_int_distribution<std::int64_t> pick_bucket(1, static_cast<std::int64_t>(cfg.recency_buckets));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> pool;
  for (std::size_t r = 0; r < total; ++r) {
    RawRecord& x = raw[r];
    x.user = pick_user(rec);
    x.item = pick_item(rec);
    x.logit = affinity(x.user, x.item) + cfg.price_beta * price_z[x.item] + cfg.intercept;
    x.label = unif(rec) < sigmoid(x.logit) ? 1 : 0;

    const std::size_t len = pick_len(rec);
    pool = pools[x.user];
    for (std::size_t e = 0; e < len; ++e) {
      std::uniform_int_distribution<std::size_t> pick(e, pool.size() - 1);
      std::swap(pool[e], pool[pick(rec)]);
      const std::size_t it = pool[e];
      x.behavior.events.push_back({static_cast<std::int64_t>(it) + 1, category[it], pick_bucket(rec),
                                   pick_bucket(rec)});
      if (category[it] == category[x.item]) ++x.category_clicks;
    }
    x.behavior.valid_len = len;

    for (std::size_t k = 1; k < cfg.num_interactions; ++k) {
      const std::size_t c = k % d;
      x.interactions.push_back(users[x.user][c] * items[x.item][c] + sigma * nd(rec));
    }
    x.dwell = x.logit + cfg.confound_alpha * price_z[x.item] + sigma * nd(rec);
    x.viewed = (x.dwell + sigma * nd(rec)) > 0.0 ? 1.0 : 0.0;
  }

  // Boundaries from the train split.
  const std::size_t nb = cfg.num_buckets;
  const std::size_t ntrain = cfg.num_records;
  auto train_boundaries = [&](auto&& value_of) {
    std::vector<double> vals(ntrain);
    for (std::size_t r = 0; r < ntrain; ++r) vals[r] = value_of(raw[r]);
    return equal_frequency_boundaries(std::move(vals), nb);
  };
  std::vector<std::vector<double>> user_view_b, item_view_b, inter_b;
  for (std::size_t k = 0; k < cfg.num_user_views; ++k) {
    user_view_b.push_back(train_boundaries([&](const RawRecord& x) { return user_views[x.user][k]; }));
  }
  for (std::size_t k = 0; k < cfg.num_item_views; ++k) {
    item_view_b.push_back(train_boundaries([&](const RawRecord& x) { return item_views[x.item][k]; }));
  }
  const auto price_b = train_boundaries([&](const RawRecord& x) { return price_z[x.item]; });
  for (std::size_t k = 1; k < cfg.num_interactions; ++k) {
    inter_b.push_back(train_boundaries([&](const RawRecord& x) { return x.interactions[k - 1]; }));
  }
  const auto dwell_b = train_boundaries([&](const RawRecord& x) { return x.dwell; });

  // Schema, in record-list order.
  std::vector<FeatureDecl> decls;
  decls.push_back(categorical_decl("user_id", FeatureRole::RegularUser, cfg.num_users + 1));
  for (std::size_t k = 0; k < cfg.num_user_views; ++k) {
    decls.push_back(numeric_decl("user_view_" + std::to_string(k), FeatureRole::RegularUser,
                                 PrivilegedGroup::None, user_view_b[k]));
    decls.back().kind = ValueKind::Categorical;
  }
  decls.push_back(categorical_decl("item_id", FeatureRole::RegularItem, cfg.num_items + 1));
  decls.push_back(categorical_decl("item_category", FeatureRole::RegularItem, d + 1));
  decls.push_back(numeric_decl("price_bucket", FeatureRole::RegularItem, PrivilegedGroup::None, price_b));
  for (std::size_t k = 0; k < cfg.num_item_views; ++k) {
    decls.push_back(numeric_decl("item_view_" + std::to_string(k), FeatureRole::RegularItem,
                                 PrivilegedGroup::None, item_view_b[k]));
  }
  decls.push_back(categorical_decl("behavior_item", FeatureRole::Behavior, cfg.num_items + 1));
  decls.push_back(categorical_decl("behavior_category", FeatureRole::Behavior, d + 1));
  decls.push_back(categorical_decl("behavior_recency", FeatureRole::Behavior, cfg.recency_buckets + 1));
  decls.push_back(categorical_decl("behavior_dwell", FeatureRole::Behavior, cfg.recency_buckets + 1));
  decls.push_back(categorical_decl("user_category_clicks", FeatureRole::Privileged,
                                   cfg.behavior_max_len + 2, PrivilegedGroup::Interacted));
  for (std::size_t k = 1; k < cfg.num_interactions; ++k) {
    decls.push_back(numeric_decl("interaction_" + std::to_string(k), FeatureRole::Privileged,
                                 PrivilegedGroup::Interacted, inter_b[k - 1]));
  }
  decls.push_back(numeric_decl("dwell_time", FeatureRole::Privileged, PrivilegedGroup::PostEvent, dwell_b));
  decls.back().kind = ValueKind::Real;
  decls.push_back(numeric_decl("viewed_comments", FeatureRole::Privileged, PrivilegedGroup::PostEvent, {0.5}));
  decls.back().kind = ValueKind::Binary;
  // Pre-discretized categoricals keep their boundaries for provenance only.
  for (auto& f : decls) {
    if (f.role != FeatureRole::Privileged || f.group == PrivilegedGroup::Interacted) f.kind = ValueKind::Categorical;
  }

  Dataset out;
  out.schema = FeatureSchema(std::move(decls));
  out.generator = cfg;
  out.train.reserve(ntrain);
  out.test.reserve(cfg.test_records);
  for (std::size_t r = 0; r < total; ++r) {
    RawRecord& x = raw[r];
    Record o;
    o.index = r;
    o.user_id = static_cast<std::int64_t>(x.user) + 1;
    o.item_id = static_cast<std::int64_t>(x.item) + 1;
    for (std::size_t k = 0; k < cfg.num_user_views; ++k) o.user_feats.push_back(bucket_id(user_views[x.user][k], user_view_b[k]));
    o.item_feats.push_back(category[x.item]);
    o.item_feats.push_back(bucket_id(price_z[x.item], price_b));
    for (std::size_t k = 0; k < cfg.num_item_views; ++k) o.item_feats.push_back(bucket_id(item_views[x.item][k], item_view_b[k]));
    o.behavior = std::move(x.behavior);
    o.interacted_feats.push_back(static_cast<std::int64_t>(x.category_clicks) + 1);
    for (std::size_t k = 1; k < cfg.num_interactions; ++k) o.interacted_feats.push_back(bucket_id(x.interactions[k - 1], inter_b[k - 1]));
    o.post_event_feats = {x.dwell, x.viewed};
    o.label = x.label;
    o.true_propensity = sigmoid(x.logit);
    (r < ntrain ? out.train : out.test).push_back(std::move(o));
  }
  return out;
}

}  // namespace pfd
