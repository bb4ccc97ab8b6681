// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfd/features.hpp"
#include "pfd/models.hpp"

namespace pfd {

/// Precomputed unit-norm item-tower outputs, one row per item.
struct ItemIndex {
  std::vector<std::int64_t> item_ids;
  Tensor vectors;  // [num_items x out_dim]
  std::string checkpoint_hash;
  double scale = 5.0;

  std::size_t size() const { return item_ids.size(); }
  friend bool operator==(const ItemIndex&, const ItemIndex&) = default;
};

/// Runs the student's item tower in eval mode over `items`.
ItemIndex build_index(ModelGraph& graph, std::span<const ItemFeatures> items, const std::string& checkpoint_hash);

/// Header (magic, version, out_dim, num_items, checkpoint hash, scale), item
/// ids, then row-major little-endian doubles.
void save_index(const ItemIndex& index, const std::string& path);
/// Refuses an index produced by a different checkpoint.
ItemIndex load_index(const std::string& path, const std::string& expected_checkpoint_hash);

struct ScoredItem {
  std::int64_t item_id = 0;
  double score = 0.0;
};

/// One user-tower forward, then scale * <user, row> for every indexed item.
/// Top k by score; equal scores rank the smaller id first.
std::vector<ScoredItem> score_request(ModelGraph& graph, const UserFeatures& user, const ItemIndex& index,
                                      std::size_t k);

/// Fused multiply-adds of one tower forward (weight matrices only) versus
/// one inner product.
struct FlopsReport {
  std::uint64_t mapping_flops = 0;
  std::uint64_t inner_product_flops = 0;
  double ratio = 0.0;

  std::string to_json() const;
  static FlopsReport from_json(const std::string& text);
  friend bool operator==(const FlopsReport&, const FlopsReport&) = default;
};

FlopsReport flops_count(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim);

struct LatencyReport {
  std::size_t num_candidates = 0;
  std::size_t repeats = 0;
  std::vector<std::size_t> dims;  // input, hidden..., output
  double mapping_time_s = 0.0;
  double inner_product_time_s = 0.0;
  double ratio = 0.0;

  std::string to_json() const;
  static LatencyReport from_json(const std::string& text);
  friend bool operator==(const LatencyReport&, const LatencyReport&) = default;
};

/// Times `repeats` rounds of num_candidates tower forwards (dense layers
/// with leaky relu, random weights) against num_candidates inner products.
LatencyReport latency_bench(std::size_t num_candidates, std::size_t repeats, const std::vector<std::size_t>& dims,
                            std::uint64_t seed = 1);

}  // namespace pfd
