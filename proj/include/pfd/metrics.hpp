// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pfd {

/// Twice the Mann-Whitney U statistic: 2 per correctly ordered
/// (positive, negative) pair and 1 per tie. Exact integer arithmetic.
std::uint64_t auc_twice_u(std::span<const double> scores, std::span<const int> labels);

/// P(score of a random positive > score of a random negative), ties count
/// one half. O(N log N). Throws ContractError when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RankedItem {
  std::int64_t item_id = 0;
  double ctr = 0.0;
  double cvr = 0.0;
  double price = 0.0;
  double expected_gmv = 0.0;
};

RankedItem make_ranked_item(std::int64_t item_id, double ctr, double cvr, double price);

/// Top k by expected GMV, descending; equal GMV ranks the smaller id first.
std::vector<RankedItem> gmv_rank(std::vector<RankedItem> items, std::size_t k);

}  // namespace pfd
