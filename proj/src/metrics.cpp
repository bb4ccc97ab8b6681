// SPDX-License-Identifier: Apache-2.0
#include "pfd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfd/errors.hpp"

namespace pfd {

std::uint64_t auc_twice_u(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw ContractError("auc: NaN score");
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("auc: labels must be 0 or 1");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk groups of equal scores in ascending order.
  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    i = j;
  }
  return twice_u;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  const auto pos = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<std::uint64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw ContractError("AUC undefined: labels contain a single class");
  return static_cast<double>(auc_twice_u(scores, labels)) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

RankedItem make_ranked_item(std::int64_t item_id, double ctr, double cvr, double price) {
  return {item_id, ctr, cvr, price, ctr * cvr * price};
}

std::vector<RankedItem> gmv_rank(std::vector<RankedItem> items, std::size_t k) {
  if (k > items.size()) throw ConfigError("gmv_rank: k exceeds the number of items");
  std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.expected_gmv != b.expected_gmv) return a.expected_gmv > b.expected_gmv;
    return a.item_id < b.item_id;
  });
  items.resize(k);
  return items;
}

}  // namespace pfd
