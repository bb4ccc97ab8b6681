// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "pfd/errors.hpp"
#include "pfd/metrics.hpp"
#include "support.hpp"

using namespace pfd;

namespace {

/// O(N^2) pair count: 2 per correctly ordered pair, 1 per tie.
std::uint64_t pairwise_twice_u(const std::vector<double>& s, const std::vector<int>& y) {
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      u += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return u;
}

}  // namespace

TEST(Auc, HandExamples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(s, y), 0.75);
  const std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(auc(tied, y), 0.5);
  const std::vector<double> perfect{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(auc(perfect, y), 1.0);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  Rng rng(17);
  for (int inst = 0; inst < 200; ++inst) {
    std::uniform_int_distribution<std::size_t> len(2, 1000);
    const std::size_t n = len(rng);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::normal_distribution<double> fine(0.0, 1.0);
    std::bernoulli_distribution half(0.5);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = half(rng) ? coarse(rng) : fine(rng);
      y[i] = half(rng) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(auc_twice_u(s, y), pairwise_twice_u(s, y)) << "instance " << inst;
  }
}

TEST(Auc, SingleClassIsUndefined) {
  const std::vector<double> s{1, 2};
  EXPECT_THROW(auc(s, std::vector<int>{1, 1}), ContractError);
  EXPECT_THROW(auc(s, std::vector<int>{0, 2}), ContractError);
  EXPECT_THROW(auc(s, std::vector<int>{0}), ContractError);
}

TEST(Gmv, RanksByExpectedValueThenId) {
  std::vector<RankedItem> items{make_ranked_item(5, 0.1, 0.5, 10.0), make_ranked_item(2, 0.2, 0.25, 10.0),
                                make_ranked_item(9, 0.5, 0.1, 100.0), make_ranked_item(1, 0.01, 0.01, 1.0)};
  EXPECT_DOUBLE_EQ(items[2].expected_gmv, 5.0);
  const auto top = gmv_rank(items, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].item_id, 9);
  EXPECT_EQ(top[1].item_id, 2);  // ties with 5 at 0.5, smaller id first
  EXPECT_EQ(top[2].item_id, 5);
  EXPECT_THROW(gmv_rank(items, 5), ConfigError);
}
