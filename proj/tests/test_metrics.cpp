#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrec/metrics.hpp"

using namespace fedrec;

namespace {

// Rank by sorting (score desc, id asc) pairs and locating the test item.
std::size_t sort_rank(const std::vector<double>& scores, const std::vector<ItemId>& items, ItemId test) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  });
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (items[order[r]] == test) return r + 1;
  }
  return 0;
}

}  // namespace

TEST(Metrics, ClosedFormValues) {
  const std::size_t one[] = {1}, ten[] = {10}, eleven[] = {11};
  EXPECT_NEAR(compute_metrics(one, 10).ndcg, 1.0, 1e-12);
  EXPECT_NEAR(compute_metrics(ten, 10).ndcg, 1.0 / std::log2(11.0), 1e-12);
  EXPECT_NEAR(compute_metrics(ten, 10).ndcg, 0.289065, 1e-6);
  EXPECT_EQ(compute_metrics(eleven, 10).ndcg, 0.0);
  EXPECT_EQ(compute_metrics(eleven, 10).hr, 0.0);
  EXPECT_EQ(compute_metrics(ten, 10).hr, 1.0);
}

TEST(Metrics, MeanOverUsers) {
  const std::size_t ranks[] = {1, 3, 7, 50};
  auto m = compute_metrics(ranks, 5);
  EXPECT_NEAR(m.hr, 0.5, 1e-15);
  EXPECT_NEAR(m.ndcg, (1.0 + 1.0 / std::log2(4.0)) / 4.0, 1e-15);
}

TEST(Metrics, RankTiesGoToSmallerId) {
  const double scores[] = {0.5, 0.5, 0.5};
  const ItemId items[] = {7, 3, 9};
  EXPECT_EQ(rank_candidates(scores, items, 7), 2u);
  EXPECT_EQ(rank_candidates(scores, items, 3), 1u);
  EXPECT_EQ(rank_candidates(scores, items, 9), 3u);
}

TEST(Metrics, RankMatchesSortOracle) {
  Rng rng(4);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ItemId> items(100);
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);
    std::vector<double> scores(100);
    for (auto& s : scores) s = coarse(rng) * 0.25;
    const ItemId test = items[0];
    EXPECT_EQ(rank_candidates(scores, items, test), sort_rank(scores, items, test));
  }
}

TEST(Metrics, MonotoneInKAndNdcgBelowHr) {
  Rng rng(9);
  std::uniform_int_distribution<std::size_t> rank(1, 100);
  std::vector<std::size_t> ranks(300);
  for (auto& r : ranks) r = rank(rng);
  HitNdcg prev{};
  for (std::size_t k = 1; k <= 100; ++k) {
    auto m = compute_metrics(ranks, k);
    EXPECT_GE(m.hr, prev.hr);
    EXPECT_GE(m.ndcg, prev.ndcg);
    EXPECT_LE(m.ndcg, m.hr);
    EXPECT_GE(m.ndcg, 0.0);
    EXPECT_LE(m.hr, 1.0);
    prev = m;
  }
  EXPECT_EQ(prev.hr, 1.0);
}

TEST(Metrics, EvaluateRanksEachUsersCandidates) {
  SplitDataset ds;
  ds.num_items = 4;
  ds.train = {{3}, {2}};
  ds.test = {0, 1};
  ds.eval_candidates = {{0, 1, 2}, {1, 0, 3}};
  GlobalParams g(4, ScoreFn{ScoreKind::dot, 1, 0});
  const double rows[] = {1.0, 3.0, 2.0, 5.0};
  std::copy(std::begin(rows), std::end(rows), g.flat().begin());
  std::vector<ClientState> clients(2);
  clients[0].user = 0;
  clients[0].embedding = {1.0};
  clients[1].user = 1;
  clients[1].embedding = {-1.0};
  const std::size_t ks[] = {1, 2};
  auto r = evaluate(g, clients, ds, ks);
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(r.at.at(1).hr, 0.0);
  EXPECT_EQ(r.at.at(2).hr, 0.5);
  EXPECT_NEAR(r.at.at(2).ndcg, 0.5 / std::log2(3.0), 1e-15);
}

TEST(Metrics, CsvHeaderAndRow) {
  EXPECT_EQ(metrics_csv_header(), "round,method,seed,hr@5,ndcg@5,hr@10,ndcg@10");
  EvalReport r;
  r.at[5] = {0.25, 0.125};
  r.at[10] = {0.5, 0.3};
  EXPECT_EQ(metrics_csv_row(10, "FEDRECGEL", 2, r), "10,FEDRECGEL,2,0.250000,0.125000,0.500000,0.300000");
}
