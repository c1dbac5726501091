#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/model.hpp"

namespace fedrec {

struct HitNdcg {
  double hr = 0.0;
  double ndcg = 0.0;
};

struct EvalReport {
  std::map<std::size_t, HitNdcg> at;  // keyed by K
  std::vector<std::size_t> ranks;     // 1-based rank of each user's test item
};

/// 1-based position of `test_item` after sorting candidates by descending
/// score; equal scores are ordered by ascending item id.
std::size_t rank_candidates(std::span<const double> scores, std::span<const ItemId> candidates, ItemId test_item);
std::size_t rank_candidates(const GlobalParams& g, std::span<const double> user, std::span<const ItemId> candidates,
                            ItemId test_item);

/// hr = mean 1[rank <= K]; ndcg = mean 1/log2(rank + 1) over hits.
HitNdcg compute_metrics(std::span<const std::size_t> ranks, std::size_t k);

EvalReport evaluate(const GlobalParams& g, std::span<const ClientState> clients, const SplitDataset& ds,
                    std::span<const std::size_t> ks = std::span<const std::size_t>{});

inline constexpr std::size_t kDefaultKs[] = {5, 10};

/// `round,method,seed,hr@5,ndcg@5,hr@10,ndcg@10` for the default cutoffs.
std::string metrics_csv_header(std::span<const std::size_t> ks = kDefaultKs);
std::string metrics_csv_row(std::size_t round, std::string_view method, std::uint64_t seed, const EvalReport& r,
                            std::span<const std::size_t> ks = kDefaultKs);

}  // namespace fedrec
