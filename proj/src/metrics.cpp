#include "fedrec/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fedrec {

std::size_t rank_candidates(std::span<const double> scores, std::span<const ItemId> candidates, ItemId test_item) {
  if (scores.size() != candidates.size()) throw std::invalid_argument("rank_candidates: size mismatch");
  std::size_t pos = candidates.size();
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (candidates[j] == test_item) {
      pos = j;
      break;
    }
  }
  if (pos == candidates.size()) throw std::invalid_argument("rank_candidates: test item not among candidates");
  const double s = scores[pos];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (j == pos) continue;
    if (scores[j] > s || (scores[j] == s && candidates[j] < test_item)) ++ahead;
  }
  return ahead + 1;
}

std::size_t rank_candidates(const GlobalParams& g, std::span<const double> user, std::span<const ItemId> candidates,
                            ItemId test_item) {
  std::vector<double> scores(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j) scores[j] = score(g, user, candidates[j]);
  return rank_candidates(scores, candidates, test_item);
}

HitNdcg compute_metrics(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("compute_metrics: no ranks");
  double hits = 0.0;
  double gain = 0.0;
  for (auto r : ranks) {
    if (r == 0) throw std::invalid_argument("compute_metrics: ranks are 1-based");
    if (r <= k) {
      hits += 1.0;
      gain += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
  }
  const double n = static_cast<double>(ranks.size());
  return {hits / n, gain / n};
}

EvalReport evaluate(const GlobalParams& g, std::span<const ClientState> clients, const SplitDataset& ds,
                    std::span<const std::size_t> ks) {
  if (ks.empty()) ks = kDefaultKs;
  if (clients.size() != ds.num_users()) throw std::invalid_argument("evaluate: client count mismatch");
  EvalReport report;
  report.ranks.resize(ds.num_users());
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    report.ranks[u] = rank_candidates(g, clients[u].embedding, ds.eval_candidates[u], ds.test[u]);
  }
  for (auto k : ks) report.at[k] = compute_metrics(report.ranks, k);
  return report;
}

std::string metrics_csv_header(std::span<const std::size_t> ks) {
  std::string h = "round,method,seed";
  for (auto k : ks) h += ",hr@" + std::to_string(k) + ",ndcg@" + std::to_string(k);
  return h;
}

std::string metrics_csv_row(std::size_t round, std::string_view method, std::uint64_t seed, const EvalReport& r,
                            std::span<const std::size_t> ks) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.*s,%llu", round, static_cast<int>(method.size()), method.data(),
                static_cast<unsigned long long>(seed));
  std::string row = buf;
  for (auto k : ks) {
    auto it = r.at.find(k);
    const auto m = it == r.at.end() ? HitNdcg{NAN, NAN} : it->second;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f", m.hr, m.ndcg);
    row += buf;
  }
  return row;
}

}  // namespace fedrec
