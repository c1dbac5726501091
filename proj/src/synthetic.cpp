#include "fedrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedrec {

InteractionLog generate_synthetic_log(const SyntheticSpec& spec) {
  if (spec.users == 0 || spec.items <= kEvalCandidates) {
    throw DataError("synthetic log needs at least one user and more than 100 items");
  }
  Rng rng = make_rng(spec.seed, "synthetic");
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t k = std::max<std::size_t>(spec.latent_dim, 1);
  const double coord_scale = 1.0 / std::pow(static_cast<double>(k), 0.25);

  std::vector<double> item_factors(spec.items * k);
  for (auto& v : item_factors) v = coord_scale * normal(rng);

  // Popularity ranks are a random permutation so popularity is not tied to id order.
  std::vector<std::size_t> pop_rank(spec.items);
  std::iota(pop_rank.begin(), pop_rank.end(), 0);
  std::shuffle(pop_rank.begin(), pop_rank.end(), rng);
  std::vector<double> log_pop(spec.items);
  for (std::size_t i = 0; i < spec.items; ++i) {
    log_pop[i] = -spec.popularity_exponent * std::log(static_cast<double>(pop_rank[i] + 1));
  }

  const double sigma = spec.activity_spread;
  const double mu = std::log(spec.mean_interactions) - 0.5 * sigma * sigma;
  std::lognormal_distribution<double> activity(mu, sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t max_per_user = spec.items - kEvalCandidates - 1;

  InteractionLog log;
  log.user_ids.reserve(spec.users);
  log.item_ids.resize(spec.items);
  for (std::size_t i = 0; i < spec.items; ++i) log.item_ids[i] = std::to_string(i + 1);

  std::vector<double> user_factor(k);
  std::vector<std::pair<double, ItemId>> keys(spec.items);
  std::vector<bool> item_used(spec.items, false);
  std::int64_t clock = 0;
  for (std::size_t u = 0; u < spec.users; ++u) {
    for (auto& v : user_factor) v = coord_scale * normal(rng);
    auto count = static_cast<std::size_t>(std::llround(activity(rng)));
    count = std::clamp<std::size_t>(count, 1, max_per_user);
    // Gumbel top-k: sampling without replacement proportional to exp(utility).
    for (std::size_t i = 0; i < spec.items; ++i) {
      double dot = 0.0;
      for (std::size_t f = 0; f < k; ++f) dot += user_factor[f] * item_factors[i * k + f];
      double gumbel = -std::log(-std::log(std::max(unit(rng), 1e-300)));
      keys[i] = {log_pop[i] + spec.affinity * dot + gumbel, static_cast<ItemId>(i)};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<ItemId> chosen(count);
    for (std::size_t j = 0; j < count; ++j) chosen[j] = keys[j].second;
    std::shuffle(chosen.begin(), chosen.end(), rng);  // consumption order
    log.user_ids.push_back(std::to_string(u + 1));
    for (auto item : chosen) {
      log.events.push_back({static_cast<UserId>(u), item, clock++});
      item_used[item] = true;
    }
  }

  // Drop never-consumed items and re-densify ids.
  std::vector<ItemId> remap(spec.items, 0);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.items; ++i) {
    if (!item_used[i]) continue;
    remap[i] = static_cast<ItemId>(names.size());
    names.push_back(log.item_ids[i]);
  }
  for (auto& ev : log.events) ev.item = remap[ev.item];
  log.item_ids = std::move(names);
  log.raw_rows = log.events.size();
  return log;
}

}  // namespace fedrec
