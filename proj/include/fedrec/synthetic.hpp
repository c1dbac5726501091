#pragma once

#include <cstddef>
#include <cstdint>

#include "fedrec/data.hpp"

namespace fedrec {

/// Latent-factor generator for implicit-feedback logs. Defaults give a log with
/// the raw shape of FilmTrust (1,508 users, 2,071 items, about 35.5k events):
/// long-tailed user activity, Zipf-like item popularity, clustered preferences.
struct SyntheticSpec {
  std::size_t users = 1508;
  std::size_t items = 2071;
  double mean_interactions = 23.5;
  double activity_spread = 1.0;  // log-normal sigma of per-user activity
  std::size_t latent_dim = 8;
  double popularity_exponent = 0.8;
  double affinity = 2.5;
  std::uint64_t seed = 2016;
};

InteractionLog generate_synthetic_log(const SyntheticSpec& spec);

}  // namespace fedrec
