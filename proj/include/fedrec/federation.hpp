#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/model.hpp"
#include "fedrec/optimizer.hpp"
#include "fedrec/sam.hpp"

namespace fedrec {

enum class Method { fedrecgel, baseline_plain, ablate_no_nonshared, ablate_no_shared };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct TrainConfig {
  std::size_t rounds = 100;
  std::size_t clients_per_round = 0;  // 0: every client participates
  std::size_t local_epochs = 1;
  std::size_t batch_size = 256;
  double lr = 0.01;
  std::size_t embedding_dim = 32;
  std::size_t negatives_per_positive = 4;
  Method method = Method::fedrecgel;
  SamConfig sam;
  NormRegConfig normreg;
  std::uint64_t seed = 0;
  ScoreKind score_kind = ScoreKind::dot;
  std::size_t hidden_units = 16;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t workers = 1;  // execution only; never changes results

  ScoreFn score_fn() const { return {score_kind, embedding_dim, hidden_units}; }
  void validate(std::size_t num_users) const;
  bool operator==(const TrainConfig&) const = default;
};

/// The switches a method actually trains with. BASELINE_PLAIN zeroes both
/// radii and the regularizer; each ablation zeroes one radius.
struct MethodSwitches {
  double rho_co = 0.0;
  double rho_ur = 0.0;
  bool normreg = false;
  bool sam_path = true;  // false: plain local-gradient path
};

MethodSwitches resolve_method(const TrainConfig& cfg);

struct ClientStats {
  double mean_loss = 0.0;  // mean over batches of the pre-update batch loss
  std::size_t num_samples = 0;
  std::size_t num_batches = 0;
  bool skipped = false;
};

struct ClientUpdateResult {
  SparseShared shared_grad;  // the only thing uploaded to the server
  ClientStats stats;
};

/// One client's local round against an immutable snapshot. Mutates only
/// `client`. `shared_sq_norm` is |theta_co|^2 of the snapshot; it is only read
/// when the norm regularizer is active and is computed on demand if absent.
ClientUpdateResult client_update(const GlobalParams& snapshot, ClientState& client, const SplitDataset& ds,
                                 const TrainConfig& cfg, Rng& rng,
                                 std::optional<double> shared_sq_norm = std::nullopt);

struct ClientUpload {
  UserId client;
  SparseShared grad;
};

/// Coordinate-wise mean with divisor uploads.size(), summed in ascending
/// client-id order. Returns a dense vector over the shared parameters.
std::vector<double> aggregate(std::span<const ClientUpload> uploads, std::size_t num_items);

struct RoundResult {
  std::size_t round = 0;  // 1-based
  double aggregated_grad_norm = 0.0;
  double mean_client_loss = 0.0;
  double seconds = 0.0;
  std::vector<UserId> participants;  // ascending
};

/// Server + client state that fully determines the continuation of training.
struct TrainState {
  GlobalParams global;
  Optimizer server_optimizer;
  std::vector<ClientState> clients;
  std::size_t completed_rounds = 0;

  bool operator==(const TrainState&) const = default;
};

TrainState init_train_state(const SplitDataset& ds, const TrainConfig& cfg);

/// Clients sampled for a 1-based round, ascending.
std::vector<UserId> sample_clients(std::size_t num_users, const TrainConfig& cfg, std::size_t round);

using RoundObserver = std::function<void(const RoundResult&, const TrainState&)>;
/// Sees every upload the server receives; used for auditing the privacy boundary.
using UploadObserver = std::function<void(std::size_t round, const ClientUpload&)>;

struct TrainHooks {
  RoundObserver on_round;
  UploadObserver on_upload;
};

struct TrainResult {
  TrainState state;
  std::vector<RoundResult> rounds;
};

/// Runs rounds completed_rounds+1 .. cfg.rounds starting from `initial` (or a
/// fresh initialization).
TrainResult run_training(const SplitDataset& ds, const TrainConfig& cfg, const TrainHooks& hooks = {},
                         std::optional<TrainState> initial = std::nullopt);

}  // namespace fedrec
