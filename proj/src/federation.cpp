#include "fedrec/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <exception>
#include <iostream>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

namespace fedrec {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::fedrecgel: return "FEDRECGEL";
    case Method::baseline_plain: return "BASELINE_PLAIN";
    case Method::ablate_no_nonshared: return "ABLATE_NO_NONSHARED";
    case Method::ablate_no_shared: return "ABLATE_NO_SHARED";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string up(name);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  std::replace(up.begin(), up.end(), '-', '_');
  if (up == "FEDRECGEL") return Method::fedrecgel;
  if (up == "BASELINE_PLAIN" || up == "BASELINE") return Method::baseline_plain;
  if (up == "ABLATE_NO_NONSHARED") return Method::ablate_no_nonshared;
  if (up == "ABLATE_NO_SHARED") return Method::ablate_no_shared;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

void TrainConfig::validate(std::size_t num_users) const {
  if (num_users == 0) throw ConfigError("dataset has no users");
  if (clients_per_round > num_users) {
    throw ConfigError("clients_per_round (" + std::to_string(clients_per_round) + ") exceeds the " +
                      std::to_string(num_users) + " available clients");
  }
  if (local_epochs == 0) throw ConfigError("local_epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be >= 1");
  if (score_kind == ScoreKind::mlp1 && hidden_units == 0) throw ConfigError("hidden_units must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  sam.validate();
  normreg.validate();
}

MethodSwitches resolve_method(const TrainConfig& cfg) {
  MethodSwitches sw{cfg.sam.effective_rho_co(), cfg.sam.effective_rho_ur(), cfg.normreg.enabled, true};
  switch (cfg.method) {
    case Method::fedrecgel: break;
    case Method::baseline_plain: sw = {0.0, 0.0, false, false}; break;
    case Method::ablate_no_nonshared: sw.rho_ur = 0.0; break;
    case Method::ablate_no_shared: sw.rho_co = 0.0; break;
  }
  return sw;
}

namespace {

bool all_zero(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; });
}

SparseShared empty_shared(const ScoreFn& fn) {
  SparseShared s;
  s.fn = fn;
  s.score.assign(fn.param_count(), 0.0);
  return s;
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  const std::size_t threads = std::min(workers, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

ClientUpdateResult client_update(const GlobalParams& snapshot, ClientState& client, const SplitDataset& ds,
                                 const TrainConfig& cfg, Rng& rng, std::optional<double> shared_sq_norm) {
  const ScoreFn& fn = snapshot.score_fn();
  ClientUpdateResult result{empty_shared(fn), {}};
  if (client.user >= ds.num_users()) throw std::out_of_range("client id not in dataset");
  if (ds.train[client.user].empty()) {
    std::cerr << "warning: client " << client.user << " has no training items; skipped\n";
    result.stats.skipped = true;
    return result;
  }

  const MethodSwitches sw = resolve_method(cfg);
  const std::size_t d = fn.dim;
  const std::size_t t_co = snapshot.flat_size();
  auto& u = client.embedding;
  double loss_sum = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    auto samples = sample_train_negatives(ds, client.user, cfg.negatives_per_positive, rng);
    std::shuffle(samples.begin(), samples.end(), rng);
    const std::span<const Sample> all(samples);

    double reg_sigma = 0.0;
    double reg_n = 0.0;
    if (sw.normreg) {
      reg_n = cfg.normreg.big_n > 0.0 ? cfg.normreg.big_n : static_cast<double>(samples.size());
      SamConfig effective{sw.rho_co, sw.rho_ur, true, true};
      reg_sigma = resolve_sigma(cfg.normreg, effective, reg_n, t_co, d);
      if (!shared_sq_norm) shared_sq_norm = squared_norm(snapshot.flat());
    }

    for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
      const auto batch = all.subspan(start, std::min(cfg.batch_size, samples.size() - start));
      const SparseShared slice = gather(snapshot, batch);

      if (!sw.sam_path) {
        auto g = batch_gradients(slice, u, batch);
        loss_sum += g.loss;
        client.optimizer.step(u, g.user, cfg.lr);
        auto g_shared = batch_gradients(slice, u, batch);
        result.shared_grad.axpy(1.0, g_shared.shared);
        ++result.stats.num_batches;
        continue;
      }

      // Regularizer gradient at theta^k = (theta_co, u) before this batch's update.
      double reg_coef = 0.0;
      if (sw.normreg) {
        reg_coef = norm_reg_coefficient(*shared_sq_norm + squared_norm(u), reg_sigma, reg_n, t_co + d);
      }

      // Private partition: perturb u along its gradient, step with the perturbed gradient.
      auto g = batch_gradients(slice, u, batch);
      loss_sum += g.loss;
      auto eps_ur = worst_case_perturbation(g.user, sw.rho_ur);
      std::vector<double> g_ur =
          all_zero(eps_ur) ? std::move(g.user) : std::move(batch_gradients(slice, add(u, eps_ur), batch).user);
      if (sw.normreg) axpy(reg_coef, u, g_ur);
      client.optimizer.step(u, g_ur, cfg.lr);

      // Shared partition, evaluated with the updated u.
      auto g_after = batch_gradients(slice, u, batch);
      auto eps_co = worst_case_perturbation(g_after.shared, sw.rho_co);
      SparseShared g_co;
      if (eps_co.squared_norm() == 0.0) {
        g_co = std::move(g_after.shared);
      } else {
        SparseShared perturbed = slice;
        perturbed.axpy(1.0, eps_co);
        g_co = std::move(batch_gradients(perturbed, u, batch).shared);
      }
      if (sw.normreg) g_co.axpy(reg_coef, slice);
      result.shared_grad.axpy(1.0, g_co);
      ++result.stats.num_batches;
    }
    result.stats.num_samples += samples.size();
  }

  if (result.stats.num_batches > 0) {
    result.shared_grad.scale(1.0 / static_cast<double>(result.stats.num_batches));
    result.stats.mean_loss = loss_sum / static_cast<double>(result.stats.num_batches);
  }
  return result;
}

std::vector<double> aggregate(std::span<const ClientUpload> uploads, std::size_t num_items) {
  if (uploads.empty()) throw std::invalid_argument("aggregate: no client gradients");
  const ScoreFn& fn = uploads.front().grad.fn;
  const std::size_t d = fn.dim;
  std::vector<std::size_t> order(uploads.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uploads[a].client < uploads[b].client; });

  std::vector<double> sum(num_items * d + fn.param_count(), 0.0);
  const std::size_t score_offset = num_items * d;
  for (auto idx : order) {
    const auto& g = uploads[idx].grad;
    if (g.fn.dim != d || g.score.size() != fn.param_count()) {
      throw std::invalid_argument("aggregate: gradient shapes differ between clients");
    }
    for (std::size_t s = 0; s < g.items.size(); ++s) {
      if (g.items[s] >= num_items) throw std::out_of_range("aggregate: item id out of range");
      double* dst = sum.data() + static_cast<std::size_t>(g.items[s]) * d;
      const double* src = g.rows.data() + s * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (std::size_t j = 0; j < g.score.size(); ++j) sum[score_offset + j] += g.score[j];
  }
  const double n = static_cast<double>(uploads.size());
  for (auto& v : sum) v /= n;
  return sum;
}

TrainState init_train_state(const SplitDataset& ds, const TrainConfig& cfg) {
  const ScoreFn fn = cfg.score_fn();
  Rng init_rng = make_rng(cfg.seed, "init-global");
  TrainState state;
  state.global = init_global(ds.num_items, fn, init_rng);
  state.server_optimizer = Optimizer(cfg.optimizer, state.global.flat_size());
  state.clients.reserve(ds.num_users());
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    Rng rng = make_rng(cfg.seed, "init-client", u);
    state.clients.push_back(init_client(static_cast<UserId>(u), fn.dim, cfg.optimizer, rng));
  }
  return state;
}

std::vector<UserId> sample_clients(std::size_t num_users, const TrainConfig& cfg, std::size_t round) {
  const std::size_t k = cfg.clients_per_round == 0 ? num_users : std::min(cfg.clients_per_round, num_users);
  std::vector<UserId> ids(num_users);
  std::iota(ids.begin(), ids.end(), UserId{0});
  if (k == num_users) return ids;
  Rng rng = make_rng(cfg.seed, "sample-clients", round);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_users - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

TrainResult run_training(const SplitDataset& ds, const TrainConfig& cfg, const TrainHooks& hooks,
                         std::optional<TrainState> initial) {
  cfg.validate(ds.num_users());
  TrainResult out;
  out.state = initial ? std::move(*initial) : init_train_state(ds, cfg);
  auto& state = out.state;
  if (state.clients.size() != ds.num_users() || state.global.num_items() != ds.num_items) {
    throw ConfigError("initial training state does not match the dataset");
  }
  const bool need_norm = resolve_method(cfg).normreg;

  for (std::size_t round = state.completed_rounds + 1; round <= cfg.rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto participants = sample_clients(ds.num_users(), cfg, round);
    const GlobalParams& snapshot = state.global;
    std::optional<double> sq_norm;
    if (need_norm) sq_norm = squared_norm(snapshot.flat());

    std::vector<ClientUpdateResult> results(participants.size());
    parallel_for(participants.size(), cfg.workers, [&](std::size_t i) {
      const UserId k = participants[i];
      Rng rng = make_rng(cfg.seed, "client", round, k);
      results[i] = client_update(snapshot, state.clients[k], ds, cfg, rng, sq_norm);
    });

    std::vector<ClientUpload> uploads;
    uploads.reserve(results.size());
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      uploads.push_back({participants[i], std::move(results[i].shared_grad)});
      if (hooks.on_upload) hooks.on_upload(round, uploads.back());
      if (!results[i].stats.skipped) {
        loss_sum += results[i].stats.mean_loss;
        ++loss_count;
      }
    }
    const auto g = aggregate(uploads, ds.num_items);
    state.server_optimizer.step(state.global.flat(), g, cfg.lr);
    state.completed_rounds = round;

    RoundResult rr;
    rr.round = round;
    rr.aggregated_grad_norm = l2_norm(g);
    rr.mean_client_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    rr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rr.participants = participants;
    if (hooks.on_round) hooks.on_round(rr, state);
    out.rounds.push_back(std::move(rr));
  }
  return out;
}

}  // namespace fedrec
