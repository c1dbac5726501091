#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/optimizer.hpp"
#include "fedrec/random.hpp"

namespace fedrec {

enum class ScoreKind { dot, mlp1 };

std::string_view to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view name);

/// Score function over [user ; item]. DOT has no parameters. MLP1 is one ReLU
/// hidden layer; its flat weight layout is W1 (hidden x 2d, row-major), b1,
/// w2 (hidden), b2.
struct ScoreFn {
  ScoreKind kind = ScoreKind::dot;
  std::size_t dim = 32;
  std::size_t hidden = 16;

  std::size_t param_count() const {
    return kind == ScoreKind::dot ? 0 : 2 * dim * hidden + hidden + hidden + 1;
  }
  bool operator==(const ScoreFn&) const = default;
};

/// Shared parameters: item embeddings followed by score weights in one flat
/// vector of length num_items * dim + score_fn.param_count().
class GlobalParams {
 public:
  GlobalParams() = default;
  GlobalParams(std::size_t num_items, ScoreFn fn);

  std::size_t num_items() const { return num_items_; }
  std::size_t dim() const { return fn_.dim; }
  const ScoreFn& score_fn() const { return fn_; }

  std::span<double> item(ItemId i) { return {theta_.data() + i * fn_.dim, fn_.dim}; }
  std::span<const double> item(ItemId i) const { return {theta_.data() + i * fn_.dim, fn_.dim}; }
  std::span<double> score_weights() { return std::span<double>(theta_).subspan(num_items_ * fn_.dim); }
  std::span<const double> score_weights() const {
    return std::span<const double>(theta_).subspan(num_items_ * fn_.dim);
  }
  std::span<double> flat() { return theta_; }
  std::span<const double> flat() const { return theta_; }
  std::size_t flat_size() const { return theta_.size(); }

  bool operator==(const GlobalParams&) const = default;

 private:
  std::size_t num_items_ = 0;
  ScoreFn fn_;
  std::vector<double> theta_;
};

/// Sparse vector over the shared parameter space: a sorted set of item rows
/// plus the (always dense) score-weight block. Used both for gradients and for
/// the client-local copy of the touched slice of GlobalParams.
struct SparseShared {
  ScoreFn fn;
  std::vector<ItemId> items;  // sorted, unique
  std::vector<double> rows;   // items.size() * dim
  std::vector<double> score;  // fn.param_count()

  std::size_t dim() const { return fn.dim; }
  std::span<double> row(std::size_t slot) { return {rows.data() + slot * fn.dim, fn.dim}; }
  std::span<const double> row(std::size_t slot) const { return {rows.data() + slot * fn.dim, fn.dim}; }
  /// Slot of `item` in `items`, or items.size() when absent.
  std::size_t find(ItemId item) const;
  bool same_support(const SparseShared& other) const;

  double squared_norm() const;
  double norm() const;
  void scale(double a);
  /// this += a * x, growing the support to the union of both supports.
  void axpy(double a, const SparseShared& x);
  /// Dense flat vector of length num_items * dim + score.size().
  std::vector<double> to_dense(std::size_t num_items) const;

  static SparseShared zeros_like(const SparseShared& shape);
};

/// The touched slice of the shared parameters for a batch: item rows for every
/// item in the batch plus all score weights.
SparseShared gather(const GlobalParams& g, std::span<const Sample> batch);

/// Embedding initialization, uniform(-0.5/sqrt(d), 0.5/sqrt(d)); MLP weights
/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with zero biases.
GlobalParams init_global(std::size_t num_items, const ScoreFn& fn, Rng& rng);
std::vector<double> init_user_embedding(std::size_t dim, Rng& rng);

/// One client's private state. Never leaves the client.
struct ClientState {
  UserId user = 0;
  std::vector<double> embedding;
  Optimizer optimizer;

  bool operator==(const ClientState&) const = default;
};

ClientState init_client(UserId user, std::size_t dim, OptimizerKind kind, Rng& rng);

// Flat vector algebra.
double l2_norm(std::span<const double> x);
double squared_norm(std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);
void scale(double a, std::span<double> x);
std::vector<double> add(std::span<const double> x, std::span<const double> y);

/// Numerically stable binary cross-entropy with logits.
double bce_with_logits(double logit, double label);
double sigmoid(double x);

double score(const GlobalParams& g, std::span<const double> user, ItemId item);
double score(const SparseShared& slice, std::span<const double> user, ItemId item);
inline double score(const GlobalParams& g, const ClientState& c, ItemId item) { return score(g, c.embedding, item); }

double batch_loss(const GlobalParams& g, std::span<const double> user, std::span<const Sample> batch);
double batch_loss(const SparseShared& slice, std::span<const double> user, std::span<const Sample> batch);
inline double batch_loss(const GlobalParams& g, const ClientState& c, std::span<const Sample> batch) {
  return batch_loss(g, c.embedding, batch);
}

struct Gradients {
  double loss = 0.0;
  SparseShared shared;       // on the batch's touched support
  std::vector<double> user;  // length d
};

Gradients batch_gradients(const GlobalParams& g, std::span<const double> user, std::span<const Sample> batch);
inline Gradients batch_gradients(const GlobalParams& g, const ClientState& c, std::span<const Sample> batch) {
  return batch_gradients(g, c.embedding, batch);
}
/// Gradients evaluated on a gathered slice; the slice must contain every batch item.
/// The returned shared gradient has exactly the slice's support.
Gradients batch_gradients(const SparseShared& slice, std::span<const double> user, std::span<const Sample> batch);

}  // namespace fedrec
