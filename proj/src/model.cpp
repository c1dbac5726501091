#include "fedrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedrec {

std::string_view to_string(ScoreKind kind) { return kind == ScoreKind::dot ? "dot" : "mlp1"; }

ScoreKind parse_score_kind(std::string_view name) {
  if (name == "dot" || name == "DOT") return ScoreKind::dot;
  if (name == "mlp1" || name == "MLP1" || name == "mlp") return ScoreKind::mlp1;
  throw std::invalid_argument("unknown score function '" + std::string(name) + "'");
}

GlobalParams::GlobalParams(std::size_t num_items, ScoreFn fn)
    : num_items_(num_items), fn_(fn), theta_(num_items * fn.dim + fn.param_count(), 0.0) {}

namespace {

// Offsets into the MLP1 weight block.
struct MlpLayout {
  std::size_t in;  // 2d
  std::size_t hidden;
  std::size_t b1;
  std::size_t w2;
  std::size_t b2;

  explicit MlpLayout(const ScoreFn& fn)
      : in(2 * fn.dim), hidden(fn.hidden), b1(in * hidden), w2(b1 + hidden), b2(w2 + hidden) {}
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

double mlp_logit(const ScoreFn& fn, std::span<const double> w, std::span<const double> user,
                 std::span<const double> item) {
  const MlpLayout L(fn);
  const std::size_t d = fn.dim;
  double s = w[L.b2];
  for (std::size_t h = 0; h < L.hidden; ++h) {
    const double* wr = w.data() + h * L.in;
    double z = w[L.b1 + h];
    for (std::size_t j = 0; j < d; ++j) z += wr[j] * user[j];
    for (std::size_t j = 0; j < d; ++j) z += wr[d + j] * item[j];
    if (z > 0.0) s += w[L.w2 + h] * z;
  }
  return s;
}

double logit(const ScoreFn& fn, std::span<const double> w, std::span<const double> user,
             std::span<const double> item) {
  return fn.kind == ScoreKind::dot ? dot(user, item) : mlp_logit(fn, w, user, item);
}

template <class RowFn>
double mean_loss(const ScoreFn& fn, std::span<const double> w, std::span<const double> user,
                 std::span<const Sample> batch, RowFn&& row) {
  double total = 0.0;
  for (const auto& s : batch) total += bce_with_logits(logit(fn, w, user, row(s.item)), s.label);
  return total / static_cast<double>(batch.size());
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_with_logits(double logit, double label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

std::size_t SparseShared::find(ItemId item) const {
  auto it = std::lower_bound(items.begin(), items.end(), item);
  if (it == items.end() || *it != item) return items.size();
  return static_cast<std::size_t>(it - items.begin());
}

bool SparseShared::same_support(const SparseShared& other) const {
  return items == other.items && score.size() == other.score.size();
}

double SparseShared::squared_norm() const {
  // Item block then score block, matching the dense flat order.
  double s = 0.0;
  for (double v : rows) s += v * v;
  for (double v : score) s += v * v;
  return s;
}

double SparseShared::norm() const { return std::sqrt(squared_norm()); }

void SparseShared::scale(double a) {
  for (auto& v : rows) v *= a;
  for (auto& v : score) v *= a;
}

void SparseShared::axpy(double a, const SparseShared& x) {
  if (score.size() != x.score.size() || fn.dim != x.fn.dim) {
    throw std::invalid_argument("SparseShared::axpy: shape mismatch");
  }
  for (std::size_t j = 0; j < score.size(); ++j) score[j] += a * x.score[j];
  const std::size_t d = fn.dim;
  if (items == x.items) {
    for (std::size_t j = 0; j < rows.size(); ++j) rows[j] += a * x.rows[j];
    return;
  }
  std::vector<ItemId> merged;
  std::vector<double> merged_rows;
  merged.reserve(items.size() + x.items.size());
  merged_rows.reserve((items.size() + x.items.size()) * d);
  std::size_t i = 0;
  std::size_t k = 0;
  while (i < items.size() || k < x.items.size()) {
    const bool take_self = k >= x.items.size() || (i < items.size() && items[i] <= x.items[k]);
    const bool take_other = i >= items.size() || (k < x.items.size() && x.items[k] <= items[i]);
    const ItemId id = take_self ? items[i] : x.items[k];
    merged.push_back(id);
    const std::size_t base = merged_rows.size();
    merged_rows.resize(base + d, 0.0);
    if (take_self) {
      std::copy_n(rows.data() + i * d, d, merged_rows.data() + base);
      ++i;
    }
    if (take_other) {
      for (std::size_t j = 0; j < d; ++j) merged_rows[base + j] += a * x.rows[k * d + j];
      ++k;
    }
  }
  items = std::move(merged);
  rows = std::move(merged_rows);
}

std::vector<double> SparseShared::to_dense(std::size_t num_items) const {
  const std::size_t d = fn.dim;
  std::vector<double> out(num_items * d + score.size(), 0.0);
  for (std::size_t s = 0; s < items.size(); ++s) {
    std::copy_n(rows.data() + s * d, d, out.data() + static_cast<std::size_t>(items[s]) * d);
  }
  std::copy(score.begin(), score.end(), out.begin() + static_cast<std::ptrdiff_t>(num_items * d));
  return out;
}

SparseShared SparseShared::zeros_like(const SparseShared& shape) {
  SparseShared z;
  z.fn = shape.fn;
  z.items = shape.items;
  z.rows.assign(shape.rows.size(), 0.0);
  z.score.assign(shape.score.size(), 0.0);
  return z;
}

SparseShared gather(const GlobalParams& g, std::span<const Sample> batch) {
  SparseShared slice;
  slice.fn = g.score_fn();
  slice.items.reserve(batch.size());
  for (const auto& s : batch) {
    if (s.item >= g.num_items()) throw std::out_of_range("item id out of range");
    slice.items.push_back(s.item);
  }
  std::sort(slice.items.begin(), slice.items.end());
  slice.items.erase(std::unique(slice.items.begin(), slice.items.end()), slice.items.end());
  const std::size_t d = g.dim();
  slice.rows.resize(slice.items.size() * d);
  for (std::size_t s = 0; s < slice.items.size(); ++s) {
    auto row = g.item(slice.items[s]);
    std::copy(row.begin(), row.end(), slice.rows.begin() + static_cast<std::ptrdiff_t>(s * d));
  }
  auto w = g.score_weights();
  slice.score.assign(w.begin(), w.end());
  return slice;
}

GlobalParams init_global(std::size_t num_items, const ScoreFn& fn, Rng& rng) {
  GlobalParams g(num_items, fn);
  const double bound = 0.5 / std::sqrt(static_cast<double>(fn.dim));
  std::uniform_real_distribution<double> emb(-bound, bound);
  for (ItemId i = 0; i < num_items; ++i) {
    for (auto& v : g.item(i)) v = emb(rng);
  }
  if (fn.kind == ScoreKind::mlp1) {
    const MlpLayout L(fn);
    auto w = g.score_weights();
    std::uniform_real_distribution<double> w1(-1.0 / std::sqrt(static_cast<double>(L.in)),
                                              1.0 / std::sqrt(static_cast<double>(L.in)));
    std::uniform_real_distribution<double> w2(-1.0 / std::sqrt(static_cast<double>(L.hidden)),
                                              1.0 / std::sqrt(static_cast<double>(L.hidden)));
    for (std::size_t j = 0; j < L.b1; ++j) w[j] = w1(rng);
    for (std::size_t h = 0; h < L.hidden; ++h) w[L.w2 + h] = w2(rng);
  }
  return g;
}

std::vector<double> init_user_embedding(std::size_t dim, Rng& rng) {
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> emb(-bound, bound);
  std::vector<double> u(dim);
  for (auto& v : u) v = emb(rng);
  return u;
}

ClientState init_client(UserId user, std::size_t dim, OptimizerKind kind, Rng& rng) {
  return ClientState{user, init_user_embedding(dim, rng), Optimizer(kind, dim)};
}

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double l2_norm(std::span<const double> x) { return std::sqrt(squared_norm(x)); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) y[j] += a * x[j];
}

void scale(double a, std::span<double> x) {
  for (auto& v : x) v *= a;
}

std::vector<double> add(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("add: size mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + y[j];
  return out;
}

double score(const GlobalParams& g, std::span<const double> user, ItemId item) {
  return logit(g.score_fn(), g.score_weights(), user, g.item(item));
}

double score(const SparseShared& slice, std::span<const double> user, ItemId item) {
  const auto slot = slice.find(item);
  if (slot == slice.items.size()) throw std::out_of_range("item not in slice");
  return logit(slice.fn, slice.score, user, slice.row(slot));
}

double batch_loss(const GlobalParams& g, std::span<const double> user, std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  return mean_loss(g.score_fn(), g.score_weights(), user, batch, [&g](ItemId i) { return g.item(i); });
}

double batch_loss(const SparseShared& slice, std::span<const double> user, std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  return mean_loss(slice.fn, slice.score, user, batch, [&slice](ItemId i) {
    const auto slot = slice.find(i);
    if (slot == slice.items.size()) throw std::out_of_range("item not in slice");
    return slice.row(slot);
  });
}

Gradients batch_gradients(const SparseShared& slice, std::span<const double> user, std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  const ScoreFn& fn = slice.fn;
  const std::size_t d = fn.dim;
  if (user.size() != d) throw std::invalid_argument("batch_gradients: user dimension mismatch");

  Gradients out;
  out.shared = SparseShared::zeros_like(slice);
  out.user.assign(d, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  const bool mlp = fn.kind == ScoreKind::mlp1;
  const MlpLayout L(fn);
  std::vector<double> z(mlp ? L.hidden : 0);
  double total = 0.0;
  for (const auto& sample : batch) {
    const auto slot = slice.find(sample.item);
    if (slot == slice.items.size()) throw std::out_of_range("batch item not in slice");
    auto v = slice.row(slot);
    auto gv = out.shared.row(slot);

    if (!mlp) {
      const double s = dot(user, v);
      total += bce_with_logits(s, sample.label);
      const double delta = (sigmoid(s) - sample.label) * inv_b;
      for (std::size_t j = 0; j < d; ++j) {
        out.user[j] += delta * v[j];
        gv[j] += delta * user[j];
      }
      continue;
    }

    const auto& w = slice.score;
    auto& gw = out.shared.score;
    double s = w[L.b2];
    for (std::size_t h = 0; h < L.hidden; ++h) {
      const double* wr = w.data() + h * L.in;
      double acc = w[L.b1 + h];
      for (std::size_t j = 0; j < d; ++j) acc += wr[j] * user[j];
      for (std::size_t j = 0; j < d; ++j) acc += wr[d + j] * v[j];
      z[h] = acc;
      if (acc > 0.0) s += w[L.w2 + h] * acc;
    }
    total += bce_with_logits(s, sample.label);
    const double delta = (sigmoid(s) - sample.label) * inv_b;
    gw[L.b2] += delta;
    for (std::size_t h = 0; h < L.hidden; ++h) {
      if (z[h] <= 0.0) continue;
      gw[L.w2 + h] += delta * z[h];
      const double dz = delta * w[L.w2 + h];
      gw[L.b1 + h] += dz;
      const double* wr = w.data() + h * L.in;
      double* gr = gw.data() + h * L.in;
      for (std::size_t j = 0; j < d; ++j) {
        gr[j] += dz * user[j];
        gr[d + j] += dz * v[j];
        out.user[j] += dz * wr[j];
        gv[j] += dz * wr[d + j];
      }
    }
  }
  out.loss = total / static_cast<double>(batch.size());
  return out;
}

Gradients batch_gradients(const GlobalParams& g, std::span<const double> user, std::span<const Sample> batch) {
  return batch_gradients(gather(g, batch), user, batch);
}

}  // namespace fedrec
