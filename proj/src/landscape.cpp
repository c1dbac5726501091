#include "fedrec/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace fedrec {

namespace {

double clamp_loss(double loss) {
  if (!std::isfinite(loss) || loss > kSaturatedLoss) return kSaturatedLoss;
  return loss;
}

std::vector<double> gaussian(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = normal(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

LossProbe make_probe(const SplitDataset& ds, std::size_t num_clients, std::size_t negatives_per_positive,
                     std::uint64_t seed) {
  LossProbe probe;
  std::vector<UserId> ids(ds.num_users());
  std::iota(ids.begin(), ids.end(), UserId{0});
  if (num_clients != 0 && num_clients < ids.size()) {
    Rng rng = make_rng(seed, "probe-clients");
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(num_clients);
    std::sort(ids.begin(), ids.end());
  }
  for (auto u : ids) {
    if (ds.train[u].empty()) continue;
    Rng rng = make_rng(seed, "probe-samples", u);
    probe.clients.push_back(u);
    probe.samples.push_back(sample_train_negatives(ds, u, negatives_per_positive, rng));
  }
  if (probe.clients.empty()) throw std::invalid_argument("loss probe has no clients with training data");
  return probe;
}

double probe_loss(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe) {
  double total = 0.0;
  for (std::size_t j = 0; j < probe.clients.size(); ++j) {
    total += batch_loss(g, clients[probe.clients[j]].embedding, probe.samples[j]);
  }
  return clamp_loss(total / static_cast<double>(probe.clients.size()));
}

std::size_t perturbation_dim(const GlobalParams& g, const LossProbe& probe, PerturbScope scope) {
  return g.flat_size() + (scope == PerturbScope::shared_and_private ? probe.clients.size() * g.dim() : 0);
}

double perturbed_loss(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe,
                      PerturbScope scope, std::span<const double> delta) {
  if (delta.size() != perturbation_dim(g, probe, scope)) {
    throw std::invalid_argument("perturbed_loss: direction has the wrong dimension");
  }
  GlobalParams moved = g;
  auto theta = moved.flat();
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += delta[j];

  const std::size_t d = g.dim();
  double total = 0.0;
  std::vector<double> user(d);
  for (std::size_t j = 0; j < probe.clients.size(); ++j) {
    const auto& base = clients[probe.clients[j]].embedding;
    if (scope == PerturbScope::shared_and_private) {
      const double* off = delta.data() + g.flat_size() + j * d;
      for (std::size_t c = 0; c < d; ++c) user[c] = base[c] + off[c];
      total += batch_loss(moved, user, probe.samples[j]);
    } else {
      total += batch_loss(moved, base, probe.samples[j]);
    }
  }
  return clamp_loss(total / static_cast<double>(probe.clients.size()));
}

Directions sample_directions(std::size_t dim, Rng& rng) {
  if (dim < 2) throw std::invalid_argument("sample_directions: need at least two dimensions");
  Directions out;
  out.first = gaussian(dim, rng);
  scale(1.0 / l2_norm(out.first), out.first);
  while (true) {
    auto v = gaussian(dim, rng);
    const double raw = l2_norm(v);
    for (int pass = 0; pass < 2; ++pass) axpy(-dot(v, out.first), out.first, v);
    const double rest = l2_norm(v);
    if (rest > 1e-12 * raw) {
      scale(1.0 / rest, v);
      out.second = std::move(v);
      return out;
    }
  }
}

std::vector<double> grid_alphas(double extent, std::size_t resolution) {
  if (resolution == 0) throw std::invalid_argument("grid resolution must be positive");
  if (resolution == 1) return {0.0};
  std::vector<double> a(resolution);
  const double step = 2.0 * extent / static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < resolution; ++i) a[i] = -extent + static_cast<double>(i) * step;
  a[resolution - 1] = extent;
  if (resolution % 2 == 1) a[resolution / 2] = 0.0;
  return a;
}

LandscapeGrid evaluate_grid(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe,
                            const GridSpec& spec, Rng& rng) {
  LandscapeGrid grid;
  grid.resolution = spec.resolution;
  grid.alphas = grid_alphas(spec.extent, spec.resolution);
  grid.directions = sample_directions(perturbation_dim(g, probe, spec.scope), rng);
  grid.loss.resize(spec.resolution * spec.resolution);
  const auto& d1 = grid.directions.first;
  const auto& d2 = grid.directions.second;
  std::vector<double> delta(d1.size());
  for (std::size_t i = 0; i < spec.resolution; ++i) {
    for (std::size_t j = 0; j < spec.resolution; ++j) {
      const double a1 = grid.alphas[i];
      const double a2 = grid.alphas[j];
      for (std::size_t c = 0; c < delta.size(); ++c) delta[c] = a1 * d1[c] + a2 * d2[c];
      grid.loss[i * spec.resolution + j] = perturbed_loss(g, clients, probe, spec.scope, delta);
    }
  }
  return grid;
}

MagnitudeSweep magnitude_sweep(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe,
                               std::span<const double> magnitudes, std::size_t num_directions, Rng& rng,
                               PerturbScope scope) {
  if (num_directions == 0) throw std::invalid_argument("magnitude_sweep: need at least one direction");
  MagnitudeSweep sweep;
  sweep.magnitudes.assign(magnitudes.begin(), magnitudes.end());
  sweep.avg_loss.assign(magnitudes.size(), 0.0);
  sweep.num_directions = num_directions;
  sweep.num_clients = probe.clients.size();
  sweep.base_loss = probe_loss(g, clients, probe);

  const std::size_t dim = perturbation_dim(g, probe, scope);
  std::vector<std::vector<double>> losses(magnitudes.size());
  std::vector<double> delta(dim);
  for (std::size_t s = 0; s < num_directions; ++s) {
    auto dir = gaussian(dim, rng);
    scale(1.0 / l2_norm(dir), dir);
    for (std::size_t m = 0; m < magnitudes.size(); ++m) {
      for (std::size_t c = 0; c < dim; ++c) delta[c] = magnitudes[m] * dir[c];
      losses[m].push_back(perturbed_loss(g, clients, probe, scope, delta));
    }
  }
  for (std::size_t m = 0; m < magnitudes.size(); ++m) {
    double total = 0.0;
    bool saturated = false;
    for (double l : losses[m]) {
      saturated |= l >= kSaturatedLoss;
      total += l;
    }
    sweep.avg_loss[m] = saturated ? kSaturatedLoss : clamp_loss(total / static_cast<double>(num_directions));
  }
  return sweep;
}

void write_grid_csv(std::ostream& out, const LandscapeGrid& grid) {
  out << "alpha1,alpha2,loss\n";
  char buf[128];
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.alphas[i], grid.alphas[j], grid.at(i, j));
      out << buf;
    }
  }
}

void write_sweep_csv(std::ostream& out, const MagnitudeSweep& sweep) {
  out << "magnitude,avg_loss,num_directions\n";
  char buf[128];
  for (std::size_t m = 0; m < sweep.magnitudes.size(); ++m) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", sweep.magnitudes[m], sweep.avg_loss[m],
                  sweep.num_directions);
    out << buf;
  }
}

}  // namespace fedrec
