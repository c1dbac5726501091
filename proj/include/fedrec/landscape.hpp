#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/model.hpp"

namespace fedrec {

/// Losses above this (or non-finite) are recorded as this value.
inline constexpr double kSaturatedLoss = 1e30;

enum class PerturbScope { shared, shared_and_private };

/// Frozen per-client training samples (positives plus sampled negatives) used
/// for every landscape evaluation, so all grid cells see the same data.
struct LossProbe {
  std::vector<UserId> clients;
  std::vector<std::vector<Sample>> samples;
};

/// `num_clients` = 0 probes every user; otherwise a seeded uniform sample.
LossProbe make_probe(const SplitDataset& ds, std::size_t num_clients, std::size_t negatives_per_positive,
                     std::uint64_t seed);

/// Mean over probe clients of their full-sample mean loss.
double probe_loss(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe);

/// Parameter-space dimension that directions must have for a scope.
std::size_t perturbation_dim(const GlobalParams& g, const LossProbe& probe, PerturbScope scope);

/// Loss with shared parameters (and optionally probe users' embeddings)
/// shifted by `delta`. Never mutates its inputs.
double perturbed_loss(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe,
                      PerturbScope scope, std::span<const double> delta);

struct Directions {
  std::vector<double> first;
  std::vector<double> second;
};

/// Two standard-Gaussian draws, Gram-Schmidt orthonormalized.
Directions sample_directions(std::size_t dim, Rng& rng);

struct GridSpec {
  double extent = 1.0;          // alphas span [-extent, extent]
  std::size_t resolution = 21;  // odd resolutions include the center cell
  PerturbScope scope = PerturbScope::shared;
};

struct LandscapeGrid {
  Directions directions;
  std::vector<double> alphas;  // shared by both axes
  std::vector<double> loss;    // row-major, loss[i * R + j] at (alphas[i], alphas[j])
  std::size_t resolution = 0;

  double at(std::size_t i, std::size_t j) const { return loss[i * resolution + j]; }
};

std::vector<double> grid_alphas(double extent, std::size_t resolution);

LandscapeGrid evaluate_grid(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe,
                            const GridSpec& spec, Rng& rng);

inline const std::vector<double> kDefaultMagnitudes{10.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4};

struct MagnitudeSweep {
  std::vector<double> magnitudes;
  std::vector<double> avg_loss;
  std::size_t num_directions = 0;
  std::size_t num_clients = 0;
  double base_loss = 0.0;
};

/// For each magnitude, the average over `num_directions` random unit
/// directions of the probe loss at theta + magnitude * direction. The same
/// directions are reused for every magnitude.
MagnitudeSweep magnitude_sweep(const GlobalParams& g, std::span<const ClientState> clients, const LossProbe& probe,
                               std::span<const double> magnitudes, std::size_t num_directions, Rng& rng,
                               PerturbScope scope = PerturbScope::shared);

void write_grid_csv(std::ostream& out, const LandscapeGrid& grid);
void write_sweep_csv(std::ostream& out, const MagnitudeSweep& sweep);

}  // namespace fedrec
