#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "fedrec/model.hpp"

namespace fedrec {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Perturbation radii for the shared (item embeddings + score weights) and the
/// private (user embedding) partitions. A zero radius or a disabled flag turns
/// the corresponding SAM step into the plain gradient.
struct SamConfig {
  double rho_co = 0.05;
  double rho_ur = 0.05;
  bool enable_shared = true;
  bool enable_nonshared = true;

  double effective_rho_co() const { return enable_shared ? rho_co : 0.0; }
  double effective_rho_ur() const { return enable_nonshared ? rho_ur : 0.0; }
  void validate() const;
  bool operator==(const SamConfig&) const = default;
};

enum class SigmaPolicy { fixed, from_rho };

std::string_view to_string(SigmaPolicy p);
SigmaPolicy parse_sigma_policy(std::string_view name);

/// Gaussian-perturbation norm regularizer. Only the term
/// (T/2)(1/sqrt(N)) log(1 + |theta|^2 / (T sigma^2)) depends on theta; the
/// remaining additive constants (confidence and loss-bound terms) drop out of
/// the gradient and are not represented.
struct NormRegConfig {
  bool enabled = false;
  double sigma = 0.1;
  double big_n = 0.0;  // 0: use the client's local sample count
  SigmaPolicy sigma_policy = SigmaPolicy::from_rho;

  void validate() const;
  bool operator==(const NormRegConfig&) const = default;
};

inline constexpr double kDegenerateGradNorm = 1e-12;

/// rho * g / |g|, or zeros when |g| <= 1e-12 or rho == 0.
std::vector<double> worst_case_perturbation(std::span<const double> grad, double rho);
/// Same on the sparse shared space; the perturbation has the gradient's support.
SparseShared worst_case_perturbation(const SparseShared& grad, double rho);

/// Gradient w.r.t. the user embedding at (theta_co, u + eps_ur*).
std::vector<double> sam_grad_nonshared(const SparseShared& slice, std::span<const double> user,
                                       std::span<const Sample> batch, double rho_ur);
std::vector<double> sam_grad_nonshared(const GlobalParams& g, const ClientState& c, std::span<const Sample> batch,
                                       const SamConfig& cfg);

/// Gradient w.r.t. the shared parameters at (theta_co + eps_co*, u). `user`
/// must already reflect the private update of the current batch.
SparseShared sam_grad_shared(const SparseShared& slice, std::span<const double> user,
                             std::span<const Sample> batch, double rho_co);
SparseShared sam_grad_shared(const GlobalParams& g, const ClientState& c, std::span<const Sample> batch,
                             const SamConfig& cfg);

/// Coefficient c with grad f = c * theta: (1/sqrt(N)) / (sigma^2 + |theta|^2 / T).
double norm_reg_coefficient(double squared_norm, double sigma, double big_n, std::size_t t_dim);

/// Gradient of the regularizer's log term at theta; zeros when disabled.
/// Requires cfg.big_n > 0 when enabled.
std::vector<double> norm_reg_gradient(std::span<const double> theta, const NormRegConfig& cfg, std::size_t t_dim);

/// sigma = min over partitions with rho > 0 of
/// rho / sqrt(2 ln sqrt(N) + T + 2 sqrt(T ln sqrt(N))).
double sigma_from_rho(const SamConfig& sam, double big_n, std::size_t t_co, std::size_t t_ur);

/// Sigma actually used: cfg.sigma under FIXED, sigma_from_rho under FROM_RHO.
double resolve_sigma(const NormRegConfig& cfg, const SamConfig& sam, double big_n, std::size_t t_co,
                     std::size_t t_ur);

}  // namespace fedrec
