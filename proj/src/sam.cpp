#include "fedrec/sam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fedrec {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd" || name == "SGD") return OptimizerKind::sgd;
  if (name == "adam" || name == "ADAM") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
  if (kind_ == OptimizerKind::adam) {
    m_.assign(dim, 0.0);
    v_.assign(dim, 0.0);
  }
}

Optimizer Optimizer::restore(OptimizerKind kind, std::size_t dim, std::uint64_t steps, std::vector<double> m,
                             std::vector<double> v) {
  Optimizer opt(kind, dim);
  if (kind == OptimizerKind::adam && (m.size() != dim || v.size() != dim)) {
    throw std::invalid_argument("optimizer moments do not match parameter dimension");
  }
  opt.steps_ = steps;
  if (kind == OptimizerKind::adam) {
    opt.m_ = std::move(m);
    opt.v_ = std::move(v);
  }
  return opt;
}

void Optimizer::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != dim_ || grad.size() != dim_) {
    throw std::invalid_argument("Optimizer::step: dimension mismatch");
  }
  ++steps_;
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t j = 0; j < dim_; ++j) params[j] -= lr * grad[j];
    return;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t j = 0; j < dim_; ++j) {
    m_[j] = kBeta1 * m_[j] + (1.0 - kBeta1) * grad[j];
    v_[j] = kBeta2 * v_[j] + (1.0 - kBeta2) * grad[j] * grad[j];
    const double m_hat = m_[j] / c1;
    const double v_hat = v_[j] / c2;
    params[j] -= lr * m_hat / (std::sqrt(v_hat) + kEpsilon);
  }
}

void SamConfig::validate() const {
  if (!(rho_co >= 0.0) || !std::isfinite(rho_co)) throw ConfigError("sam.rho_co must be a finite value >= 0");
  if (!(rho_ur >= 0.0) || !std::isfinite(rho_ur)) throw ConfigError("sam.rho_ur must be a finite value >= 0");
}

std::string_view to_string(SigmaPolicy p) { return p == SigmaPolicy::fixed ? "fixed" : "from_rho"; }

SigmaPolicy parse_sigma_policy(std::string_view name) {
  if (name == "fixed" || name == "FIXED") return SigmaPolicy::fixed;
  if (name == "from_rho" || name == "FROM_RHO") return SigmaPolicy::from_rho;
  throw ConfigError("unknown sigma policy '" + std::string(name) + "'");
}

void NormRegConfig::validate() const {
  if (!enabled) return;
  if (sigma_policy == SigmaPolicy::fixed && !(sigma > 0.0)) {
    throw ConfigError("normreg.sigma must be > 0 when the regularizer is enabled");
  }
  if (!(big_n >= 0.0)) throw ConfigError("normreg.big_n must be >= 0");
}

std::vector<double> worst_case_perturbation(std::span<const double> grad, double rho) {
  std::vector<double> eps(grad.size(), 0.0);
  if (rho == 0.0) return eps;
  const double norm = l2_norm(grad);
  if (!(norm > kDegenerateGradNorm)) return eps;
  const double s = rho / norm;
  for (std::size_t j = 0; j < grad.size(); ++j) eps[j] = s * grad[j];
  return eps;
}

SparseShared worst_case_perturbation(const SparseShared& grad, double rho) {
  SparseShared eps = SparseShared::zeros_like(grad);
  if (rho == 0.0) return eps;
  const double norm = grad.norm();
  if (!(norm > kDegenerateGradNorm)) return eps;
  const double s = rho / norm;
  for (std::size_t j = 0; j < grad.rows.size(); ++j) eps.rows[j] = s * grad.rows[j];
  for (std::size_t j = 0; j < grad.score.size(); ++j) eps.score[j] = s * grad.score[j];
  return eps;
}

std::vector<double> sam_grad_nonshared(const SparseShared& slice, std::span<const double> user,
                                       std::span<const Sample> batch, double rho_ur) {
  auto plain = batch_gradients(slice, user, batch);
  auto eps = worst_case_perturbation(plain.user, rho_ur);
  if (l2_norm(eps) == 0.0) return std::move(plain.user);
  auto perturbed = add(user, eps);
  return std::move(batch_gradients(slice, perturbed, batch).user);
}

std::vector<double> sam_grad_nonshared(const GlobalParams& g, const ClientState& c, std::span<const Sample> batch,
                                       const SamConfig& cfg) {
  return sam_grad_nonshared(gather(g, batch), c.embedding, batch, cfg.effective_rho_ur());
}

SparseShared sam_grad_shared(const SparseShared& slice, std::span<const double> user,
                             std::span<const Sample> batch, double rho_co) {
  auto plain = batch_gradients(slice, user, batch);
  auto eps = worst_case_perturbation(plain.shared, rho_co);
  if (eps.squared_norm() == 0.0) return std::move(plain.shared);
  SparseShared perturbed = slice;
  perturbed.axpy(1.0, eps);
  return std::move(batch_gradients(perturbed, user, batch).shared);
}

SparseShared sam_grad_shared(const GlobalParams& g, const ClientState& c, std::span<const Sample> batch,
                             const SamConfig& cfg) {
  return sam_grad_shared(gather(g, batch), c.embedding, batch, cfg.effective_rho_co());
}

double norm_reg_coefficient(double squared_norm, double sigma, double big_n, std::size_t t_dim) {
  return (1.0 / std::sqrt(big_n)) / (sigma * sigma + squared_norm / static_cast<double>(t_dim));
}

std::vector<double> norm_reg_gradient(std::span<const double> theta, const NormRegConfig& cfg, std::size_t t_dim) {
  std::vector<double> out(theta.size(), 0.0);
  if (!cfg.enabled) return out;
  cfg.validate();
  if (!(cfg.big_n > 0.0)) throw ConfigError("normreg.big_n must be > 0 to evaluate the gradient directly");
  if (t_dim == 0) throw ConfigError("regularizer parameter count must be positive");
  const double c = norm_reg_coefficient(squared_norm(theta), cfg.sigma, cfg.big_n, t_dim);
  for (std::size_t j = 0; j < theta.size(); ++j) out[j] = c * theta[j];
  return out;
}

double sigma_from_rho(const SamConfig& sam, double big_n, std::size_t t_co, std::size_t t_ur) {
  const double log_sqrt_n = std::log(std::sqrt(std::max(big_n, 1.0)));
  auto bound = [log_sqrt_n](double rho, std::size_t t) {
    const double td = static_cast<double>(t);
    return rho / std::sqrt(2.0 * log_sqrt_n + td + 2.0 * std::sqrt(td * log_sqrt_n));
  };
  double sigma = std::numeric_limits<double>::infinity();
  if (sam.effective_rho_co() > 0.0) sigma = std::min(sigma, bound(sam.effective_rho_co(), t_co));
  if (sam.effective_rho_ur() > 0.0) sigma = std::min(sigma, bound(sam.effective_rho_ur(), t_ur));
  if (!std::isfinite(sigma)) {
    throw ConfigError("normreg.sigma_policy=from_rho needs at least one positive perturbation radius");
  }
  return sigma;
}

double resolve_sigma(const NormRegConfig& cfg, const SamConfig& sam, double big_n, std::size_t t_co,
                     std::size_t t_ur) {
  if (cfg.sigma_policy == SigmaPolicy::fixed) return cfg.sigma;
  return sigma_from_rho(sam, big_n, t_co, t_ur);
}

}  // namespace fedrec
