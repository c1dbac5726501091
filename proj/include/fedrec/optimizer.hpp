#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fedrec {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

/// First-order optimizer owning the state for exactly one parameter vector.
/// SGD: theta -= lr * g. ADAM: bias-corrected moments, beta1 0.9, beta2 0.999,
/// eps 1e-8.
class Optimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  Optimizer() = default;
  Optimizer(OptimizerKind kind, std::size_t dim);

  void step(std::span<double> params, std::span<const double> grad, double lr);

  OptimizerKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

  /// Rebuilds an optimizer from serialized state.
  static Optimizer restore(OptimizerKind kind, std::size_t dim, std::uint64_t steps, std::vector<double> m,
                           std::vector<double> v);

  bool operator==(const Optimizer&) const = default;

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  std::size_t dim_ = 0;
  std::uint64_t steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace fedrec
