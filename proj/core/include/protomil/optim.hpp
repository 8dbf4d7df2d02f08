#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace protomil {

// Hyperparameters of one Adam parameter group.
struct GroupConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Moment accumulators for one parameter block.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  bool operator==(const AdamState&) const = default;
};

// Optimizer state of the model: prototypes advance with their own group
// config; beta and beta0 share the weights group.
struct OptimizerState {
  AdamState prototypes;
  AdamState beta;
  AdamState beta0;

  bool operator==(const OptimizerState&) const = default;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One bias-corrected Adam update of `block` in place. Throws
// NonFiniteGradient (leaving block and state untouched) if any gradient entry
// is NaN or infinite, and std::invalid_argument on shape mismatch.
void adam_step(std::span<double> block, std::span<const double> grad, AdamState& state,
               const GroupConfig& cfg);

}  // namespace protomil
