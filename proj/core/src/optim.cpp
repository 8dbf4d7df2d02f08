#include "protomil/optim.hpp"

#include <cmath>
#include <string>

#include "protomil/error.hpp"

namespace protomil {

void GroupConfig::validate() const {
  if (!(lr >= 0.0)) throw UsageError("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw UsageError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw UsageError("Adam eps must be positive");
}

void adam_step(std::span<double> block, std::span<const double> grad, AdamState& state,
               const GroupConfig& cfg) {
  if (grad.size() != block.size() || state.m.size() != block.size() ||
      state.v.size() != block.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NonFiniteGradient("non-finite gradient at index " + std::to_string(i));
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < block.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    block[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace protomil
