#pragma once

#include <span>
#include <string_view>

#include "protomil/model.hpp"

namespace protomil {

// Named hyperparameter sets. "table1-<dataset>" carry the per-dataset
// learning rates with lambda_p = 4e-3, lambda_d = 1e-2, lambda_w = 3e-4 and
// D = 24; "appendix" uses lambda_p = lambda_w = 0.05, lr_prototypes = 1e-4,
// lr_weights = 5e-5. All run 100 epochs over min, mean and max features.
Hyperparams preset(std::string_view name);
std::span<const std::string_view> preset_names();

inline constexpr std::string_view kDefaultPreset = "table1-musk1";

}  // namespace protomil
