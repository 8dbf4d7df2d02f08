#include "protomil/presets.hpp"

#include <array>
#include <string>

#include "protomil/error.hpp"

namespace protomil {

namespace {

constexpr std::array<std::string_view, 6> kNames = {
    "table1-musk1", "table1-musk2", "table1-fox", "table1-tiger", "table1-elephant", "appendix"};

Hyperparams table1(double lr_weights, double lr_prototypes) {
  Hyperparams h;
  h.prototype_count = 24;
  h.lambda_p = 4e-3;
  h.lambda_d = 1e-2;
  h.lambda_w = 3e-4;
  h.lr_weights = lr_weights;
  h.lr_prototypes = lr_prototypes;
  h.epochs = 100;
  return h;
}

}  // namespace

Hyperparams preset(std::string_view name) {
  if (name == "table1-musk1") return table1(3e-5, 9e-5);
  if (name == "table1-musk2") return table1(4e-5, 8e-5);
  if (name == "table1-fox") return table1(3e-5, 5e-5);
  if (name == "table1-tiger") return table1(1e-4, 3e-5);
  if (name == "table1-elephant") return table1(3e-5, 9e-5);
  if (name == "appendix") {
    Hyperparams h = table1(5e-5, 1e-4);
    h.lambda_p = 0.05;
    h.lambda_w = 0.05;
    return h;
  }
  throw UsageError("unknown preset '" + std::string(name) + "'");
}

std::span<const std::string_view> preset_names() { return kNames; }

}  // namespace protomil
