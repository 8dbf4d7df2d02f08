#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "protomil/features.hpp"
#include "protomil/model.hpp"
#include "protomil/optim.hpp"

namespace protomil {

// Text checkpoint. Layout:
//
//   protomil-checkpoint 1
//   D <n>
//   L <n>
//   A <n>
//   aggregators min,mean,max
//   norm_eps <x>
//   prototypes            followed by D lines of L values
//   beta <D*A values>
//   beta0 <x>
//   optimizer 0|1         if 1: three "adam <block> <t>" sections, each
//                         followed by an "m ..." and a "v ..." line
//   end
//
// Reals use 17 significant digits and round-trip exactly.
struct Checkpoint {
  ModelParams params;
  AggregatorSet aggregators;
  double norm_eps = kDefaultNormEps;
  std::optional<OptimizerState> optimizer;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protomil
