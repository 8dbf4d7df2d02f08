#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "protomil/dataset.hpp"
#include "protomil/features.hpp"
#include "protomil/matrix.hpp"

namespace protomil {

enum class InitStrategy { kSampleInstances, kGaussian };

std::string_view to_string(InitStrategy s);
InitStrategy parse_init_strategy(std::string_view text);

// Learnable state: D prototypes of width L, one classifier weight per
// (aggregator, prototype) feature, and an unpenalized bias.
struct ModelParams {
  Matrix prototypes;
  std::vector<double> beta;
  double beta0 = 0.0;

  bool operator==(const ModelParams&) const = default;
};

struct Hyperparams {
  std::size_t prototype_count = 24;
  AggregatorSet aggregators = AggregatorSet::all();
  double lambda_w = 3e-4;  // L1 on beta
  double lambda_p = 4e-3;  // sum of prototype L2 norms
  double lambda_d = 1e-2;  // sum of raw pooled distances
  double norm_eps = kDefaultNormEps;
  double lr_weights = 3e-5;
  double lr_prototypes = 9e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 100;
  InitStrategy init = InitStrategy::kGaussian;

  std::size_t feature_count() const { return prototype_count * aggregators.size(); }
  // Throws UsageError on negative weights/rates, epochs == 0, or fewer than
  // two pooled features (layer normalization needs at least two).
  void validate() const;

  bool operator==(const Hyperparams&) const = default;
};

// Prototype initialization. kSampleInstances draws D distinct training
// instances (with replacement only when fewer than D exist); kGaussian draws
// each entry from N(feature mean, feature std). The instance pool is sorted
// lexicographically first so the draw ignores storage order.
Matrix init_prototypes(const Dataset& data, std::size_t prototype_count, InitStrategy strategy,
                       std::uint64_t seed);

// Zero-initialized classifier around the given prototypes.
ModelParams make_params(Matrix prototypes, const AggregatorSet& aggs);

struct ForwardCache {
  PooledFeatures pooled;
  std::vector<double> phi_norm;
  NormStats stats;
  double logit = 0.0;
  double yhat = 0.5;
  std::uint64_t token = 0;  // fingerprint of the (bag, params) pair
};

struct ForwardResult {
  double yhat = 0.5;
  ForwardCache cache;
};

// Numerically stable logistic function.
double sigmoid(double z);

ForwardResult forward(const Bag& bag, const ModelParams& params, const Hyperparams& hyper);

// Per-bag objective, split into its four terms.
struct ObjectiveTerms {
  double cross_entropy = 0.0;
  double weight_penalty = 0.0;     // lambda_w * sum |beta_j|
  double prototype_penalty = 0.0;  // lambda_p * sum_d ||P_d||
  double distance_penalty = 0.0;   // lambda_d * sum_j phi_raw_j
  double total() const {
    return cross_entropy + weight_penalty + prototype_penalty + distance_penalty;
  }
};

ObjectiveTerms objective_terms(const Bag& bag, int label, const ModelParams& params,
                               const Hyperparams& hyper);
double bag_objective(const Bag& bag, int label, const ModelParams& params,
                     const Hyperparams& hyper);
// Same value from an existing forward pass.
ObjectiveTerms objective_terms(const ForwardCache& cache, int label, const ModelParams& params,
                               const Hyperparams& hyper);

struct Gradients {
  Matrix d_prototypes;
  std::vector<double> d_beta;
  double d_beta0 = 0.0;
};

// Lower bound on distances and norms in gradient denominators.
inline constexpr double kGradientFloor = 1e-12;

// Exact (sub)gradient of bag_objective at the cached forward pass. Throws
// std::logic_error if the cache was produced for another (bag, params) pair.
Gradients backward(const Bag& bag, int label, const ModelParams& params,
                   const Hyperparams& hyper, const ForwardCache& cache);

struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t near_tie = 0;  // coordinates skipped next to a min/max switch or kink
  std::size_t failures = 0;
};

struct GradCheckReport {
  std::array<GradCheckBlock, 3> blocks;  // prototypes, beta, beta0
  double tol = 0.0;
  bool passed() const;
};

// Relative error used by grad_check: |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-6;
double gradient_relative_error(double analytic, double numeric);

// Compares backward() with central differences of bag_objective. Rows of the
// prototype block are skipped when a perturbation of 10*h could change which
// instance attains a min/max, or could cross a distance or norm kink; beta
// coordinates within 10*h of zero are skipped when lambda_w > 0.
GradCheckReport grad_check(const ModelParams& params, const Bag& bag, int label,
                           const Hyperparams& hyper, double h, double tol);

}  // namespace protomil
