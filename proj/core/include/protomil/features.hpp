#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protomil/dataset.hpp"
#include "protomil/matrix.hpp"

namespace protomil {

enum class Aggregator : std::uint8_t { kMin = 0, kMean = 1, kMax = 2 };

std::string_view to_string(Aggregator a);

// Nonempty subset of {min, mean, max}, always iterated in that order.
class AggregatorSet {
 public:
  AggregatorSet() = default;  // {min}
  AggregatorSet(std::initializer_list<Aggregator> aggs);

  // Parses "min,mean,max" (any order, no duplicates).
  static AggregatorSet parse(std::string_view text);
  static AggregatorSet all() { return {Aggregator::kMin, Aggregator::kMean, Aggregator::kMax}; }

  bool contains(Aggregator a) const { return (mask_ >> static_cast<int>(a)) & 1u; }
  std::size_t size() const;
  std::vector<Aggregator> list() const;
  // Position of `a` among the active aggregators; `a` must be active.
  std::size_t slot(Aggregator a) const;
  std::string to_string() const;

  bool operator==(const AggregatorSet&) const = default;

 private:
  std::uint8_t mask_ = 1;
};

// Feature vectors are laid out aggregator-major: index = slot(a) * D + d.
inline std::size_t feature_index(const AggregatorSet& aggs, Aggregator a, std::size_t d,
                                 std::size_t prototype_count) {
  return aggs.slot(a) * prototype_count + d;
}

double euclidean(std::span<const double> x, std::span<const double> p);

struct PooledFeatures {
  std::vector<double> phi_raw;            // length D*A, aggregator-major
  std::vector<std::size_t> argmin_index;  // per prototype; empty unless MIN active
  std::vector<std::size_t> argmax_index;  // per prototype; empty unless MAX active
  Matrix distances;                       // K x D instance-to-prototype distances
  // Instances sorted lexicographically by feature values (stable). Every
  // reduction over instances runs in this order, which makes pooling and its
  // gradient independent of the order instances are stored in.
  std::vector<std::size_t> canonical_order;
};

// Lexicographic instance order used by pool_distances.
std::vector<std::size_t> canonical_instance_order(const Matrix& instances);

PooledFeatures pool_distances(const Bag& bag, const Matrix& prototypes,
                              const AggregatorSet& aggs);

inline constexpr double kDefaultNormEps = 1e-5;

struct NormStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  double eps = kDefaultNormEps;
};

struct NormOutput {
  std::vector<double> phi_norm;
  NormStats stats;
};

// phi_norm = (phi_raw - mu) / (sigma + eps) over the whole vector.
NormOutput layer_norm_forward(std::span<const double> phi_raw, double eps = kDefaultNormEps);

// Exact vector-Jacobian product of layer_norm_forward, including the
// dependence of sigma on the input:
//   grad_in = (g - mean(g)) / s - phi_norm * mean(g * phi_norm) / sigma,
// with s = sigma + eps. The second term is dropped when sigma == 0 (then
// phi_norm is identically zero).
std::vector<double> layer_norm_backward(std::span<const double> grad_out,
                                        std::span<const double> phi_norm,
                                        const NormStats& stats);

}  // namespace protomil
