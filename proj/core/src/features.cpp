#include "protomil/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "protomil/error.hpp"

namespace protomil {

std::string_view to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kMin: return "min";
    case Aggregator::kMean: return "mean";
    case Aggregator::kMax: return "max";
  }
  return "?";
}

AggregatorSet::AggregatorSet(std::initializer_list<Aggregator> aggs) : mask_(0) {
  for (Aggregator a : aggs) {
    const auto bit = static_cast<std::uint8_t>(1u << static_cast<int>(a));
    if (mask_ & bit) throw UsageError("duplicate aggregator " + std::string(protomil::to_string(a)));
    mask_ |= bit;
  }
  if (mask_ == 0) throw UsageError("aggregator set must be nonempty");
}

AggregatorSet AggregatorSet::parse(std::string_view text) {
  AggregatorSet out;
  out.mask_ = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view name = text.substr(start, end - start);
    Aggregator a;
    if (name == "min") a = Aggregator::kMin;
    else if (name == "mean") a = Aggregator::kMean;
    else if (name == "max") a = Aggregator::kMax;
    else throw UsageError("unknown aggregator '" + std::string(name) + "'");
    const auto bit = static_cast<std::uint8_t>(1u << static_cast<int>(a));
    if (out.mask_ & bit) throw UsageError("duplicate aggregator '" + std::string(name) + "'");
    out.mask_ |= bit;
    start = end + 1;
  }
  return out;
}

std::size_t AggregatorSet::size() const { return static_cast<std::size_t>(std::popcount(mask_)); }

std::vector<Aggregator> AggregatorSet::list() const {
  std::vector<Aggregator> out;
  for (Aggregator a : {Aggregator::kMin, Aggregator::kMean, Aggregator::kMax}) {
    if (contains(a)) out.push_back(a);
  }
  return out;
}

std::size_t AggregatorSet::slot(Aggregator a) const {
  const auto below = static_cast<std::uint8_t>((1u << static_cast<int>(a)) - 1u);
  return static_cast<std::size_t>(std::popcount(static_cast<std::uint8_t>(mask_ & below)));
}

std::string AggregatorSet::to_string() const {
  std::string out;
  for (Aggregator a : list()) {
    if (!out.empty()) out += ',';
    out += protomil::to_string(a);
  }
  return out;
}

double euclidean(std::span<const double> x, std::span<const double> p) {
  if (x.size() != p.size()) throw std::invalid_argument("euclidean: length mismatch");
  double sum = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    const double diff = x[l] - p[l];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

std::vector<std::size_t> canonical_instance_order(const Matrix& instances) {
  std::vector<std::size_t> order(instances.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = instances.row(a);
    auto rb = instances.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return order;
}

PooledFeatures pool_distances(const Bag& bag, const Matrix& prototypes,
                              const AggregatorSet& aggs) {
  const std::size_t K = bag.size();
  const std::size_t D = prototypes.rows();
  if (K == 0) throw std::invalid_argument("pool_distances: empty bag");
  if (prototypes.cols() != bag.instances.cols()) {
    throw std::invalid_argument("pool_distances: prototype width does not match instance width");
  }

  PooledFeatures out;
  out.distances = Matrix(K, D);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t d = 0; d < D; ++d) {
      out.distances(k, d) = euclidean(bag.instance(k), prototypes.row(d));
    }
  }
  out.canonical_order = canonical_instance_order(bag.instances);
  const auto& order = out.canonical_order;

  out.phi_raw.assign(aggs.size() * D, 0.0);
  const bool has_min = aggs.contains(Aggregator::kMin);
  const bool has_max = aggs.contains(Aggregator::kMax);
  if (has_min) out.argmin_index.resize(D);
  if (has_max) out.argmax_index.resize(D);

  for (std::size_t d = 0; d < D; ++d) {
    // Strict comparisons keep the canonically-first instance on ties.
    std::size_t lo = order[0];
    std::size_t hi = order[0];
    double sum = 0.0;
    for (std::size_t k : order) {
      const double dist = out.distances(k, d);
      if (dist < out.distances(lo, d)) lo = k;
      if (dist > out.distances(hi, d)) hi = k;
      sum += dist;
    }
    const double lo_value = out.distances(lo, d);
    const double hi_value = out.distances(hi, d);
    if (has_min) {
      out.argmin_index[d] = lo;
      out.phi_raw[feature_index(aggs, Aggregator::kMin, d, D)] = lo_value;
    }
    if (aggs.contains(Aggregator::kMean)) {
      // Rounding can push the mean a ulp outside [min, max].
      const double mean = std::clamp(sum / static_cast<double>(K), lo_value, hi_value);
      out.phi_raw[feature_index(aggs, Aggregator::kMean, d, D)] = mean;
    }
    if (has_max) {
      out.argmax_index[d] = hi;
      out.phi_raw[feature_index(aggs, Aggregator::kMax, d, D)] = hi_value;
    }
  }
  return out;
}

NormOutput layer_norm_forward(std::span<const double> phi_raw, double eps) {
  if (phi_raw.size() < 2) throw std::invalid_argument("layer_norm_forward: need at least 2 features");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm_forward: eps must be positive");
  const double n = static_cast<double>(phi_raw.size());
  double mu = 0.0;
  for (double v : phi_raw) mu += v;
  mu /= n;
  // Corrected two-pass centering: the rounding error of mu is shared by every
  // centered value and would otherwise be amplified by 1/sigma when the
  // features sit far from zero with a small spread.
  double residual = 0.0;
  for (double v : phi_raw) residual += v - mu;
  residual /= n;
  double var = 0.0;
  for (double v : phi_raw) {
    const double c = (v - mu) - residual;
    var += c * c;
  }
  var /= n;

  NormOutput out;
  out.stats = NormStats{mu + residual, std::sqrt(var), eps};
  const double scale = out.stats.sigma + eps;
  out.phi_norm.resize(phi_raw.size());
  for (std::size_t j = 0; j < phi_raw.size(); ++j) {
    out.phi_norm[j] = ((phi_raw[j] - mu) - residual) / scale;
  }
  return out;
}

std::vector<double> layer_norm_backward(std::span<const double> grad_out,
                                        std::span<const double> phi_norm,
                                        const NormStats& stats) {
  if (grad_out.size() != phi_norm.size()) {
    throw std::invalid_argument("layer_norm_backward: length mismatch");
  }
  const double n = static_cast<double>(grad_out.size());
  const double s = stats.sigma + stats.eps;
  double g_mean = 0.0;
  double gy_mean = 0.0;
  for (std::size_t j = 0; j < grad_out.size(); ++j) {
    g_mean += grad_out[j];
    gy_mean += grad_out[j] * phi_norm[j];
  }
  g_mean /= n;
  gy_mean /= n;
  const double proj = stats.sigma > 0.0 ? gy_mean / stats.sigma : 0.0;

  std::vector<double> grad_in(grad_out.size());
  for (std::size_t j = 0; j < grad_out.size(); ++j) {
    grad_in[j] = (grad_out[j] - g_mean) / s - phi_norm[j] * proj;
  }
  return grad_in;
}

}  // namespace protomil
