#include "protomil/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "protomil/error.hpp"
#include "protomil/rng.hpp"

namespace protomil {

std::string_view to_string(InitStrategy s) {
  return s == InitStrategy::kGaussian ? "gaussian" : "sample-instances";
}

InitStrategy parse_init_strategy(std::string_view text) {
  if (text == "sample-instances") return InitStrategy::kSampleInstances;
  if (text == "gaussian") return InitStrategy::kGaussian;
  throw UsageError("unknown init strategy '" + std::string(text) + "'");
}

void Hyperparams::validate() const {
  if (prototype_count < 1) throw UsageError("prototype count must be at least 1");
  if (feature_count() < 2) {
    throw UsageError("need at least two pooled features (prototypes x aggregators)");
  }
  for (double v : {lambda_w, lambda_p, lambda_d}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("regularization weights must be >= 0");
  }
  for (double v : {lr_weights, lr_prototypes}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("learning rates must be >= 0");
  }
  if (!(norm_eps > 0.0)) throw UsageError("normalization eps must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw UsageError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw UsageError("Adam eps must be positive");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
}

Matrix init_prototypes(const Dataset& data, std::size_t prototype_count, InitStrategy strategy,
                       std::uint64_t seed) {
  if (prototype_count < 1) throw UsageError("prototype count must be at least 1");
  if (data.empty()) throw DataError("cannot initialize prototypes from an empty dataset");
  const std::size_t width = data.feature_count();
  Rng rng(seed);
  Matrix out(prototype_count, width);

  if (strategy == InitStrategy::kGaussian) {
    std::vector<double> mean;
    std::vector<double> stddev;
    feature_moments(data, mean, stddev);
    for (std::size_t d = 0; d < prototype_count; ++d) {
      for (std::size_t j = 0; j < width; ++j) {
        out(d, j) = stddev[j] > 0.0 ? std::normal_distribution<double>(mean[j], stddev[j])(rng)
                                    : mean[j];
      }
    }
    return out;
  }

  Matrix pool(0, width);
  for (const Bag& bag : data.bags()) {
    for (std::size_t k = 0; k < bag.size(); ++k) pool.append_row(bag.instance(k));
  }
  const std::vector<std::size_t> sorted = canonical_instance_order(pool);
  const std::size_t n = sorted.size();
  if (n >= prototype_count) {
    std::vector<std::size_t> pick(n);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    for (std::size_t d = 0; d < prototype_count; ++d) {
      std::uniform_int_distribution<std::size_t> u(d, n - 1);
      std::swap(pick[d], pick[u(rng)]);
      std::ranges::copy(pool.row(sorted[pick[d]]), out.row(d).begin());
    }
  } else {
    std::uniform_int_distribution<std::size_t> u(0, n - 1);
    for (std::size_t d = 0; d < prototype_count; ++d) {
      std::ranges::copy(pool.row(sorted[u(rng)]), out.row(d).begin());
    }
  }
  return out;
}

ModelParams make_params(Matrix prototypes, const AggregatorSet& aggs) {
  ModelParams p;
  p.beta.assign(prototypes.rows() * aggs.size(), 0.0);
  p.prototypes = std::move(prototypes);
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

std::uint64_t fingerprint(const Bag& bag, const ModelParams& params) {
  std::uint64_t h = mix64(bag.size()) ^ mix64(std::hash<std::string>{}(bag.id));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(bag.instances.values().data()));
  auto absorb = [&h](double v) { h = mix64(h ^ std::bit_cast<std::uint64_t>(v)); };
  for (double v : params.prototypes.values()) absorb(v);
  for (double v : params.beta) absorb(v);
  absorb(params.beta0);
  return h;
}

void check_shapes(const Bag& bag, const ModelParams& params, const Hyperparams& hyper) {
  if (params.prototypes.cols() != bag.instances.cols()) {
    throw std::invalid_argument("feature width mismatch between bag and prototypes");
  }
  if (params.prototypes.rows() * hyper.aggregators.size() != params.beta.size()) {
    throw std::invalid_argument("classifier weight count does not match prototypes x aggregators");
  }
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

}  // namespace

ForwardResult forward(const Bag& bag, const ModelParams& params, const Hyperparams& hyper) {
  check_shapes(bag, params, hyper);
  ForwardResult r;
  ForwardCache& c = r.cache;
  c.pooled = pool_distances(bag, params.prototypes, hyper.aggregators);
  NormOutput norm = layer_norm_forward(c.pooled.phi_raw, hyper.norm_eps);
  c.phi_norm = std::move(norm.phi_norm);
  c.stats = norm.stats;
  double z = params.beta0;
  for (std::size_t j = 0; j < c.phi_norm.size(); ++j) z += params.beta[j] * c.phi_norm[j];
  c.logit = z;
  c.yhat = sigmoid(z);
  c.token = fingerprint(bag, params);
  r.yhat = c.yhat;
  return r;
}

ObjectiveTerms objective_terms(const ForwardCache& cache, int label, const ModelParams& params,
                               const Hyperparams& hyper) {
  ObjectiveTerms t;
  // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
  t.cross_entropy = softplus(cache.logit) - static_cast<double>(label) * cache.logit;
  double l1 = 0.0;
  for (double b : params.beta) l1 += std::abs(b);
  t.weight_penalty = hyper.lambda_w * l1;
  double norms = 0.0;
  for (std::size_t d = 0; d < params.prototypes.rows(); ++d) {
    norms += row_norm(params.prototypes.row(d));
  }
  t.prototype_penalty = hyper.lambda_p * norms;
  double dist = 0.0;
  for (double v : cache.pooled.phi_raw) dist += v;
  t.distance_penalty = hyper.lambda_d * dist;
  return t;
}

ObjectiveTerms objective_terms(const Bag& bag, int label, const ModelParams& params,
                               const Hyperparams& hyper) {
  return objective_terms(forward(bag, params, hyper).cache, label, params, hyper);
}

double bag_objective(const Bag& bag, int label, const ModelParams& params,
                     const Hyperparams& hyper) {
  return objective_terms(bag, label, params, hyper).total();
}

Gradients backward(const Bag& bag, int label, const ModelParams& params,
                   const Hyperparams& hyper, const ForwardCache& cache) {
  check_shapes(bag, params, hyper);
  const std::size_t D = params.prototypes.rows();
  const std::size_t L = params.prototypes.cols();
  const std::size_t K = bag.size();
  if (cache.phi_norm.size() != params.beta.size() || cache.pooled.distances.rows() != K ||
      cache.token != fingerprint(bag, params)) {
    throw std::logic_error("stale forward cache");
  }

  Gradients g;
  const double residual = cache.yhat - static_cast<double>(label);
  g.d_beta0 = residual;
  g.d_beta.resize(params.beta.size());
  std::vector<double> grad_norm(params.beta.size());
  for (std::size_t j = 0; j < params.beta.size(); ++j) {
    g.d_beta[j] = residual * cache.phi_norm[j] + hyper.lambda_w * sign(params.beta[j]);
    grad_norm[j] = residual * params.beta[j];
  }

  std::vector<double> grad_raw = layer_norm_backward(grad_norm, cache.phi_norm, cache.stats);
  for (double& v : grad_raw) v += hyper.lambda_d;

  const AggregatorSet& aggs = hyper.aggregators;
  const bool has_mean = aggs.contains(Aggregator::kMean);
  g.d_prototypes = Matrix(D, L);
  std::vector<double> coef(K);
  for (std::size_t d = 0; d < D; ++d) {
    std::ranges::fill(coef, 0.0);
    if (aggs.contains(Aggregator::kMin)) {
      coef[cache.pooled.argmin_index[d]] += grad_raw[feature_index(aggs, Aggregator::kMin, d, D)];
    }
    if (has_mean) {
      const double share =
          grad_raw[feature_index(aggs, Aggregator::kMean, d, D)] / static_cast<double>(K);
      for (double& c : coef) c += share;
    }
    if (aggs.contains(Aggregator::kMax)) {
      coef[cache.pooled.argmax_index[d]] += grad_raw[feature_index(aggs, Aggregator::kMax, d, D)];
    }

    auto proto = params.prototypes.row(d);
    auto out = g.d_prototypes.row(d);
    for (std::size_t k : cache.pooled.canonical_order) {
      if (coef[k] == 0.0) continue;
      // d||p - x|| / dp = (p - x) / ||p - x||, bounded at coincidence.
      const double w = coef[k] / std::max(cache.pooled.distances(k, d), kGradientFloor);
      auto x = bag.instance(k);
      for (std::size_t l = 0; l < L; ++l) out[l] += w * (proto[l] - x[l]);
    }
    if (hyper.lambda_p > 0.0) {
      const double w = hyper.lambda_p / std::max(row_norm(proto), kGradientFloor);
      for (std::size_t l = 0; l < L; ++l) out[l] += w * proto[l];
    }
  }
  return g;
}

bool GradCheckReport::passed() const {
  return std::ranges::all_of(blocks, [](const GradCheckBlock& b) { return b.failures == 0; });
}

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// True when moving prototype d by up to `margin` in any direction could
// change which instance attains an active min/max, or reach a distance or
// norm kink.
bool near_tie(const Bag& bag, const ForwardCache& cache, const ModelParams& params,
              const Hyperparams& hyper, std::size_t d, double margin) {
  const auto& pooled = cache.pooled;
  const std::size_t K = bag.size();
  auto second_gap = [&](std::size_t best, bool lowest) {
    double gap = std::numeric_limits<double>::infinity();
    auto best_row = bag.instance(best);
    for (std::size_t k = 0; k < K; ++k) {
      auto row = bag.instance(k);
      if (std::ranges::equal(row, best_row)) continue;  // identical instances never switch
      const double diff = lowest ? pooled.distances(k, d) - pooled.distances(best, d)
                                 : pooled.distances(best, d) - pooled.distances(k, d);
      gap = std::min(gap, diff);
    }
    return gap;
  };
  const auto& aggs = hyper.aggregators;
  if (aggs.contains(Aggregator::kMin)) {
    const std::size_t best = pooled.argmin_index[d];
    if (second_gap(best, true) < margin || pooled.distances(best, d) < margin) return true;
  }
  if (aggs.contains(Aggregator::kMax)) {
    const std::size_t best = pooled.argmax_index[d];
    if (second_gap(best, false) < margin || pooled.distances(best, d) < margin) return true;
  }
  if (aggs.contains(Aggregator::kMean)) {
    for (std::size_t k = 0; k < K; ++k) {
      if (pooled.distances(k, d) < margin) return true;
    }
  }
  return hyper.lambda_p > 0.0 && row_norm(params.prototypes.row(d)) < margin;
}

}  // namespace

GradCheckReport grad_check(const ModelParams& params, const Bag& bag, int label,
                           const Hyperparams& hyper, double h, double tol) {
  if (!(h > 0.0)) throw UsageError("grad_check: step h must be positive");
  GradCheckReport report;
  report.tol = tol;
  report.blocks[0].name = "prototypes";
  report.blocks[1].name = "beta";
  report.blocks[2].name = "beta0";

  const ForwardResult fwd = forward(bag, params, hyper);
  const Gradients analytic = backward(bag, label, params, hyper, fwd.cache);
  const double margin = 10.0 * h;

  ModelParams probe = params;
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + h;
    const double up = bag_objective(bag, label, probe, hyper);
    slot = saved - h;
    const double down = bag_objective(bag, label, probe, hyper);
    slot = saved;
    return (up - down) / (2.0 * h);
  };
  auto record = [&](GradCheckBlock& block, double a, double n) {
    const double err = gradient_relative_error(a, n);
    block.max_rel_error = std::max(block.max_rel_error, err);
    ++block.checked;
    if (!(err <= tol)) ++block.failures;
  };

  const std::size_t L = params.prototypes.cols();
  for (std::size_t d = 0; d < params.prototypes.rows(); ++d) {
    if (near_tie(bag, fwd.cache, params, hyper, d, margin)) {
      report.blocks[0].near_tie += L;
      continue;
    }
    for (std::size_t l = 0; l < L; ++l) {
      record(report.blocks[0], analytic.d_prototypes(d, l), central(probe.prototypes(d, l)));
    }
  }
  for (std::size_t j = 0; j < params.beta.size(); ++j) {
    if (hyper.lambda_w > 0.0 && std::abs(params.beta[j]) < margin) {
      ++report.blocks[1].near_tie;
      continue;
    }
    record(report.blocks[1], analytic.d_beta[j], central(probe.beta[j]));
  }
  record(report.blocks[2], analytic.d_beta0, central(probe.beta0));
  return report;
}

}  // namespace protomil
