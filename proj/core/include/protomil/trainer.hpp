#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "protomil/dataset.hpp"
#include "protomil/model.hpp"
#include "protomil/optim.hpp"

namespace protomil {

struct TrainHistory {
  std::vector<double> mean_objective;  // per epoch, evaluated before each step
  std::vector<double> train_accuracy;  // per epoch, from the same forward passes
  std::vector<double> epoch_seconds;
  // Hash of the bag ids in visit order across all epochs.
  std::uint64_t stream_checksum = 0;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  OptimizerState optimizer;
};

// Minibatch-1 Adam training. Prototypes come from init_prototypes on the
// training set; beta and beta0 start at zero. Each epoch visits the bags in
// a fresh shuffled order. Initialization and visit order use independent
// substreams of `seed`.
TrainResult train(const Dataset& train_set, const Hyperparams& hyper, std::uint64_t seed);

std::vector<double> predict(const ModelParams& params, const Hyperparams& hyper,
                            const Dataset& data);

// Fraction of bags whose thresholded prediction (yhat >= 0.5 -> 1) matches
// the label.
double evaluate(const ModelParams& params, const Hyperparams& hyper, const Dataset& data);

struct CvOptions {
  std::size_t k = 10;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  bool standardize = false;  // z-score with train-fold statistics
  std::size_t jobs = 1;

  bool operator==(const CvOptions&) const = default;
};

struct FoldAccuracy {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  double accuracy = 0.0;

  bool operator==(const FoldAccuracy&) const = default;
};

struct CVReport {
  std::vector<FoldAccuracy> per_fold;  // ordered by (repeat, fold)
  double mean = 0.0;
  double stddev = 0.0;          // population std over all folds
  double standard_error = 0.0;  // stddev / sqrt(repeats * k)
  Hyperparams hyper;
  CvOptions protocol;

  bool operator==(const CVReport&) const = default;
};

// Fills mean, stddev and standard_error from per_fold.
void summarize(CVReport& report);

// Called once per fold with the trained model; may run on worker threads.
using FoldObserver = std::function<void(const FoldSplit&, const TrainResult&)>;

// Repeated stratified k-fold cross-validation. Each fold trains with seed
// derive_seed(seed, {fold-training, repeat, fold}), so results do not depend
// on `jobs`.
CVReport cross_validate(const Dataset& data, const Hyperparams& hyper, const CvOptions& options,
                        const FoldObserver& observer = {});

// JSON document with fields mean, std, stderr, per_fold, hyperparams, seed,
// protocol.
std::string report_to_json(const CVReport& report);
std::string hyperparams_to_json(const Hyperparams& hyper);

// Writes prototypes.csv (D rows of L values), weights.json (bias and one
// entry per prototype/aggregator weight) and, when image_side is set,
// prototype_<d>.pgm images min-max scaled to 0..255 (constant rows map to
// 128). Returns the written paths.
std::vector<std::filesystem::path> export_prototypes(const ModelParams& params,
                                                     const AggregatorSet& aggs,
                                                     const std::filesystem::path& out_dir,
                                                     std::optional<std::size_t> image_side = {});

Matrix load_prototypes_csv(const std::filesystem::path& path);

}  // namespace protomil
