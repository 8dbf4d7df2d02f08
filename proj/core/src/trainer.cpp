#include "protomil/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>

#include "json.hpp"
#include "protomil/error.hpp"
#include "protomil/rng.hpp"
#include "protomil/text.hpp"

namespace protomil {

TrainResult train(const Dataset& train_set, const Hyperparams& hyper, std::uint64_t seed) {
  hyper.validate();
  if (train_set.positive_count() == 0 || train_set.negative_count() == 0) {
    throw DataError("training set must contain both classes");
  }

  TrainResult result;
  result.params = make_params(
      init_prototypes(train_set, hyper.prototype_count, hyper.init,
                      derive_seed(seed, {stream::kInit})),
      hyper.aggregators);
  ModelParams& params = result.params;
  OptimizerState& opt = result.optimizer;
  opt.prototypes = AdamState(params.prototypes.size());
  opt.beta = AdamState(params.beta.size());
  opt.beta0 = AdamState(1);

  const GroupConfig proto_cfg{hyper.lr_prototypes, hyper.adam_beta1, hyper.adam_beta2,
                              hyper.adam_eps};
  const GroupConfig weight_cfg{hyper.lr_weights, hyper.adam_beta1, hyper.adam_beta2,
                               hyper.adam_eps};

  Rng shuffle_rng(derive_seed(seed, {stream::kEpochShuffle}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::hash<std::string> hash_id;
  TrainHistory& history = result.history;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double objective_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i : order) {
      const Bag& bag = train_set[i];
      history.stream_checksum = mix64(history.stream_checksum ^ hash_id(bag.id));
      const ForwardResult fwd = forward(bag, params, hyper);
      const double objective = objective_terms(fwd.cache, bag.label, params, hyper).total();
      if (!std::isfinite(objective)) {
        throw DataError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", bag '" +
                        bag.id + "'");
      }
      objective_sum += objective;
      correct += static_cast<std::size_t>((fwd.yhat >= 0.5) == (bag.label == 1));

      Gradients grad = backward(bag, bag.label, params, hyper, fwd.cache);
      try {
        adam_step(params.prototypes.values(), grad.d_prototypes.values(), opt.prototypes,
                  proto_cfg);
        adam_step(params.beta, grad.d_beta, opt.beta, weight_cfg);
        adam_step(std::span<double>(&params.beta0, 1), std::span<const double>(&grad.d_beta0, 1),
                  opt.beta0, weight_cfg);
      } catch (const NonFiniteGradient& e) {
        throw DataError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                        ", bag '" + bag.id + "'");
      }
    }
    const double n = static_cast<double>(train_set.size());
    history.mean_objective.push_back(objective_sum / n);
    history.train_accuracy.push_back(static_cast<double>(correct) / n);
    history.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return result;
}

std::vector<double> predict(const ModelParams& params, const Hyperparams& hyper,
                            const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const Bag& bag : data.bags()) out.push_back(forward(bag, params, hyper).yhat);
  return out;
}

double evaluate(const ModelParams& params, const Hyperparams& hyper, const Dataset& data) {
  if (data.empty()) throw UsageError("evaluate: empty bag list");
  std::size_t correct = 0;
  for (const Bag& bag : data.bags()) {
    const int predicted = forward(bag, params, hyper).yhat >= 0.5 ? 1 : 0;
    correct += static_cast<std::size_t>(predicted == bag.label);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void summarize(CVReport& report) {
  const auto& folds = report.per_fold;
  if (folds.empty()) {
    report.mean = report.stddev = report.standard_error = 0.0;
    return;
  }
  const double n = static_cast<double>(folds.size());
  double sum = 0.0;
  for (const auto& f : folds) sum += f.accuracy;
  report.mean = sum / n;
  double sq = 0.0;
  for (const auto& f : folds) sq += (f.accuracy - report.mean) * (f.accuracy - report.mean);
  report.stddev = std::sqrt(sq / n);
  report.standard_error = report.stddev / std::sqrt(n);
}

CVReport cross_validate(const Dataset& data, const Hyperparams& hyper, const CvOptions& options,
                        const FoldObserver& observer) {
  hyper.validate();
  const std::vector<FoldSplit> splits =
      stratified_kfold(data, options.k, options.repeats, options.seed);

  CVReport report;
  report.hyper = hyper;
  report.protocol = options;
  report.per_fold.resize(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());

  auto run_fold = [&](std::size_t i) {
    const FoldSplit& split = splits[i];
    Dataset train_set = data.subset(split.train_bag_indices);
    Dataset test_set = data.subset(split.test_bag_indices);
    if (options.standardize) {
      const FeatureScaler scaler = FeatureScaler::fit(train_set);
      train_set = scaler.apply(train_set);
      test_set = scaler.apply(test_set);
    }
    const std::uint64_t fold_seed =
        derive_seed(options.seed, {stream::kFoldTraining, split.repeat_index, split.fold_index});
    const TrainResult trained = train(train_set, hyper, fold_seed);
    if (observer) observer(split, trained);
    report.per_fold[i] = FoldAccuracy{split.repeat_index, split.fold_index,
                                      evaluate(trained.params, hyper, test_set)};
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, splits.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < splits.size(); i = next++) {
      try {
        run_fold(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  summarize(report);
  return report;
}

namespace {

nlohmann::ordered_json hyper_json(const Hyperparams& h) {
  nlohmann::ordered_json j;
  j["prototype_count"] = h.prototype_count;
  j["aggregators"] = h.aggregators.to_string();
  j["lambda_w"] = h.lambda_w;
  j["lambda_p"] = h.lambda_p;
  j["lambda_d"] = h.lambda_d;
  j["norm_eps"] = h.norm_eps;
  j["lr_weights"] = h.lr_weights;
  j["lr_prototypes"] = h.lr_prototypes;
  j["adam_beta1"] = h.adam_beta1;
  j["adam_beta2"] = h.adam_beta2;
  j["adam_eps"] = h.adam_eps;
  j["epochs"] = h.epochs;
  j["init"] = std::string(to_string(h.init));
  return j;
}

}  // namespace

std::string hyperparams_to_json(const Hyperparams& hyper) { return hyper_json(hyper).dump(2); }

std::string report_to_json(const CVReport& report) {
  nlohmann::ordered_json j;
  j["mean"] = report.mean;
  j["std"] = report.stddev;
  j["stderr"] = report.standard_error;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : report.per_fold) {
    nlohmann::ordered_json e;
    e["repeat"] = f.repeat;
    e["fold"] = f.fold;
    e["accuracy"] = f.accuracy;
    folds.push_back(std::move(e));
  }
  j["per_fold"] = std::move(folds);
  j["hyperparams"] = hyper_json(report.hyper);
  j["seed"] = report.protocol.seed;
  j["protocol"] = {{"k", report.protocol.k},
                   {"repeats", report.protocol.repeats},
                   {"standardize", report.protocol.standardize}};
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> export_prototypes(const ModelParams& params,
                                                     const AggregatorSet& aggs,
                                                     const std::filesystem::path& out_dir,
                                                     std::optional<std::size_t> image_side) {
  const Matrix& protos = params.prototypes;
  if (image_side && *image_side * *image_side != protos.cols()) {
    throw UsageError("image side " + std::to_string(*image_side) + " squared != feature count " +
                     std::to_string(protos.cols()));
  }
  if (params.beta.size() != protos.rows() * aggs.size()) {
    throw UsageError("classifier weight count does not match prototypes x aggregators");
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    written.push_back(p);
    return out;
  };

  {
    std::ofstream csv = open(out_dir / "prototypes.csv");
    for (std::size_t d = 0; d < protos.rows(); ++d) {
      auto row = protos.row(d);
      for (std::size_t l = 0; l < row.size(); ++l) {
        csv << (l ? "," : "") << format_double(row[l]);
      }
      csv << '\n';
    }
  }

  {
    nlohmann::ordered_json j;
    j["bias"] = params.beta0;
    j["prototype_count"] = protos.rows();
    j["feature_count"] = protos.cols();
    auto weights = nlohmann::ordered_json::array();
    for (Aggregator a : aggs.list()) {
      for (std::size_t d = 0; d < protos.rows(); ++d) {
        nlohmann::ordered_json e;
        e["prototype"] = d;
        e["aggregator"] = std::string(to_string(a));
        e["weight"] = params.beta[feature_index(aggs, a, d, protos.rows())];
        weights.push_back(std::move(e));
      }
    }
    j["weights"] = std::move(weights);
    std::ofstream out = open(out_dir / "weights.json");
    out << j.dump(2) << '\n';
  }

  if (image_side) {
    const std::size_t side = *image_side;
    for (std::size_t d = 0; d < protos.rows(); ++d) {
      auto row = protos.row(d);
      const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
      const double range = *hi - *lo;
      std::string pixels(row.size(), '\0');
      for (std::size_t p = 0; p < row.size(); ++p) {
        const double level = range > 0.0 ? std::round((row[p] - *lo) / range * 255.0) : 128.0;
        pixels[p] = static_cast<char>(static_cast<unsigned char>(level));
      }
      std::ofstream pgm = open(out_dir / ("prototype_" + std::to_string(d) + ".pgm"));
      pgm << "P5\n" << side << ' ' << side << "\n255\n";
      pgm.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    }
  }
  return written;
}

Matrix load_prototypes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("data file not found: " + path.string());
  Matrix out;
  std::string line;
  std::vector<double> row;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    row.clear();
    for (auto field : split_fields(line)) row.push_back(parse_double(field, "prototype value"));
    if (out.rows() > 0 && row.size() != out.cols()) throw DataError("ragged prototype row");
    out.append_row(row);
  }
  return out;
}

}  // namespace protomil
