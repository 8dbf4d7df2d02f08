// Acceptance suite: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails. `--informative-only` runs the extra
// dataset reproductions, which print INFO lines and never fail.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cli.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "protomil/dataset.hpp"
#include "protomil/features.hpp"
#include "protomil/model.hpp"
#include "protomil/optim.hpp"
#include "protomil/presets.hpp"
#include "protomil/text.hpp"
#include "protomil/trainer.hpp"

namespace fs = std::filesystem;
using namespace protomil;

namespace {

enum class Status { kPass, kFail, kSkip, kInfo };

struct Outcome {
  Status status;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> check;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path data_dir() {
  const char* env = std::getenv("PROTOMIL_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path(PROTOMIL_DEFAULT_DATA_DIR);
}

std::size_t worker_count() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

const std::vector<AggregatorSet>& aggregator_subsets() {
  static const std::vector<AggregatorSet> subsets{
      AggregatorSet{Aggregator::kMin},
      AggregatorSet{Aggregator::kMean},
      AggregatorSet{Aggregator::kMax},
      AggregatorSet{Aggregator::kMin, Aggregator::kMean},
      AggregatorSet{Aggregator::kMin, Aggregator::kMax},
      AggregatorSet{Aggregator::kMean, Aggregator::kMax},
      AggregatorSet::all()};
  return subsets;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Every coordinate of backward() against central differences (h = 1e-5) of
// an independent extended-precision objective. grad_check, which
// differences the double-precision bag_objective, only screens out draws
// with ties or kinks near the evaluation point; its own numbers are reported
// alongside.
Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t Ds[] = {2, 3, 8}, Ls[] = {2, 5, 16}, Ks[] = {1, 2, 5};
  const double lambdas[] = {0.0, 1e-2};
  const double h = 1e-5;
  std::mt19937_64 rng(2024);
  std::size_t configs = 0, coordinates = 0, failures = 0, redraws = 0;
  std::size_t double_failures = 0;
  double worst = 0.0, double_worst = 0.0;
  while (configs < 500) {
    const std::size_t D = Ds[rng() % 3], L = Ls[rng() % 3], K = Ks[rng() % 3];
    const AggregatorSet aggs = aggregator_subsets()[configs % 7];
    Hyperparams hyper;
    hyper.prototype_count = D;
    hyper.aggregators = aggs;
    hyper.lambda_w = lambdas[rng() % 2];
    hyper.lambda_p = lambdas[rng() % 2];
    hyper.lambda_d = lambdas[rng() % 2];
    const Bag bag = oracle::random_bag(rng, K, L);
    ModelParams params = oracle::random_params(rng, D, L, aggs);
    const int label = static_cast<int>(rng() & 1u);
    const GradCheckReport screen = grad_check(params, bag, label, hyper, h, 1e-4);
    if (screen.blocks[0].near_tie + screen.blocks[1].near_tie > 0) {
      ++redraws;
      continue;
    }
    ++configs;
    for (const auto& b : screen.blocks) {
      double_failures += b.failures;
      double_worst = std::max(double_worst, b.max_rel_error);
    }

    const Gradients g = backward(bag, label, params, hyper, forward(bag, params, hyper).cache);
    const auto f = [&] { return oracle::objective_ld(bag, label, params, hyper); };
    auto compare = [&](double analytic, double& slot) {
      const double err =
          gradient_relative_error(analytic, oracle::central_difference_ld(f, slot, h));
      worst = std::max(worst, err);
      ++coordinates;
      if (!(err < 1e-4)) ++failures;
    };
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t l = 0; l < L; ++l) compare(g.d_prototypes(d, l), params.prototypes(d, l));
    }
    for (std::size_t j = 0; j < params.beta.size(); ++j) compare(g.d_beta[j], params.beta[j]);
    compare(g.d_beta0, params.beta0);
  }
  const double elapsed = seconds_since(start);
  const bool ok = failures == 0 && elapsed < 60.0;
  return {ok ? Status::kPass : Status::kFail,
          std::to_string(configs) + " tie-free configs (" + std::to_string(redraws) +
              " tied draws replaced), " + std::to_string(coordinates) +
              " coordinates, max rel error " + fmt(worst) + " (< 1e-4), " +
              std::to_string(failures) + " failures, " + fmt(elapsed, 3) +
              " s (< 60 s); double-precision differences: max rel error " + fmt(double_worst) +
              ", " + std::to_string(double_failures) + " coordinates above 1e-4"};
}

Outcome layer_norm_statistics() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst_mean = 0.0, worst_var = 0.0, worst_fd = 0.0;
  std::size_t evaluated = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Statistics: input std spans 1e-3..1e3, normalized with eps = 1e-12 so
    // that sigma >> eps holds over the whole range.
    const double scale = std::pow(10.0, log_scale(rng));
    const double shift = 100.0 * normal(rng);
    std::vector<double> x(24);
    for (double& v : x) v = shift + scale * normal(rng);
    const NormOutput out = layer_norm_forward(x, 1e-12);
    if (out.stats.sigma > 1e-3) {
      ++evaluated;
      double mean = 0.0, var = 0.0;
      for (double v : out.phi_norm) mean += v;
      mean /= 24.0;
      for (double v : out.phi_norm) var += (v - mean) * (v - mean);
      var /= 24.0;
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_var = std::max(worst_var, std::abs(var - 1.0));
    }

    // Backward: default eps, unit-scale input, central differences with
    // h = 1e-5 of <g, phi_norm>. Error is measured against the largest
    // gradient entry of the vector.
    std::vector<double> z(24), g(24);
    for (double& v : z) v = normal(rng);
    for (double& v : g) v = normal(rng);
    const NormOutput zo = layer_norm_forward(z);
    const auto back = layer_norm_backward(g, zo.phi_norm, zo.stats);
    double max_diff = 0.0, max_mag = 0.0;
    for (std::size_t i = 0; i < 24; ++i) {
      const auto f = [&] {
        const auto y = layer_norm_forward(z).phi_norm;
        long double s = 0.0L;
        for (std::size_t j = 0; j < 24; ++j) s += static_cast<long double>(g[j]) * y[j];
        return static_cast<double>(s);
      };
      const double fd = oracle::central_difference(f, z[i], 1e-5);
      max_diff = std::max(max_diff, std::abs(fd - back[i]));
      max_mag = std::max({max_mag, std::abs(fd), std::abs(back[i])});
    }
    worst_fd = std::max(worst_fd, max_diff / max_mag);
  }
  const bool ok = worst_mean < 1e-12 && worst_var < 1e-6 && worst_fd < 1e-6;
  return {ok ? Status::kPass : Status::kFail,
          std::to_string(evaluated) + " vectors: max |mean| " + fmt(worst_mean) +
              " (< 1e-12), max |var-1| " + fmt(worst_var) + " (< 1e-6); backward max rel error " +
              fmt(worst_fd) + " (< 1e-6)"};
}

Outcome permutation_invariance() {
  std::mt19937_64 rng(5);
  std::size_t mismatched = 0;
  std::vector<Bag> bags;
  for (int i = 0; i < 200; ++i) {
    const std::size_t K = 1 + rng() % 12, L = 6;
    Bag bag = oracle::random_bag(rng, K, L);
    bag.id = "bag" + std::to_string(i);
    bag.label = i % 2;
    Hyperparams h;
    h.prototype_count = 5;
    const ModelParams p = oracle::random_params(rng, 5, L, h.aggregators);
    const Bag shuffled = oracle::shuffled(bag, rng);
    if (forward(bag, p, h).yhat != forward(shuffled, p, h).yhat) ++mismatched;
    bags.push_back(std::move(bag));
  }
  // Plant a witness in positive bags so CV has something to learn.
  for (Bag& b : bags) {
    if (b.label == 1) b.instances(0, 0) += 6.0;
  }
  const Dataset data(std::move(bags));
  const Dataset shuffled = oracle::shuffle_instances(data, 99);

  Hyperparams h = preset("appendix");
  h.prototype_count = 8;
  h.epochs = 10;
  bool reports_equal = true;
  for (bool standardize : {false, true}) {
    CvOptions o;
    o.k = 10;
    o.repeats = 1;
    o.seed = 11;
    o.standardize = standardize;
    o.jobs = worker_count();
    reports_equal = reports_equal && report_to_json(cross_validate(data, h, o)) ==
                                         report_to_json(cross_validate(shuffled, h, o));
  }
  const bool ok = mismatched == 0 && reports_equal;
  return {ok ? Status::kPass : Status::kFail,
          "200 bags: " + std::to_string(mismatched) +
              " forward mismatches; CV report (raw and standardized) " +
              (reports_equal ? "identical" : "DIFFERS") + " after shuffling"};
}

Outcome synthetic_separability() {
  const auto start = std::chrono::steady_clock::now();
  SyntheticConfig c;
  c.n_bags = 100;
  c.feature_count = 10;
  c.separation = 8.0;
  c.seed = 3;
  const Dataset data = gen_synthetic(c);
  Hyperparams h = preset("appendix");
  h.prototype_count = 8;
  CvOptions o;
  o.k = 10;
  o.repeats = 1;
  o.seed = 3;
  o.jobs = worker_count();
  const CVReport r = cross_validate(data, h, o);
  const double elapsed = seconds_since(start);
  const bool ok = r.mean >= 0.95 && elapsed < 120.0;
  return {ok ? Status::kPass : Status::kFail,
          "mean accuracy " + fmt(r.mean) + " (>= 0.95), std " + fmt(r.stddev) + ", " +
              fmt(elapsed, 3) + " s (< 120 s)"};
}

// Runs 5x10-fold CV of `preset_name` on data_dir()/file for each seed.
// Returns the per-seed means, or nothing when the file is absent.
std::optional<std::vector<double>> reproduce(const std::string& file,
                                             const std::string& preset_name,
                                             const std::vector<std::uint64_t>& seeds,
                                             double& elapsed) {
  const fs::path path = data_dir() / file;
  if (data_dir().empty() || !fs::exists(path)) return std::nullopt;
  const auto start = std::chrono::steady_clock::now();
  const Dataset data = load_csv(path);
  std::vector<double> means;
  for (std::uint64_t seed : seeds) {
    CvOptions o;
    o.k = 10;
    o.repeats = 5;
    o.seed = seed;
    o.jobs = worker_count();
    means.push_back(cross_validate(data, preset(preset_name), o).mean);
  }
  elapsed = seconds_since(start);
  return means;
}

std::string list(const std::vector<double>& values) {
  std::string out;
  for (double v : values) out += (out.empty() ? "" : ", ") + fmt(v);
  return out;
}

Outcome musk1_reproduction() {
  double elapsed = 0.0;
  const auto means = reproduce("musk1.csv", "table1-musk1", {1, 2, 3}, elapsed);
  if (!means) return {Status::kSkip, "musk1.csv not found in PROTOMIL_DATA_DIR"};
  const auto passing = std::count_if(means->begin(), means->end(),
                                     [](double m) { return m >= 0.85; });
  return {passing >= 2 ? Status::kPass : Status::kFail,
          "seeds 1,2,3 mean accuracy " + list(*means) + "; " + std::to_string(passing) +
              "/3 seeds >= 0.85 (need 2), " + fmt(elapsed, 4) + " s (target < 600 s)"};
}

Outcome adam_oracle() {
  std::vector<double> x{1.0};
  AdamState state(1);
  GroupConfig cfg;
  cfg.lr = 0.1;
  oracle::ScalarAdam ref{0.1};
  double y = 1.0, worst = 0.0;
  for (int step = 0; step < 10; ++step) {
    const std::vector<double> g{2.0 * x[0]};
    adam_step(x, g, state, cfg);
    y = ref.step(y, 2.0 * y);
    worst = std::max(worst, std::abs(x[0] - y));
  }
  return {worst <= 1e-12 ? Status::kPass : Status::kFail,
          "10 steps on x^2 from 1 (lr 0.1): max |x - oracle| " + fmt(worst) + " (<= 1e-12)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Concatenated stdout plus every file the command wrote under `dir`.
std::string run_capture(const std::vector<std::string>& args, const fs::path& dir, int& code) {
  std::ostringstream out, err;
  code = cli::run(args, out, err);
  std::string all = out.str() + err.str();
  if (fs::exists(dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) all += f.filename().string() + "\n" + slurp(f);
  }
  return all;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "protomil_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "data.csv").string();
  const std::string ckpt = (root / "model.ckpt").string();
  std::ofstream(data) << [] {
    SyntheticConfig c;
    c.n_bags = 30;
    c.feature_count = 5;
    c.seed = 8;
    std::ostringstream s;
    write_csv(gen_synthetic(c), s);
    return s.str();
  }();
  const std::vector<std::string> fast{"--epochs", "5", "--proto-count", "4", "--seed", "12"};
  auto with = [&](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  {
    int code = 0;
    run_capture(with({"train", "--data", data, "--out", ckpt}, fast), {}, code);
    if (code != 0) return {Status::kFail, "train setup failed"};
  }

  struct Case {
    std::string name;
    std::vector<std::string> args;
  };
  const std::string out_dir = (root / "out").string();
  const std::vector<Case> cases{
      {"gen-synth", {"gen-synth", "--n-bags", "20", "--seed", "4", "--out", out_dir + "/s.csv"}},
      {"cv", with({"cv", "--data", data, "--k", "3", "--repeats", "2", "--jobs", "1", "--out",
                   out_dir + "/cv.json"},
                  fast)},
      {"train", with({"train", "--data", data, "--out", out_dir + "/m.ckpt"}, fast)},
      {"predict", {"predict", "--checkpoint", ckpt, "--data", data, "--out", out_dir + "/p.csv"}},
      {"export", {"export", "--checkpoint", ckpt, "--out", out_dir + "/export"}},
      {"gradcheck", with({"gradcheck", "--data", data}, fast)},
  };
  std::vector<std::string> differing;
  for (const auto& c : cases) {
    std::string first, second;
    int code1 = 0, code2 = 0;
    for (std::string* slot : {&first, &second}) {
      fs::remove_all(out_dir);
      fs::create_directories(out_dir);
      *slot = run_capture(c.args, out_dir, slot == &first ? code1 : code2);
    }
    if (code1 != 0 || code2 != 0 || first != second) differing.push_back(c.name);
  }

  CvOptions o;
  o.k = 5;
  o.repeats = 2;
  o.seed = 21;
  Hyperparams h = preset("appendix");
  h.prototype_count = 4;
  h.epochs = 5;
  const Dataset d = load_csv(data);
  o.jobs = 1;
  const CVReport serial = cross_validate(d, h, o);
  o.jobs = 4;
  const CVReport parallel = cross_validate(d, h, o);
  const bool jobs_equal = serial.per_fold == parallel.per_fold && serial.mean == parallel.mean &&
                          serial.stddev == parallel.stddev;
  fs::remove_all(root);

  std::string names;
  for (const auto& c : cases) names += (names.empty() ? "" : ",") + c.name;
  std::string detail = names + " byte-identical across runs: " +
                       (differing.empty() ? "yes" : "NO (" + differing.size() + std::string(")")) +
                       "; CV jobs 4 == jobs 1: " + (jobs_equal ? "yes" : "NO");
  for (const auto& n : differing) detail += " [" + n + " differs]";
  return {differing.empty() && jobs_equal ? Status::kPass : Status::kFail, detail};
}

Outcome mnist_pipeline() {
  const fs::path images = data_dir() / "train-images-idx3-ubyte";
  const fs::path labels = data_dir() / "train-labels-idx1-ubyte";
  if (data_dir().empty() || !fs::exists(images) || !fs::exists(labels)) {
    return {Status::kSkip, "train-images-idx3-ubyte/train-labels-idx1-ubyte not found in "
                           "PROTOMIL_DATA_DIR"};
  }
  const IdxImages pool = load_idx_images(images, labels);
  const fs::path root = fs::temp_directory_path() / "protomil_acceptance_mnist";
  fs::remove_all(root);
  fs::create_directories(root);
  std::size_t opposite = 0;
  std::string problems;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DigitBagConfig c;
    c.target_digit = 9;
    c.seed = seed;
    const Dataset bags = build_digit_bags(pool, c);
    Hyperparams h = preset(kDefaultPreset);
    h.prototype_count = 2;
    h.aggregators = AggregatorSet{Aggregator::kMin};
    const TrainResult r = train(bags, h, seed);
    const fs::path dir = root / ("seed" + std::to_string(seed));
    export_prototypes(r.params, h.aggregators, dir, pool.image_rows);
    for (const char* f : {"prototype_0.pgm", "prototype_1.pgm", "weights.json"}) {
      if (!fs::exists(dir / f)) problems += " seed " + std::to_string(seed) + " missing " + f;
    }
    std::ifstream wf(dir / "weights.json");
    const auto w = nlohmann::json::parse(wf);
    if (w["weights"].size() != 2) {
      problems += " seed " + std::to_string(seed) + " has " +
                  std::to_string(w["weights"].size()) + " weights";
      continue;
    }
    const double a = w["weights"][0]["weight"].get<double>();
    const double b = w["weights"][1]["weight"].get<double>();
    if (a * b < 0.0) ++opposite;
  }
  fs::remove_all(root);
  return {problems.empty() ? Status::kPass : Status::kFail,
          "5 seeds exported 2 PGM prototypes + weights.json" +
              (problems.empty() ? std::string() : " except:" + problems) +
              "; opposite-sign weights in " + std::to_string(opposite) +
              "/5 seeds (observational)"};
}

Outcome informative(const std::string& file, const std::string& preset_name, double band) {
  double elapsed = 0.0;
  const auto means = reproduce(file, preset_name, {1}, elapsed);
  if (!means) return {Status::kInfo, file + " not found in PROTOMIL_DATA_DIR"};
  return {Status::kInfo, "seed 1 mean accuracy " + list(*means) + " (band >= " + fmt(band) +
                             ": " + (means->front() >= band ? "within" : "below") + "), " +
                             fmt(elapsed, 4) + " s"};
}

const char* label(Status s) {
  switch (s) {
    case Status::kPass: return "PASS";
    case Status::kFail: return "FAIL";
    case Status::kSkip: return "SKIP";
    case Status::kInfo: return "INFO";
  }
  return "?";
}

}  // namespace

int main(int argc, char** argv) {
  bool informative_only = false;
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--informative-only") {
      informative_only = true;
    } else if (arg == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: protomil_acceptance [--informative-only] [--only NAME]\n";
      return 2;
    }
  }

  std::vector<Criterion> criteria;
  if (informative_only) {
    criteria = {
        {"musk2-reproduction", [] { return informative("musk2.csv", "table1-musk2", 0.88); }},
        {"fox-reproduction", [] { return informative("fox.csv", "table1-fox", 0.60); }},
        {"tiger-reproduction", [] { return informative("tiger.csv", "table1-tiger", 0.85); }},
        {"elephant-reproduction",
         [] { return informative("elephant.csv", "table1-elephant", 0.85); }},
    };
  } else {
    criteria = {
        {"gradient-correctness", gradient_correctness},
        {"layer-norm-statistics", layer_norm_statistics},
        {"permutation-invariance", permutation_invariance},
        {"synthetic-separability", synthetic_separability},
        {"musk1-reproduction", musk1_reproduction},
        {"adam-oracle", adam_oracle},
        {"cli-determinism", cli_determinism},
        {"mnist-pipeline", mnist_pipeline},
    };
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && c.name != only) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {informative_only ? Status::kInfo : Status::kFail, std::string("error: ") + e.what()};
    }
    if (o.status == Status::kFail) ++failures;
    std::cout << label(o.status) << "  " << c.name << ": " << o.detail << std::endl;
  }
  if (informative_only) {
    std::cout << "informative runs complete" << std::endl;
  } else {
    std::cout << (failures == 0 ? "all criteria met" : std::to_string(failures) + " failed")
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
