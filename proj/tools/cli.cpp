#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string_view>

#include "CLI11.hpp"
#include "json.hpp"
#include "protomil/checkpoint.hpp"
#include "protomil/dataset.hpp"
#include "protomil/error.hpp"
#include "protomil/model.hpp"
#include "protomil/presets.hpp"
#include "protomil/rng.hpp"
#include "protomil/text.hpp"
#include "protomil/trainer.hpp"

namespace protomil::cli {

namespace {

namespace fs = std::filesystem;

struct OptionSpec {
  std::string_view name;  // long flag without dashes; also the config-file key
  std::string_view help;
  bool is_flag = false;
  std::string_view type = "TEXT";
};

constexpr OptionSpec kOptions[] = {
    {"data", "Bag CSV file (header bag_id,label,f0,...)", false, "PATH"},
    {"preset",
     "Hyperparameter preset: table1-musk1 (default), table1-musk2, table1-fox, table1-tiger, "
     "table1-elephant, appendix"},
    {"seed", "Root RNG seed (falls back to $PROTOMIL_SEED, then 0)", false, "INT"},
    {"k", "Number of cross-validation folds (default 10)", false, "INT"},
    {"repeats", "Number of repeated k-fold runs (default 5)", false, "INT"},
    {"epochs", "Training epochs", false, "INT"},
    {"proto-count", "Number of prototypes D", false, "INT"},
    {"lr-weights", "Adam learning rate of the classifier weights and bias", false, "REAL"},
    {"lr-prototypes", "Adam learning rate of the prototypes", false, "REAL"},
    {"lambda-w", "L1 penalty on classifier weights", false, "REAL"},
    {"lambda-p", "Penalty on the sum of prototype L2 norms", false, "REAL"},
    {"lambda-d", "Penalty on the sum of pooled raw distances", false, "REAL"},
    {"aggregators", "Comma-separated subset of min,mean,max"},
    {"standardize", "Z-score features with train-fold statistics", true},
    {"init", "Prototype initialization: gaussian (default) or sample-instances"},
    {"jobs", "Parallel CV folds (results do not depend on this)", false, "INT"},
    {"out", "Output path", false, "PATH"},
    {"checkpoint", "Model checkpoint file", false, "PATH"},
    {"image-side", "Also write prototypes as side x side PGM images", false, "INT"},
    {"n-bags", "Number of bags to generate", false, "INT"},
    {"min-instances", "Minimum instances per bag", false, "INT"},
    {"max-instances", "Maximum instances per bag", false, "INT"},
    {"features", "Feature count L", false, "INT"},
    {"witness-rate", "Probability that an instance of a positive bag is a witness", false, "REAL"},
    {"separation", "Offset of witness instances along the first axis", false, "REAL"},
    {"step", "Central-difference step h (default 1e-5)", false, "REAL"},
    {"tol", "Maximum allowed relative error (default 1e-4)", false, "REAL"},
    {"images", "IDX image file (magic 0x00000803)", false, "PATH"},
    {"labels", "IDX label file (magic 0x00000801)", false, "PATH"},
    {"target-digit", "Digit whose presence makes a bag positive", false, "INT"},
};

const OptionSpec& option_spec(std::string_view name) {
  for (const auto& o : kOptions) {
    if (o.name == name) return o;
  }
  throw std::logic_error("unregistered option " + std::string(name));
}

// Layered string settings: command line over config file over defaults.
class Settings {
 public:
  void set(const std::string& name, std::string value) { values_[name] = std::move(value); }
  bool has(const std::string& name) const { return values_.count(name) > 0; }
  const std::string* find(const std::string& name) const {
    auto it = values_.find(name);
    return it == values_.end() ? nullptr : &it->second;
  }

  std::string str(const std::string& name, std::string fallback = {}) const {
    const auto* v = find(name);
    return v ? *v : fallback;
  }
  std::string required(const std::string& name) const {
    const auto* v = find(name);
    if (!v) throw UsageError("missing required option --" + name);
    return *v;
  }
  std::uint64_t u64(const std::string& name, std::uint64_t fallback) const {
    const auto* v = find(name);
    return v ? parse_u64(name, *v) : fallback;
  }
  std::size_t size(const std::string& name, std::size_t fallback) const {
    return static_cast<std::size_t>(u64(name, fallback));
  }
  double real(const std::string& name, double fallback) const {
    const auto* v = find(name);
    if (!v) return fallback;
    try {
      return parse_double(*v, "--" + name);
    } catch (const DataError&) {
      throw UsageError("invalid value for --" + name + ": '" + *v + "'");
    }
  }
  bool flag(const std::string& name) const {
    const auto* v = find(name);
    if (!v) return false;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw UsageError("invalid value for --" + name + ": '" + *v + "'");
  }

 private:
  static std::uint64_t parse_u64(const std::string& name, const std::string& text) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
      throw UsageError("invalid value for --" + name + ": '" + text + "'");
    }
    return value;
  }

  std::map<std::string, std::string> values_;
};

struct Command {
  std::string name;
  std::string description;
  std::vector<std::string> options;
  std::map<std::string, std::string> help_overrides;
  std::function<int(const Settings&, std::ostream&, std::ostream&)> run;
};

Settings load_config_file(const fs::path& path, const Command& cmd) {
  std::ifstream in(path);
  if (!in) throw UsageError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  Settings s;
  for (const auto& [key, value] : j.items()) {
    if (std::find(cmd.options.begin(), cmd.options.end(), key) == cmd.options.end()) {
      throw UsageError("unknown config key '" + key + "' for " + cmd.name);
    }
    if (value.is_string()) {
      s.set(key, value.get<std::string>());
    } else if (value.is_boolean()) {
      s.set(key, value.get<bool>() ? "true" : "false");
    } else if (value.is_number_unsigned() || value.is_number_integer()) {
      s.set(key, value.dump());
    } else if (value.is_number_float()) {
      s.set(key, format_double(value.get<double>()));
    } else {
      throw UsageError("config key '" + key + "' must be a string, number or boolean");
    }
  }
  return s;
}

std::uint64_t resolve_seed(const Settings& s) {
  if (s.has("seed")) return s.u64("seed", 0);
  if (const char* env = std::getenv("PROTOMIL_SEED"); env && *env) {
    Settings e;
    e.set("seed", env);
    return e.u64("seed", 0);
  }
  return 0;
}

Hyperparams resolve_hyperparams(const Settings& s) {
  Hyperparams h = preset(s.str("preset", std::string(kDefaultPreset)));
  h.epochs = s.size("epochs", h.epochs);
  h.prototype_count = s.size("proto-count", h.prototype_count);
  h.lr_weights = s.real("lr-weights", h.lr_weights);
  h.lr_prototypes = s.real("lr-prototypes", h.lr_prototypes);
  h.lambda_w = s.real("lambda-w", h.lambda_w);
  h.lambda_p = s.real("lambda-p", h.lambda_p);
  h.lambda_d = s.real("lambda-d", h.lambda_d);
  if (s.has("aggregators")) h.aggregators = AggregatorSet::parse(s.required("aggregators"));
  if (s.has("init")) h.init = parse_init_strategy(s.required("init"));
  h.validate();
  return h;
}

Dataset load_data(const Settings& s) {
  const fs::path path = s.required("data");
  if (!fs::exists(path)) throw DataError("data file not found: " + path.string());
  return load_csv(path);
}

// Writes to --out when given, otherwise to `out`.
void emit(const Settings& s, std::ostream& out, const std::string& text) {
  if (!s.has("out")) {
    out << text;
    return;
  }
  std::ofstream file(s.required("out"), std::ios::binary);
  if (!file) throw DataError("cannot write " + s.required("out"));
  file << text;
}

const std::vector<std::string> kHyperOptions = {
    "preset",      "epochs",   "proto-count", "lr-weights", "lr-prototypes",
    "lambda-w",    "lambda-p", "lambda-d",    "aggregators", "init"};

std::vector<std::string> with_hyper(std::vector<std::string> opts) {
  opts.insert(opts.end(), kHyperOptions.begin(), kHyperOptions.end());
  return opts;
}

int cmd_cv(const Settings& s, std::ostream& out, std::ostream&) {
  const Hyperparams hyper = resolve_hyperparams(s);
  CvOptions opts;
  opts.k = s.size("k", 10);
  opts.repeats = s.size("repeats", 5);
  opts.seed = resolve_seed(s);
  opts.standardize = s.flag("standardize");
  opts.jobs = s.size("jobs", 1);
  if (opts.repeats < 1) throw UsageError("repeats must be at least 1");
  if (opts.jobs < 1) throw UsageError("jobs must be at least 1");
  const Dataset data = load_data(s);
  const CVReport report = cross_validate(data, hyper, opts);
  const std::string json = report_to_json(report);
  out << json;
  if (s.has("out")) emit(s, out, json);
  return 0;
}

int cmd_train(const Settings& s, std::ostream& out, std::ostream&) {
  const Hyperparams hyper = resolve_hyperparams(s);
  const std::string out_path = s.required("out");
  const Dataset data = load_data(s);
  const TrainResult result = train(data, hyper, resolve_seed(s));
  Checkpoint ckpt{result.params, hyper.aggregators, hyper.norm_eps, result.optimizer};
  save_checkpoint(ckpt, out_path);

  nlohmann::ordered_json j;
  j["checkpoint"] = out_path;
  j["bags"] = data.size();
  j["seed"] = resolve_seed(s);
  j["mean_objective"] = result.history.mean_objective;
  j["train_accuracy"] = result.history.train_accuracy;
  j["final_train_accuracy"] = evaluate(result.params, hyper, data);
  j["hyperparams"] = nlohmann::ordered_json::parse(hyperparams_to_json(hyper));
  out << j.dump(2) << '\n';
  return 0;
}

Hyperparams hyper_from_checkpoint(const Checkpoint& ckpt) {
  Hyperparams h;
  h.prototype_count = ckpt.params.prototypes.rows();
  h.aggregators = ckpt.aggregators;
  h.norm_eps = ckpt.norm_eps;
  return h;
}

int cmd_predict(const Settings& s, std::ostream& out, std::ostream&) {
  const Checkpoint ckpt = load_checkpoint(s.required("checkpoint"));
  const Dataset data = load_data(s);
  if (data.feature_count() != ckpt.params.prototypes.cols()) {
    throw UsageError("feature width mismatch: checkpoint L=" +
                     std::to_string(ckpt.params.prototypes.cols()) +
                     ", data L=" + std::to_string(data.feature_count()));
  }
  const Hyperparams hyper = hyper_from_checkpoint(ckpt);
  const std::vector<double> probs = predict(ckpt.params, hyper, data);
  std::ostringstream csv;
  csv << "bag_id,probability,predicted_label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv << data[i].id << ',' << format_double(probs[i]) << ',' << (probs[i] >= 0.5 ? 1 : 0)
        << '\n';
  }
  emit(s, out, csv.str());
  return 0;
}

int cmd_gen_synth(const Settings& s, std::ostream& out, std::ostream&) {
  SyntheticConfig c;
  c.n_bags = s.size("n-bags", c.n_bags);
  c.min_instances = s.size("min-instances", c.min_instances);
  c.max_instances = s.size("max-instances", c.max_instances);
  c.feature_count = s.size("features", c.feature_count);
  c.witness_rate = s.real("witness-rate", c.witness_rate);
  c.separation = s.real("separation", c.separation);
  c.seed = resolve_seed(s);
  const Dataset data = gen_synthetic(c);
  std::ostringstream csv;
  write_csv(data, csv);
  emit(s, out, csv.str());
  return 0;
}

int cmd_mnist_bags(const Settings& s, std::ostream& out, std::ostream&) {
  const IdxImages pool = load_idx_images(s.required("images"), s.required("labels"));
  DigitBagConfig c;
  c.target_digit = static_cast<int>(s.size("target-digit", 9));
  c.n_bags = s.size("n-bags", c.n_bags);
  c.min_bag_size = s.size("min-instances", c.min_bag_size);
  c.max_bag_size = s.size("max-instances", c.max_bag_size);
  c.seed = resolve_seed(s);
  const Dataset data = build_digit_bags(pool, c);
  std::ostringstream csv;
  write_csv(data, csv);
  emit(s, out, csv.str());
  return 0;
}

int cmd_export(const Settings& s, std::ostream& out, std::ostream&) {
  const Checkpoint ckpt = load_checkpoint(s.required("checkpoint"));
  std::optional<std::size_t> side;
  if (s.has("image-side")) side = s.size("image-side", 0);
  const auto files = export_prototypes(ckpt.params, ckpt.aggregators, s.required("out"), side);
  for (const auto& f : files) out << f.string() << '\n';
  return 0;
}

int cmd_gradcheck(const Settings& s, std::ostream& out, std::ostream&) {
  Hyperparams hyper = resolve_hyperparams(s);
  const double h = s.real("step", 1e-5);
  const double tol = s.real("tol", 1e-4);
  if (!(h > 0.0)) throw UsageError("--step must be positive");
  const Dataset data = load_data(s);
  const std::uint64_t seed = resolve_seed(s);

  // Random parameters near the data: sampled instances plus unit noise, so no
  // prototype coincides with an instance.
  Rng rng(derive_seed(seed, {stream::kInit}));
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams params = make_params(
      init_prototypes(data, hyper.prototype_count, InitStrategy::kSampleInstances,
                      derive_seed(seed, {stream::kInit, 1})),
      hyper.aggregators);
  for (double& v : params.prototypes.values()) v += normal(rng);
  for (double& v : params.beta) v = normal(rng);
  params.beta0 = normal(rng);

  std::array<GradCheckBlock, 3> total;
  for (std::size_t b = 0; b < 3; ++b) total[b].name = std::array{"prototypes", "beta", "beta0"}[b];
  for (const Bag& bag : data.bags()) {
    const GradCheckReport r = grad_check(params, bag, bag.label, hyper, h, tol);
    for (std::size_t b = 0; b < 3; ++b) {
      total[b].max_rel_error = std::max(total[b].max_rel_error, r.blocks[b].max_rel_error);
      total[b].checked += r.blocks[b].checked;
      total[b].near_tie += r.blocks[b].near_tie;
      total[b].failures += r.blocks[b].failures;
    }
  }
  bool ok = true;
  for (const auto& b : total) {
    out << b.name << ": checked=" << b.checked << " near-tie=" << b.near_tie
        << " failures=" << b.failures << " max_rel_error=" << format_double(b.max_rel_error)
        << '\n';
    ok = ok && b.failures == 0;
  }
  const std::string tol_text = s.str("tol", "1e-4");
  if (ok) {
    out << "all blocks pass tol=" << tol_text << '\n';
    return 0;
  }
  out << "gradient check FAILED tol=" << tol_text << '\n';
  return 1;
}

std::vector<Command> make_commands() {
  std::vector<Command> cmds;
  cmds.push_back({"cv", "Repeated stratified k-fold cross-validation; prints a JSON report",
                  with_hyper({"data", "seed", "k", "repeats", "standardize", "jobs", "out"}),
                  {{"out", "Also write the JSON report to this file"}},
                  cmd_cv});
  cmds.push_back({"train", "Train on a bag CSV and write a checkpoint",
                  with_hyper({"data", "seed", "out"}),
                  {{"out", "Checkpoint file to write (required)"}},
                  cmd_train});
  cmds.push_back({"predict", "Per-bag probabilities as bag_id,probability,predicted_label CSV",
                  {"checkpoint", "data", "out"},
                  {{"out", "CSV file to write (default: stdout)"}},
                  cmd_predict});
  cmds.push_back({"gen-synth", "Generate a synthetic witness-bag dataset as bag CSV",
                  {"n-bags", "min-instances", "max-instances", "features", "witness-rate",
                   "separation", "seed", "out"},
                  {{"out", "CSV file to write (default: stdout)"}},
                  cmd_gen_synth});
  cmds.push_back({"mnist-bags", "Build digit-presence bags from MNIST IDX files as bag CSV",
                  {"images", "labels", "target-digit", "n-bags", "min-instances", "max-instances",
                   "seed", "out"},
                  {{"out", "CSV file to write (default: stdout)"},
                   {"min-instances", "Minimum images per bag (default 5)"},
                   {"max-instances", "Maximum images per bag (default 15)"}},
                  cmd_mnist_bags});
  cmds.push_back({"export", "Export prototypes (CSV, optional PGM) and weights (JSON)",
                  {"checkpoint", "out", "image-side"},
                  {{"out", "Output directory (required)"}},
                  cmd_export});
  cmds.push_back({"gradcheck",
                  "Compare analytic gradients with central differences on every bag",
                  with_hyper({"data", "seed", "step", "tol"}),
                  {},
                  cmd_gradcheck});
  return cmds;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"protomil: multiple-instance learning with learned prototypes", "protomil"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  std::vector<Command> commands = make_commands();
  // CLI11 binds to stable storage; one string per (command, option).
  std::vector<std::map<std::string, std::string>> raw(commands.size());
  std::vector<std::map<std::string, CLI::Option*>> bound(commands.size());
  std::vector<std::string> config_paths(commands.size());
  std::vector<CLI::App*> subs;

  for (std::size_t c = 0; c < commands.size(); ++c) {
    Command& cmd = commands[c];
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
    subs.push_back(sub);
    for (const std::string& name : cmd.options) {
      const OptionSpec& spec = option_spec(name);
      auto override_it = cmd.help_overrides.find(name);
      const std::string help =
          override_it != cmd.help_overrides.end() ? override_it->second : std::string(spec.help);
      if (spec.is_flag) {
        bound[c][name] = sub->add_flag("--" + name, help);
      } else {
        bound[c][name] =
            sub->add_option("--" + name, raw[c][name], help)->type_name(std::string(spec.type));
      }
    }
    sub->add_option("--config", config_paths[c],
                    "JSON file of option values (keys are the long option names); command-line "
                    "flags take precedence")
        ->type_name("PATH");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  for (std::size_t c = 0; c < commands.size(); ++c) {
    if (!subs[c]->parsed()) continue;
    const Command& cmd = commands[c];
    try {
      Settings settings;
      if (!config_paths[c].empty()) settings = load_config_file(config_paths[c], cmd);
      for (const auto& [name, opt] : bound[c]) {
        if (opt->count() == 0) continue;
        settings.set(name, option_spec(name).is_flag ? "true" : raw[c][name]);
      }
      return cmd.run(settings, out, err);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace protomil::cli
