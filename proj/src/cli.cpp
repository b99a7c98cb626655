#include "psnet/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "psnet/config.hpp"
#include "psnet/data.hpp"
#include "psnet/errors.hpp"
#include "psnet/gradcheck.hpp"
#include "psnet/heads.hpp"
#include "psnet/train.hpp"

namespace psnet {
namespace {

namespace fs = std::filesystem;

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string grouped(Index n) {
  std::string s = std::to_string(n);
  for (auto i = static_cast<std::ptrdiff_t>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  KeyValues kv;
  if (!config_path.empty()) kv = read_config_file(config_path);
  for (const auto& o : overrides) apply_override(kv, o);
  return resolve_config(kv);
}

struct Datasets {
  Dataset train;
  Dataset test;
  std::optional<Standardizer> standardizer;
};

Datasets load_datasets(const RunConfig& c) {
  const DataSource& d = c.data;
  Datasets out;
  if (d.uses_features()) {
    if (d.train_features.empty() || d.test_features.empty()) {
      throw ConfigError("both train_features and test_features are required");
    }
    out.train = load_features(d.train_features);
    out.test = load_features(d.test_features);
  } else {
    if (d.train_images.empty() || d.train_labels.empty() || d.test_images.empty() || d.test_labels.empty()) {
      throw ConfigError("config needs train_images, train_labels, test_images, test_labels (or *_features)");
    }
    out.train = load_idx(d.train_images, d.train_labels);
    out.test = load_idx(d.test_images, d.test_labels);
  }
  if (c.standardize) {
    const Standardizer s = Standardizer::fit(out.train);
    s.apply(out.train);
    s.apply(out.test);
    out.standardizer = s;
  }
  return out;
}

struct RunOutcome {
  double best_test_acc = 0.0;
  int best_epoch = 0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
};

template <typename Scalar>
RunOutcome train_one(const RunConfig& c, const Datasets& data, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.resolved");
    cfg << canonical_text(c);
  }
  Rng init = Rng(c.train.seed).substream(Stream::Init);
  Head<Scalar> head = Head<Scalar>::build(c.head, init);
  MetricsCsv metrics(dir / "metrics.csv");
  auto result = fit(head, data.train, data.test, c.train, &metrics);
  save_checkpoint(result.best, dir / "best.psnc");
  save_checkpoint(head, dir / "last.psnc");
  const auto& last = result.metrics.back();
  return {result.best_test_acc, result.best_epoch, last.train_acc, last.test_acc.value_or(0.0)};
}

RunOutcome train_at_precision(const RunConfig& c, const Datasets& data, const fs::path& dir) {
  return c.precision == 64 ? train_one<double>(c, data, dir) : train_one<float>(c, data, dir);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out) {
  const RunConfig c = load_run_config(config_path, overrides);
  const Datasets data = load_datasets(c);
  check_fit_inputs(c.head, data.train, data.test);
  const fs::path dir = run_directory(c);
  const RunOutcome r = train_at_precision(c, data, dir);
  out << "run_dir=" << dir.string() << "\n";
  out << "best_epoch=" << r.best_epoch << "\n";
  out << "best_test_acc=" << fixed6(r.best_test_acc) << "\n";
  if (data.standardizer) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "standardize_mean=%.9g standardize_std=%.9g\n", data.standardizer->mean,
                  data.standardizer->stddev);
    out << buf;
  }
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, images, labels, features;
  Index batch_size = 1000;
  std::optional<double> mean, stddev;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Head<float> head = load_checkpoint<float>(a.checkpoint);
  Dataset ds;
  if (!a.features.empty()) {
    ds = load_features(a.features);
  } else if (!a.images.empty() && !a.labels.empty()) {
    ds = load_idx(a.images, a.labels);
  } else {
    throw ConfigError("eval needs --features or both --images and --labels");
  }
  if (a.mean || a.stddev) {
    Standardizer{a.mean.value_or(0.0), a.stddev.value_or(1.0)}.apply(ds);
  }
  if (ds.dim() != head.config().input_dim) {
    throw DataError("dataset D=" + std::to_string(ds.dim()) + " does not match checkpoint D=" +
                    std::to_string(head.config().input_dim));
  }
  const Label max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
  if (max_label >= head.config().classes) {
    throw DataError("dataset label " + std::to_string(max_label) + " exceeds checkpoint classes=" +
                    std::to_string(head.config().classes));
  }
  const EvalResult r = evaluate(head, ds, a.batch_size);
  out << "test_acc=" << fixed6(r.accuracy) << " test_loss=" << fixed6(r.mean_loss) << "\n";
  return kExitOk;
}

int cmd_params(const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out) {
  const RunConfig c = load_run_config(config_path, overrides);
  const std::vector<Variant> variants = {Variant::Plain, Variant::Spinal, Variant::Progressive};
  std::vector<std::optional<HeadConfig>> configs;
  for (Variant v : variants) {
    HeadConfig h = c.head;
    h.variant = v;
    try {
      h.validate();
      configs.emplace_back(h);
    } catch (const ConfigError&) {
      configs.emplace_back(std::nullopt);
    }
  }
  auto cell = [](Index in, Index outd) {
    return std::to_string(in) + "x" + std::to_string(outd) + " (" + grouped(in * outd + outd) + ")";
  };
  const int w = 24;
  out << "D=" << c.head.input_dim << " H=" << c.head.hidden << " L=" << c.head.depth << " C=" << c.head.classes
      << "\n";
  out << std::left << std::setw(12) << "layer";
  for (Variant v : variants) out << std::setw(w) << to_string(v);
  out << "\n";
  for (Index k = 0; k < c.head.depth; ++k) {
    out << std::setw(12) << ("hidden" + std::to_string(k + 1));
    for (const auto& h : configs) out << std::setw(w) << (h ? cell(hidden_in_dim(*h, k), h->hidden) : "n/a");
    out << "\n";
  }
  out << std::setw(12) << "classifier";
  for (const auto& h : configs) out << std::setw(w) << (h ? cell(classifier_in_dim(*h), h->classes) : "n/a");
  out << "\n" << std::setw(12) << "total";
  for (const auto& h : configs) out << std::setw(w) << (h ? grouped(param_count(*h)) : "n/a");
  out << "\n" << std::right;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (configs[i]) out << "params_" << to_string(variants[i]) << "=" << param_count(*configs[i]) << "\n";
  }
  return kExitOk;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& variant_list, std::ostream& out) {
  const RunConfig base = load_run_config(config_path, overrides);
  std::vector<Variant> variants;
  for (const auto& name : split_list(variant_list)) {
    const Variant v = parse_variant(name);
    if (std::find(variants.begin(), variants.end(), v) != variants.end()) {
      throw ConfigError("variant '" + name + "' listed twice");
    }
    variants.push_back(v);
  }
  if (variants.size() < 2) {
    throw ConfigError("compare needs at least two distinct variants");
  }
  std::vector<RunConfig> configs;
  for (Variant v : variants) {
    RunConfig c = base;
    c.head.variant = v;
    c.head.validate();
    configs.push_back(c);
  }
  const Datasets data = load_datasets(base);
  check_fit_inputs(base.head, data.train, data.test);
  const fs::path dir = run_directory(base).concat("-compare");

  std::vector<RunOutcome> outcomes(variants.size());
  std::vector<std::exception_ptr> errors(variants.size());
  {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          outcomes[i] = train_at_precision(configs[i], data, dir / std::string(to_string(variants[i])));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream csv(dir / "compare.csv");
  csv << "variant,params,best_test_acc,epochs_to_best,final_train_acc\n";
  out << "run_dir=" << dir.string() << "\n";
  out << std::left << std::setw(14) << "variant" << std::right << std::setw(12) << "params" << std::setw(16)
      << "best_test_acc" << std::setw(16) << "epochs_to_best" << std::setw(18) << "final_train_acc" << "\n";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& r = outcomes[i];
    const Index n = param_count(configs[i].head);
    out << std::left << std::setw(14) << to_string(variants[i]) << std::right << std::setw(12) << n << std::setw(16)
        << fixed6(r.best_test_acc) << std::setw(16) << r.best_epoch << std::setw(18) << fixed6(r.final_train_acc)
        << "\n";
    csv << to_string(variants[i]) << "," << n << "," << fixed6(r.best_test_acc) << "," << r.best_epoch << ","
        << fixed6(r.final_train_acc) << "\n";
  }
  return kExitOk;
}

struct GradcheckArgs {
  std::string variant = "all";
  Index input_dim = 12, hidden = 6, layers = 3, classes = 4, batch = 3;
  double tolerance = kDefaultGradTolerance;
  std::uint64_t seed = 7;
  std::string csv;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<Variant> variants;
  if (a.variant == "all") {
    variants = {Variant::Plain, Variant::Spinal, Variant::Progressive};
  } else {
    variants = {parse_variant(a.variant)};
  }
  std::ofstream csv;
  if (!a.csv.empty()) {
    csv.open(a.csv);
    if (!csv) throw IoError("cannot write " + a.csv);
  }
  bool pass = true;
  for (Variant v : variants) {
    const HeadConfig h{v, a.input_dim, a.hidden, a.layers, a.classes, 0.0};
    GradcheckOptions opt;
    opt.batch = a.batch;
    opt.tolerance = a.tolerance;
    opt.seed = a.seed;
    const GradReport report = check_head(h, opt);
    print_report(out, report);
    if (csv.is_open()) write_report_csv(csv, report);
    pass = pass && report.pass;
  }
  return pass ? kExitOk : kExitFailure;
}

} // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  return kExitFailure;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense classification heads: train, evaluate, count parameters, compare, gradient-check"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->add_option("-o,--override", overrides, "key=value, applied after the config file")->take_all();
  };

  auto* train = app.add_subcommand("train", "train one head and keep the best-epoch checkpoint");
  add_config(train);

  EvalArgs eval_args;
  std::optional<double> mean, stddev;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_args.checkpoint, "PSNC checkpoint")->required();
  eval->add_option("--images", eval_args.images, "IDX images");
  eval->add_option("--labels", eval_args.labels, "IDX labels");
  eval->add_option("--features", eval_args.features, "PSNF feature file");
  eval->add_option("--batch-size", eval_args.batch_size);
  eval->add_option("--mean", mean, "subtract before evaluating (standardized runs)");
  eval->add_option("--std", stddev, "divide by after subtracting the mean");

  auto* params = app.add_subcommand("params", "per-layer parameter table for every variant");
  add_config(params);

  std::string variant_list;
  auto* compare = app.add_subcommand("compare", "train several variants with the same seed and budget");
  add_config(compare);
  compare->add_option("--variants", variant_list, "comma-separated, e.g. progressive,plain")->required();

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of head gradients");
  gradcheck->add_option("--variant", ga.variant, "plain, spinal, progressive or all");
  gradcheck->add_option("--input-dim", ga.input_dim);
  gradcheck->add_option("--hidden", ga.hidden);
  gradcheck->add_option("--layers", ga.layers);
  gradcheck->add_option("--classes", ga.classes);
  gradcheck->add_option("--batch", ga.batch);
  gradcheck->add_option("--tolerance", ga.tolerance);
  gradcheck->add_option("--seed", ga.seed);
  gradcheck->add_option("--csv", ga.csv, "also write the report as CSV");

  std::vector<std::string> argv_storage = {"psnet"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, out);
    if (*eval) {
      eval_args.mean = mean;
      eval_args.stddev = stddev;
      return cmd_eval(eval_args, out);
    }
    if (*params) return cmd_params(config_path, overrides, out);
    if (*compare) return cmd_compare(config_path, overrides, variant_list, out);
    if (*gradcheck) return cmd_gradcheck(ga, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitFailure;
}

} // namespace psnet
