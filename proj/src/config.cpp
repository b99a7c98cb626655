#include "psnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace psnet {
namespace {

const std::set<std::string, std::less<>>& path_keys() {
  static const std::set<std::string, std::less<>> keys = {"train_images", "train_labels",   "test_images",
                                                          "test_labels",  "train_features", "test_features",
                                                          "output_dir"};
  return keys;
}

const KeyValues& defaults() {
  static const KeyValues d = {
      {"variant", "progressive"}, {"input_dim", "784"}, {"hidden", "128"},   {"layers", "6"},
      {"classes", "10"},          {"dropout", "0.2"},   {"optimizer", "sgd"}, {"lr", "0.001"},
      {"momentum", "0.9"},        {"beta1", "0.9"},     {"beta2", "0.999"},   {"eps", "1e-8"},
      {"scheduler", "none"},      {"step_size", "7"},   {"gamma", "0.1"},     {"batch_size", "100"},
      {"epochs", "50"},           {"seed", "1"},        {"loss", "nll"},      {"eval_every", "1"},
      {"precision", "32"},        {"train_images", ""}, {"train_labels", ""}, {"test_images", ""},
      {"test_labels", ""},        {"train_features", ""}, {"test_features", ""}, {"standardize", "false"},
      {"output_dir", "runs"},
  };
  return d;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void check_key(std::string_view key) {
  if (!defaults().contains(std::string(key))) {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

template <typename T>
T parse_number(const KeyValues& kv, const std::string& key) {
  const std::string& s = kv.at(key);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + s + "'");
  }
  return value;
}

bool parse_bool(const KeyValues& kv, const std::string& key) {
  const std::string& s = kv.at(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + s + "'");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

KeyValues parse_config_text(std::string_view text, const std::filesystem::path& base_dir) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(s.substr(0, eq)));
    std::string value(trim(s.substr(eq + 1)));
    check_key(key);
    if (kv.contains(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    if (path_keys().contains(key) && !value.empty() && !base_dir.empty() && std::filesystem::path(value).is_relative()) {
      value = (base_dir / value).lexically_normal().string();
    }
    kv[key] = value;
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config file " + path.string());
  }
  std::stringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.parent_path());
}

void apply_override(KeyValues& kv, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(trim(assignment.substr(0, eq)));
  check_key(key);
  kv[key] = std::string(trim(assignment.substr(eq + 1)));
}

RunConfig resolve_config(const KeyValues& given) {
  for (const auto& [key, value] : given) check_key(key);
  KeyValues kv = defaults();
  for (const auto& [key, value] : given) kv[key] = value;

  RunConfig c;
  c.head.variant = parse_variant(kv.at("variant"));
  c.head.input_dim = parse_number<Index>(kv, "input_dim");
  c.head.hidden = parse_number<Index>(kv, "hidden");
  c.head.depth = parse_number<Index>(kv, "layers");
  c.head.classes = parse_number<Index>(kv, "classes");
  c.head.dropout = parse_number<double>(kv, "dropout");
  c.head.validate();

  auto& t = c.train;
  t.optimizer.kind = parse_optimizer(kv.at("optimizer"));
  t.optimizer.lr = parse_number<double>(kv, "lr");
  t.optimizer.momentum = parse_number<double>(kv, "momentum");
  t.optimizer.beta1 = parse_number<double>(kv, "beta1");
  t.optimizer.beta2 = parse_number<double>(kv, "beta2");
  t.optimizer.eps = parse_number<double>(kv, "eps");
  const std::string& scheduler = kv.at("scheduler");
  if (scheduler == "steplr") {
    t.schedule = StepLR{t.optimizer.lr, parse_number<int>(kv, "step_size"), parse_number<double>(kv, "gamma")};
  } else if (scheduler != "none") {
    throw ConfigError("unknown scheduler '" + scheduler + "' (expected none or steplr)");
  }
  t.batch_size = parse_number<Index>(kv, "batch_size");
  t.epochs = parse_number<int>(kv, "epochs");
  t.seed = parse_number<std::uint64_t>(kv, "seed");
  t.eval_every = parse_number<int>(kv, "eval_every");
  if (kv.at("loss") != "nll" && kv.at("loss") != "crossentropy") {
    throw ConfigError("unsupported loss '" + kv.at("loss") + "' (nll and crossentropy are the same op)");
  }
  t.validate();

  c.precision = parse_number<int>(kv, "precision");
  if (c.precision != 32 && c.precision != 64) {
    throw ConfigError("precision must be 32 or 64");
  }
  c.standardize = parse_bool(kv, "standardize");
  c.output_dir = kv.at("output_dir");
  c.data = {kv.at("train_images"), kv.at("train_labels"), kv.at("test_images"),  kv.at("test_labels"),
            kv.at("train_features"), kv.at("test_features")};
  return c;
}

std::string canonical_text(const RunConfig& c) {
  KeyValues kv;
  kv["variant"] = std::string(to_string(c.head.variant));
  kv["input_dim"] = std::to_string(c.head.input_dim);
  kv["hidden"] = std::to_string(c.head.hidden);
  kv["layers"] = std::to_string(c.head.depth);
  kv["classes"] = std::to_string(c.head.classes);
  kv["dropout"] = num(c.head.dropout);
  kv["optimizer"] = std::string(to_string(c.train.optimizer.kind));
  kv["lr"] = num(c.train.optimizer.lr);
  kv["momentum"] = num(c.train.optimizer.momentum);
  kv["beta1"] = num(c.train.optimizer.beta1);
  kv["beta2"] = num(c.train.optimizer.beta2);
  kv["eps"] = num(c.train.optimizer.eps);
  kv["scheduler"] = c.train.schedule ? "steplr" : "none";
  if (c.train.schedule) {
    kv["step_size"] = std::to_string(c.train.schedule->step_size);
    kv["gamma"] = num(c.train.schedule->gamma);
  }
  kv["batch_size"] = std::to_string(c.train.batch_size);
  kv["epochs"] = std::to_string(c.train.epochs);
  kv["seed"] = std::to_string(c.train.seed);
  kv["loss"] = "nll";
  kv["eval_every"] = std::to_string(c.train.eval_every);
  kv["precision"] = std::to_string(c.precision);
  kv["standardize"] = c.standardize ? "true" : "false";
  kv["train_images"] = c.data.train_images;
  kv["train_labels"] = c.data.train_labels;
  kv["test_images"] = c.data.test_images;
  kv["test_labels"] = c.data.test_labels;
  kv["train_features"] = c.data.train_features;
  kv["test_features"] = c.data.test_features;
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::filesystem::path run_directory(const RunConfig& c) {
  char name[64];
  std::snprintf(name, sizeof name, "run-%016llx-s%llu", static_cast<unsigned long long>(fnv1a64(canonical_text(c))),
                static_cast<unsigned long long>(c.train.seed));
  return std::filesystem::path(c.output_dir) / name;
}

} // namespace psnet
