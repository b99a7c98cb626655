#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "psnet/heads.hpp"
#include "psnet/train.hpp"

namespace psnet {

/// Flat `key = value` configuration. `#` starts a comment; blank lines are ignored.
///
/// Recognised keys (defaults in parentheses):
///   variant (progressive)  input_dim (784)  hidden (128)  layers (6)  classes (10)  dropout (0.2)
///   optimizer (sgd)  lr (0.001)  momentum (0.9)  beta1 (0.9)  beta2 (0.999)  eps (1e-8)
///   scheduler (none | steplr)  step_size (7)  gamma (0.1)
///   batch_size (100)  epochs (50)  seed (1)  loss (nll)  eval_every (1)  precision (32 | 64)
///   train_images  train_labels  test_images  test_labels   IDX inputs, optionally gzipped
///   train_features  test_features                          PSNF inputs (instead of IDX)
///   standardize (false)  output_dir (runs)
///
/// Relative paths in a file resolve against that file's directory; relative paths given as
/// overrides resolve against the working directory.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_text(std::string_view text, const std::filesystem::path& base_dir = {});
KeyValues read_config_file(const std::filesystem::path& path);

/// Applies one `key=value` override; overrides win over file values.
void apply_override(KeyValues& kv, std::string_view assignment);

struct DataSource {
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_features, test_features;

  bool uses_features() const { return !train_features.empty() || !test_features.empty(); }
};

struct RunConfig {
  HeadConfig head;
  TrainConfig train;
  DataSource data;
  std::string output_dir = "runs";
  int precision = 32;
  bool standardize = false;
};

/// Parses and validates every value; unknown keys are a ConfigError naming the key.
RunConfig resolve_config(const KeyValues& kv);

/// Sorted `key=value` lines of every resolved setting except output_dir.
std::string canonical_text(const RunConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);

/// <output_dir>/run-<16 hex digits of the config hash>-s<seed>
std::filesystem::path run_directory(const RunConfig& config);

} // namespace psnet
