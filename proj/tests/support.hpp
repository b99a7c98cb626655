#pragma once

#include <filesystem>
#include <string>

#include "psnet/data.hpp"
#include "psnet/random.hpp"

namespace psnet::testing {

inline std::filesystem::path data_dir() { return PSNET_TEST_DATA; }

inline Dataset mnist64() {
  Dataset ds = load_idx(data_dir() / "mnist64-images-idx3-ubyte", data_dir() / "mnist64-labels-idx1-ubyte");
  ds.name = "mnist64";
  return ds;
}

/// Gaussian blobs: class c is centred at `separation` times the c-th unit vector, with
/// unit-variance isotropic noise. Classes are balanced in round-robin order.
inline Dataset gaussian_blobs(Index n, Index dim, Index classes, double separation, Rng& rng) {
  Dataset ds;
  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.n_classes = classes;
  for (Index i = 0; i < n; ++i) {
    const auto c = static_cast<Label>(i % classes);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (Index j = 0; j < dim; ++j) {
      ds.features(i, j) = static_cast<float>(rng.normal() + (j == c ? separation : 0.0));
    }
  }
  ds.name = "blobs";
  return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "psnet_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

} // namespace psnet::testing
