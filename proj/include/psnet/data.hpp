#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "psnet/linalg.hpp"
#include "psnet/nn.hpp"
#include "psnet/random.hpp"

namespace psnet {

/// Features are stored at 32-bit regardless of compute precision.
struct Dataset {
  Matrix<float> features;
  std::vector<Label> labels;
  Index n_classes = 0;
  std::string name;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  /// Throws DataError unless rows match labels and every label lies in [0, n_classes).
  void validate() const;

  /// First n rows, in order.
  Dataset head(Index n) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803; // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801; // 2049

/// Reads a whole file, transparently inflating gzip input (magic 1f 8b).
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Parses an IDX image/label pair. Pixels are scaled to [0, 1] by /255.
/// The class count is max(label) + 1, and never below 10.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// PSNF feature file layout (little-endian):
///   "PSNF" | u16 version=1 | u32 n | u32 D | u32 n_classes | n*D f32 row-major | n u32 labels
inline constexpr std::uint16_t kPsnfVersion = 1;
inline constexpr std::size_t kPsnfHeaderBytes = 4 + 2 + 4 + 4 + 4;

std::vector<std::uint8_t> encode_features(const Dataset& ds);
Dataset decode_features(std::span<const std::uint8_t> bytes);
Dataset load_features(const std::filesystem::path& path);
void save_features(const Dataset& ds, const std::filesystem::path& path);

/// Scalar mean/std of all feature values; used by the optional standardization.
struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;

  static Standardizer fit(const Dataset& ds);
  void apply(Dataset& ds) const;
};

/// One epoch's shuffled order, cut into consecutive batches. The last batch may be short.
struct BatchPlan {
  Index batch_size = 1;
  std::vector<std::size_t> order;

  std::size_t batch_count() const;
  std::span<const std::size_t> batch(std::size_t k) const;
};

BatchPlan make_batches(std::size_t n, Index batch_size, Rng& rng);

struct Batch {
  Matrix<float> features;
  std::vector<Label> labels;
};

/// Gathers the given rows of a dataset.
Batch gather(const Dataset& ds, std::span<const std::size_t> rows);

/// Calls fn(const Batch&) for every batch of the plan, in order.
template <typename Fn>
void iterate(const Dataset& ds, const BatchPlan& plan, Fn&& fn) {
  for (std::size_t k = 0; k < plan.batch_count(); ++k) {
    fn(gather(ds, plan.batch(k)));
  }
}

} // namespace psnet
