#include "psnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "psnet/errors.hpp"

namespace psnet {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

std::uint16_t read_le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_le32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}

void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

} // namespace

void Dataset::validate() const {
  if (features.rows() < 1 || static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DataError("dataset '" + name + "': " + std::to_string(features.rows()) + " feature rows vs " +
                    std::to_string(labels.size()) + " labels");
  }
  for (Label y : labels) {
    if (y < 0 || y >= n_classes) {
      throw DataError("dataset '" + name + "': label " + std::to_string(y) + " outside [0, " +
                      std::to_string(n_classes) + ")");
    }
  }
}

Dataset Dataset::head(Index n) const {
  n = std::min(n, size());
  Dataset out;
  out.features = features.topRows(n);
  out.labels.assign(labels.begin(), labels.begin() + n);
  out.n_classes = n_classes;
  out.name = name;
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(probe)), std::istreambuf_iterator<char>());
  if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) {
    return raw;
  }

  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) {
    throw IoError("zlib init failed for " + path.string());
  }
  zs.next_in = raw.data();
  zs.avail_in = static_cast<uInt>(raw.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("corrupt or truncated gzip stream in " + path.string());
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IoError("truncated gzip stream in " + path.string());
    }
  }
  inflateEnd(&zs);
  return out;
}

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  if (images.size() < 16) throw IoError("IDX image file truncated in header");
  if (labels.size() < 8) throw IoError("IDX label file truncated in header");
  const std::uint32_t image_magic = read_be32(images, 0);
  if (image_magic != kIdxImageMagic) {
    throw FormatError("IDX image magic: expected " + hex32(kIdxImageMagic) + " (2051), got " + hex32(image_magic));
  }
  const std::uint32_t label_magic = read_be32(labels, 0);
  if (label_magic != kIdxLabelMagic) {
    throw FormatError("IDX label magic: expected " + hex32(kIdxLabelMagic) + " (2049), got " + hex32(label_magic));
  }
  const std::size_t n = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t n_labels = read_be32(labels, 4);
  if (n != n_labels) {
    throw DataError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows * cols == 0) {
    throw DataError("IDX file declares an empty dataset");
  }
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + n * dim) {
    throw IoError("IDX image file truncated: need " + std::to_string(16 + n * dim) + " bytes, have " +
                  std::to_string(images.size()));
  }
  if (labels.size() < 8 + n) {
    throw IoError("IDX label file truncated: need " + std::to_string(8 + n) + " bytes, have " +
                  std::to_string(labels.size()));
  }

  Dataset ds;
  ds.features.resize(static_cast<Index>(n), static_cast<Index>(dim));
  const std::uint8_t* px = images.data() + 16;
  float* dst = ds.features.data();
  for (std::size_t i = 0; i < n * dim; ++i) {
    dst[i] = static_cast<float>(px[i]) / 255.0f;
  }
  ds.labels.resize(n);
  Label max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = labels[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.n_classes = std::max<Index>(10, max_label + 1);
  ds.name = "idx";
  return ds;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_file_bytes(images_path);
  const auto labels = read_file_bytes(labels_path);
  Dataset ds = parse_idx(images, labels);
  ds.name = images_path.filename().string();
  return ds;
}

std::vector<std::uint8_t> encode_features(const Dataset& ds) {
  ds.validate();
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  std::vector<std::uint8_t> out;
  out.reserve(kPsnfHeaderBytes + static_cast<std::size_t>(ds.features.size() + ds.size()) * 4);
  for (char c : {'P', 'S', 'N', 'F'}) out.push_back(static_cast<std::uint8_t>(c));
  put_le16(out, kPsnfVersion);
  put_le32(out, static_cast<std::uint32_t>(ds.size()));
  put_le32(out, static_cast<std::uint32_t>(ds.dim()));
  put_le32(out, static_cast<std::uint32_t>(ds.n_classes));
  const float* f = ds.features.data();
  for (Index i = 0; i < ds.features.size(); ++i) {
    put_le32(out, std::bit_cast<std::uint32_t>(f[i]));
  }
  for (Label y : ds.labels) {
    put_le32(out, static_cast<std::uint32_t>(y));
  }
  return out;
}

Dataset decode_features(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPsnfHeaderBytes) {
    throw FormatError("PSNF: file shorter than the " + std::to_string(kPsnfHeaderBytes) + "-byte header");
  }
  if (std::memcmp(bytes.data(), "PSNF", 4) != 0) {
    throw FormatError("PSNF: bad magic");
  }
  const std::uint16_t version = read_le16(bytes, 4);
  if (version != kPsnfVersion) {
    throw FormatError("PSNF: unsupported version " + std::to_string(version));
  }
  const std::uint64_t n = read_le32(bytes, 6);
  const std::uint64_t dim = read_le32(bytes, 10);
  const std::uint64_t classes = read_le32(bytes, 14);
  const std::uint64_t expected = kPsnfHeaderBytes + n * dim * 4 + n * 4;
  if (n == 0 || dim == 0 || bytes.size() != expected) {
    throw FormatError("PSNF: header declares n=" + std::to_string(n) + " D=" + std::to_string(dim) + " (" +
                      std::to_string(expected) + " bytes) but file has " + std::to_string(bytes.size()) + " bytes");
  }
  Dataset ds;
  ds.features.resize(static_cast<Index>(n), static_cast<Index>(dim));
  float* f = ds.features.data();
  std::size_t at = kPsnfHeaderBytes;
  for (std::uint64_t i = 0; i < n * dim; ++i, at += 4) {
    f[i] = std::bit_cast<float>(read_le32(bytes, at));
  }
  ds.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i, at += 4) {
    ds.labels[i] = static_cast<Label>(read_le32(bytes, at));
  }
  ds.n_classes = static_cast<Index>(classes);
  ds.name = "psnf";
  try {
    ds.validate();
  } catch (const DataError& e) {
    throw FormatError(std::string("PSNF: ") + e.what());
  }
  return ds;
}

Dataset load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Dataset ds = decode_features(bytes);
  ds.name = path.filename().string();
  return ds;
}

void save_features(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_features(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

Standardizer Standardizer::fit(const Dataset& ds) {
  const auto values = ds.features.cast<double>().array();
  Standardizer s;
  s.mean = values.mean();
  s.stddev = std::sqrt((values - s.mean).square().mean());
  if (!(s.stddev > 0.0)) s.stddev = 1.0;
  return s;
}

void Standardizer::apply(Dataset& ds) const {
  ds.features = ((ds.features.cast<double>().array() - mean) / stddev).cast<float>().matrix();
}

std::size_t BatchPlan::batch_count() const {
  const auto b = static_cast<std::size_t>(batch_size);
  return (order.size() + b - 1) / b;
}

std::span<const std::size_t> BatchPlan::batch(std::size_t k) const {
  const auto b = static_cast<std::size_t>(batch_size);
  const std::size_t begin = k * b;
  const std::size_t end = std::min(order.size(), begin + b);
  return std::span<const std::size_t>(order).subspan(begin, end - begin);
}

BatchPlan make_batches(std::size_t n, Index batch_size, Rng& rng) {
  if (batch_size < 1) {
    throw ConfigError("batch_size must be >= 1");
  }
  return BatchPlan{batch_size, rng.permutation(n)};
}

Batch gather(const Dataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  b.features.resize(static_cast<Index>(rows.size()), ds.dim());
  b.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.features.row(static_cast<Index>(i)) = ds.features.row(static_cast<Index>(rows[i]));
    b.labels[i] = ds.labels[rows[i]];
  }
  return b;
}

} // namespace psnet
